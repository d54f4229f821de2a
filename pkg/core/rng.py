"""Counter-based random streams.

A stream is the triple (master_seed, stream_id, counter). The pair
(master_seed, stream_id) keys a Philox generator and the counter selects an
independent substream of it, so a stream can be replayed from any worker
without shared state.
"""

from typing import Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

UINT64_LIMIT = 2**64


class RngStream(BaseModel):
    """Addressable random stream."""

    model_config = ConfigDict(frozen=True)

    master_seed: int = Field(ge=0, lt=UINT64_LIMIT)
    stream_id: int = Field(default=0, ge=0, lt=UINT64_LIMIT)
    counter: int = Field(default=0, ge=0, lt=UINT64_LIMIT)

    def generator(self) -> np.random.Generator:
        """Build the numpy generator for this stream.

        Returns:
            Generator positioned at the start of the substream
        """
        key = np.array([self.master_seed, self.stream_id], dtype=np.uint64)
        counter = np.array([0, 0, self.counter, 0], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key, counter=counter))

    def at(self, counter: int) -> "RngStream":
        """Return the same stream at another counter."""
        return self.model_copy(update={"counter": counter})

    def spawn(self, stream_id: int) -> "RngStream":
        """Return a sibling stream with another id and a reset counter."""
        return RngStream(master_seed=self.master_seed, stream_id=stream_id, counter=0)


RngLike = Union[RngStream, np.random.Generator]


def as_generator(rng: RngLike) -> np.random.Generator:
    """Accept either an RngStream or a ready numpy Generator.

    Args:
        rng: Stream or generator

    Returns:
        numpy Generator
    """
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError(f"Expected RngStream or numpy Generator, got {type(rng).__name__}")


def derive_seed(master_seed: int, tag: int) -> int:
    """Derive a statistically independent master seed.

    Used for reference batches that must not share randomness with the
    batches they are compared against.

    Args:
        master_seed: Parent seed
        tag: Small integer naming the derived purpose

    Returns:
        64-bit seed
    """
    state = np.random.SeedSequence([master_seed, tag]).generate_state(1, dtype=np.uint64)
    return int(state[0])
