"""Binary and CSV formats for simulated path batches.

Binary layout (all little-endian):
    magic        4 bytes  b"SLPB"
    header       7 x u64  version, n_paths, n_records, dim, n_nodes, master_seed, block_size
    delta        f64
    nodes        n_nodes x f64
    recorded     n_records x u64
    states       n_paths x n_records x dim x f64 (C order)
"""

import logging
from pathlib import Path
from typing import Union

import numpy as np

from core.errors import PathFormatError
from core.models import PathBatch, TimeGrid
from core.utils import write_csv

logger = logging.getLogger(__name__)

MAGIC = b"SLPB"
FORMAT_VERSION = 1
_HEADER = np.dtype("<u8")
_FLOAT = np.dtype("<f8")


def write_path_batch(batch: PathBatch, path: Union[str, Path]) -> Path:
    """Write a PathBatch to the columnar binary format.

    Args:
        batch: Batch to write
        path: Target file

    Returns:
        The path written
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n_paths, n_records, dim = batch.states.shape
    header = np.array(
        [
            FORMAT_VERSION,
            n_paths,
            n_records,
            dim,
            len(batch.grid.nodes),
            batch.master_seed,
            batch.block_size,
        ],
        dtype=_HEADER,
    )
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(header.tobytes())
        f.write(np.array([batch.grid.delta], dtype=_FLOAT).tobytes())
        f.write(np.asarray(batch.grid.nodes, dtype=_FLOAT).tobytes())
        f.write(np.asarray(batch.recorded, dtype=_HEADER).tobytes())
        f.write(np.ascontiguousarray(batch.states, dtype=_FLOAT).tobytes())
    logger.debug("wrote %d paths to %s", n_paths, path)
    return path


def read_path_batch(path: Union[str, Path]) -> PathBatch:
    """Read a PathBatch written by write_path_batch.

    Raises:
        PathFormatError: On a bad magic number, version or truncated file
    """
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise PathFormatError(f"{path} is not a path batch file")
    offset = 4
    header = np.frombuffer(raw, dtype=_HEADER, count=7, offset=offset)
    offset += 7 * _HEADER.itemsize
    version, n_paths, n_records, dim, n_nodes, master_seed, block_size = (int(v) for v in header)
    if version != FORMAT_VERSION:
        raise PathFormatError(f"unsupported format version {version}")
    expected = offset + _FLOAT.itemsize * (1 + n_nodes + n_paths * n_records * dim)
    expected += _HEADER.itemsize * n_records
    if len(raw) != expected:
        raise PathFormatError(f"{path} has {len(raw)} bytes, expected {expected}")

    delta = float(np.frombuffer(raw, dtype=_FLOAT, count=1, offset=offset)[0])
    offset += _FLOAT.itemsize
    nodes = np.frombuffer(raw, dtype=_FLOAT, count=n_nodes, offset=offset)
    offset += _FLOAT.itemsize * n_nodes
    recorded = np.frombuffer(raw, dtype=_HEADER, count=n_records, offset=offset)
    offset += _HEADER.itemsize * n_records
    states = np.frombuffer(raw, dtype=_FLOAT, count=n_paths * n_records * dim, offset=offset)
    return PathBatch(
        states=states.reshape(n_paths, n_records, dim).astype(float),
        grid=TimeGrid(nodes=tuple(float(t) for t in nodes), delta=delta),
        recorded=[int(i) for i in recorded],
        master_seed=master_seed,
        block_size=block_size,
    )


def export_terminal_csv(batch: PathBatch, path: Union[str, Path]) -> int:
    """Write the terminal slice as CSV (path, stream_id, x1..xd).

    Returns:
        Number of data rows
    """
    header = ["path", "stream_id"] + [f"x{j + 1}" for j in range(batch.dim)]
    streams = batch.stream_ids
    rows = (
        [p, int(streams[p])] + [float(v) for v in state]
        for p, state in enumerate(batch.terminal)
    )
    return write_csv(Path(path), header, rows)
