"""File helpers for configs, artifacts and CSV tables.

Everything written here is deterministic: keys are sorted, floats keep
repr precision and line endings are fixed.
"""

import csv
import hashlib
import json
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Sequence, TextIO

import yaml

_LOADERS: Dict[str, Callable[[TextIO], Any]] = {
    ".yaml": yaml.safe_load,
    ".yml": yaml.safe_load,
    ".json": json.load,
}


def _plain(obj: Any) -> Any:
    return obj.model_dump(mode="json") if hasattr(obj, "model_dump") else obj


def load_config(path: Path) -> Dict[str, Any]:
    """Read a YAML or JSON file into a dict.

    An empty file reads as {}.

    Raises:
        FileNotFoundError: If the file does not exist
        ValueError: If the suffix is neither YAML nor JSON
    """
    path = Path(path)
    loader = _LOADERS.get(path.suffix.lower())
    if loader is None:
        raise ValueError(f"unsupported config format {path.suffix!r} ({path})")
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        return loader(f) or {}


def save_artifact(data: Any, path: Path, format: str = "json") -> None:
    """Write a dict, list or pydantic model as sorted JSON or YAML.

    Args:
        data: Artifact to write
        path: Output path, parent directories are created
        format: json or yaml

    Raises:
        ValueError: On an unknown format
    """
    if format not in ("json", "yaml"):
        raise ValueError(f"unsupported artifact format {format!r}")
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = _plain(data)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        if format == "json":
            f.write(json.dumps(payload, indent=2, sort_keys=True, default=str) + "\n")
        else:
            yaml.safe_dump(payload, f, default_flow_style=False, sort_keys=True)


def hash_artifact(obj: Any) -> str:
    """SHA-256 of the canonical JSON form (sorted keys, no whitespace)."""
    canonical = json.dumps(_plain(obj), sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> int:
    """Write an RFC-4180 CSV file.

    Floats are written with repr precision and a '.' decimal separator
    regardless of locale.

    Args:
        path: Output path
        header: Column names
        rows: Row values

    Returns:
        Number of data rows written
    """
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\r\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, float) else v for v in row])
            count += 1
    return count


def read_csv(path: Path) -> List[Dict[str, str]]:
    """Read a CSV file written by write_csv.

    Args:
        path: CSV path

    Returns:
        One dict per row, keyed by header
    """
    with open(path, "r", newline="") as f:
        return list(csv.DictReader(f))

