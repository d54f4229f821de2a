"""Output workspace management."""

import json
import logging
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

from core.config import ExperimentConfig, parse_experiment_config
from core.models import OutputWorkspace
from core.report import StudyReport
from core.utils import load_config, save_artifact, write_csv

logger = logging.getLogger(__name__)

CONFIG_FILE = "experiment.yaml"


def init_workspace(config: ExperimentConfig, output_dir: Optional[Path] = None) -> OutputWorkspace:
    """Create the output directories of a run and store its resolved config.

    Args:
        config: Resolved experiment configuration
        output_dir: Run directory, defaults to config.run_dir

    Returns:
        OutputWorkspace with created directories
    """
    workspace = OutputWorkspace.create(output_dir or config.run_dir)
    workspace.ensure_exists()
    save_artifact(config, workspace.config / CONFIG_FILE, format="yaml")
    logger.debug("workspace ready at %s", workspace.root)
    return workspace


def load_workspace(output_dir: Path) -> OutputWorkspace:
    """Open an existing run directory.

    Raises:
        FileNotFoundError: If the directory or its stored config is missing
    """
    workspace = OutputWorkspace.create(output_dir)
    if not workspace.root.exists():
        raise FileNotFoundError(f"Workspace not found: {workspace.root}")
    if not (workspace.config / CONFIG_FILE).exists():
        raise FileNotFoundError(f"Workspace config not found: {workspace.config / CONFIG_FILE}")
    return workspace


def load_workspace_config(workspace: OutputWorkspace) -> ExperimentConfig:
    """Read back the config stored by init_workspace."""
    return parse_experiment_config(load_config(workspace.config / CONFIG_FILE))


def save_report(workspace: OutputWorkspace, report: StudyReport, name: str) -> Path:
    """Write a report as reports/<name>.json."""
    path = workspace.reports / f"{name}.json"
    save_artifact(report, path, format="json")
    return path


def load_report(path: Path) -> StudyReport:
    with open(path, "r") as f:
        return StudyReport(**json.load(f))


def save_table(
    workspace: OutputWorkspace,
    name: str,
    header: Sequence[str],
    rows: Iterable[Sequence[Any]],
) -> Path:
    """Write a CSV table as data/<name>.csv."""
    path = workspace.data / f"{name}.csv"
    count = write_csv(path, header, rows)
    logger.debug("wrote %d rows to %s", count, path)
    return path

