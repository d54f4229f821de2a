"""Report envelope shared by every command."""

import warnings
from contextlib import contextmanager
from typing import Any, Dict, Iterator, List, Optional

from pydantic import BaseModel, Field

from core.utils import hash_artifact

SCHEMA_VERSION = "1.0"


class StudyReport(BaseModel):
    """Standardized, reproducible report for all commands.

    Reports carry no wall-clock data, so identical inputs produce identical
    files.
    """

    schema_version: str = SCHEMA_VERSION
    command: str
    config: Dict[str, Any]
    config_hash: str
    results: Dict[str, Any] = Field(default_factory=dict)
    verdict: Optional[str] = None
    warnings: List[str] = Field(default_factory=list)

    def add_warning(self, message: str) -> None:
        """Add a warning message, once.

        Args:
            message: Warning message
        """
        if message not in self.warnings:
            self.warnings.append(message)

    def set_verdict(self, verdict: str, reason: Optional[str] = None) -> None:
        """Set the verdict of the study.

        Args:
            verdict: One of pass, fail, exact, inconclusive, exploratory
            reason: Optional explanation stored with the results
        """
        self.verdict = verdict
        if reason:
            self.results["verdict_reason"] = reason


def create_report(command: str, config: Any, **results: Any) -> StudyReport:
    """Factory function to create a StudyReport.

    Args:
        command: CLI command name
        config: Resolved configuration (pydantic model or dict)
        **results: Initial result entries

    Returns:
        StudyReport instance
    """
    if hasattr(config, "model_dump"):
        config = config.model_dump(mode="json")
    return StudyReport(
        command=command,
        config=config,
        config_hash=hash_artifact(config),
        results=results,
    )


@contextmanager
def collect_warnings(report: StudyReport) -> Iterator[None]:
    """Copy every warning raised inside the block into the report.

    Args:
        report: Report receiving the messages
    """
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        yield
    for item in caught:
        report.add_warning(f"{item.category.__name__}: {item.message}")
