"""RateStudyAgent - weak-error ladders, rate fits and the one-step check."""

import logging
from typing import Any, Dict, List

from core.config import ExperimentConfig
from core.errors import InconclusiveStudyError
from core.models import OutputWorkspace, RateFit
from core.report import StudyReport, collect_warnings, create_report
from skills.families import build_test_function, model_from_config
from skills.harness import one_step_check, weak_error_study
from skills.model import probe_points, validate_or_raise
from skills.workspace import save_report, save_table

logger = logging.getLogger(__name__)

EXACT_Z = 3.0


def fit_summary(fit: RateFit, tolerance: float) -> Dict[str, Any]:
    """JSON-ready summary of a rate fit."""
    ci = fit.slope_ci
    return {
        "slope": fit.slope,
        "slope_stderr": fit.slope_stderr,
        "ci95": None if ci is None else list(ci),
        "intercept": fit.intercept,
        "r_squared": fit.r_squared,
        "predicted_kappa": fit.predicted_kappa,
        "pass": fit.passes(tolerance),
        "tolerance": tolerance,
        "reference_value": fit.reference_value,
        "reference_stderr": fit.reference_stderr,
        "reference_kind": fit.reference_kind,
        "exploratory": fit.exploratory,
        "n_paths": fit.n_paths,
    }


def ladder_rows(fit: RateFit) -> List[List[Any]]:
    return [
        [d, e, s, fit.n_paths, int(u)]
        for d, e, s, u in zip(fit.deltas, fit.errors, fit.stderrs, fit.used)
    ]


class RateStudyAgent:
    """Agent running the weak-error study and the one-step diagnostic.

    Both write a CSV ladder (delta, error, stderr, n_paths, used) and a JSON
    report with the fitted slope, its interval, the predicted rate and a
    verdict: pass, fail, exact, exploratory or inconclusive.
    """

    def __init__(self, workspace: OutputWorkspace, config: ExperimentConfig, workers: int = 1):
        """Initialize rate study agent.

        Args:
            workspace: Output workspace
            config: Experiment configuration
            workers: Parallel workers
        """
        self.workspace = workspace
        self.config = config
        self.workers = workers
        self.spec = validate_or_raise(model_from_config(config.model))
        self.g = build_test_function(config.test_function, self.spec.dim)

    def _verdict(self, fit: RateFit, exact_reference: bool) -> str:
        if fit.conclusive:
            if fit.exploratory:
                return "exploratory"
            verdict = fit.passes(self.config.ladder.tolerance)
            if verdict is None:
                return "exploratory"
            return "pass" if verdict else "fail"
        if exact_reference and all(e <= EXACT_Z * s for e, s in zip(fit.errors, fit.stderrs)):
            return "exact"
        return "inconclusive"

    def _finish(self, report: StudyReport, fit: RateFit, verdict: str, name: str) -> StudyReport:
        tolerance = self.config.ladder.tolerance
        report.results.update(fit_summary(fit, tolerance))
        report.results["ladder"] = [
            {"delta": d, "error": e, "stderr": s, "used": u}
            for d, e, s, u in zip(fit.deltas, fit.errors, fit.stderrs, fit.used)
        ]
        report.set_verdict(verdict)
        if "csv" in self.config.formats:
            save_table(
                self.workspace,
                name,
                ["delta", "error", "stderr", "n_paths", "used"],
                ladder_rows(fit),
            )
        path = self.workspace.reports / f"{name}.json"
        if "json" in self.config.formats:
            path = save_report(self.workspace, report, name)
        if verdict == "inconclusive":
            raise InconclusiveStudyError(
                f"every ladder point is below the noise floor; report written to {path}"
            )
        return report

    def run_rate_study(self) -> StudyReport:
        """Weak error of E g(Y_T) along the ladder against the reference."""
        cfg = self.config
        report = create_report("rate-study", cfg)
        with collect_warnings(report):
            fit = weak_error_study(
                self.spec,
                self.g,
                cfg.deltas(),
                cfg.n_paths,
                reference=cfg.ladder.reference,
                seed=cfg.seed,
                workers=self.workers,
                crn=cfg.ladder.crn,
                reference_factor=cfg.ladder.reference_factor,
                reference_paths_factor=cfg.ladder.reference_paths_factor,
                block_size=cfg.block_size,
                require_fit=False,
            )
        verdict = self._verdict(fit, fit.reference_kind == "oracle")
        logger.info("rate study %s: slope %s, verdict %s", cfg.name, fit.slope, verdict)
        return self._finish(report, fit, verdict, "rate_study")

    def run_one_step(self) -> StudyReport:
        """Single-step decay of sup_x |E f(Y_delta) - f(x)| on the probe points."""
        cfg = self.config
        report = create_report("one-step", cfg)
        probes = probe_points(self.spec, cfg.ladder.probes)
        with collect_warnings(report):
            fit = one_step_check(
                self.spec,
                self.g,
                cfg.deltas(),
                cfg.n_paths,
                seed=cfg.seed,
                probes=probes,
                workers=self.workers,
                block_size=cfg.block_size,
                require_fit=False,
            )
        exact = all(e == 0.0 for e in fit.errors)
        verdict = "exact" if exact else self._verdict(fit, False)
        report.results["probes"] = [[float(v) for v in p] for p in probes]
        logger.info("one-step %s: slope %s, verdict %s", cfg.name, fit.slope, verdict)
        return self._finish(report, fit, verdict, "one_step")
