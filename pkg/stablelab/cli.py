"""CLI entry point for stablelab."""

import functools
import sys
from pathlib import Path
from typing import Any, Callable, Dict, Optional

import click
from rich.console import Console
from rich.table import Table

from agents.oracle import OracleAgent
from agents.rate_study import RateStudyAgent
from agents.sampling import SamplingAgent
from core.config import (
    ExperimentConfig,
    SamplerConfig,
    load_experiment_config,
    load_preset,
    parse_experiment_config,
    preset_description,
    preset_names,
    validate_section,
)
from core.errors import ConfigError, StableLabError
from core.log import configure_logging
from core.models import OutputWorkspace
from core.report import StudyReport
from skills.families import model_from_config
from skills.model import validate
from skills.workspace import init_workspace, load_report, load_workspace, load_workspace_config
from stablelab import __version__

console = Console()


def handle_errors(func: Callable[..., None]) -> Callable[..., None]:
    """Map stablelab errors to their exit codes."""

    @functools.wraps(func)
    def wrapper(*args: Any, **kwargs: Any) -> None:
        try:
            func(*args, **kwargs)
        except StableLabError as e:
            console.print(f"\n[bold red]Error:[/bold red] {e}")
            sys.exit(e.exit_code)

    return wrapper


def resolve_config(
    config_path: Optional[str],
    preset: Optional[str],
    overrides: Dict[str, Any],
) -> ExperimentConfig:
    """Load --config or --preset and apply command-line overrides.

    Raises:
        ConfigError: If neither or both sources are given, or validation fails
    """
    if bool(config_path) == bool(preset):
        raise ConfigError("pass exactly one of --config or --preset")
    config = load_experiment_config(config_path) if config_path else load_preset(preset or "")
    updates = {k: v for k, v in overrides.items() if v is not None}
    if not updates:
        return config
    data = config.model_dump(mode="json")
    data.update(updates)
    return parse_experiment_config(data)


def open_workspace(config: ExperimentConfig, output: Optional[str]) -> OutputWorkspace:
    workspace = init_workspace(config, Path(output) if output else None)
    console.print(f"[dim]Output: {workspace.root}[/dim]")
    return workspace


def print_verdict(report: StudyReport) -> None:
    colour = {"pass": "green", "exact": "green", "fail": "red"}.get(report.verdict or "", "yellow")
    console.print(f"\n[bold]Verdict:[/bold] [{colour}]{report.verdict}[/{colour}]")
    for warning in report.warnings:
        console.print(f"  [yellow]![/yellow] {warning}")


def print_ladder(report: StudyReport, title: str) -> None:
    table = Table(title=title)
    table.add_column("delta", style="cyan", justify="right")
    table.add_column("error", style="green", justify="right")
    table.add_column("stderr", style="yellow", justify="right")
    table.add_column("used", style="blue")
    for row in report.results.get("ladder", []):
        table.add_row(
            f"{row['delta']:.4g}",
            f"{row['error']:.3e}",
            f"{row['stderr']:.2e}",
            "yes" if row["used"] else "no",
        )
    console.print(table)
    slope = report.results.get("slope")
    kappa = report.results.get("predicted_kappa")
    if slope is not None:
        ci = report.results.get("ci95") or [float("nan"), float("nan")]
        console.print(f"  Fitted slope: {slope:.3f} (95% CI {ci[0]:.3f} .. {ci[1]:.3f})")
    if kappa is not None:
        console.print(f"  Predicted kappa: {kappa:.3f}")


config_option = click.option("--config", "config_path", type=click.Path(), help="Experiment YAML")
preset_option = click.option("--preset", help="Built-in preset name")
output_option = click.option("--output", help="Run directory (default: output_dir/name)")
workers_option = click.option("--workers", default=1, show_default=True, help="Parallel workers")
seed_option = click.option("--seed", type=int, help="Override the master seed")
paths_option = click.option("--n-paths", "n_paths", type=int, help="Override paths per rung")


@click.group()
@click.version_option(version=__version__)
@click.option("--verbose", "-v", is_flag=True, help="Show debug logs")
def main(verbose: bool) -> None:
    """stablelab - weak Euler laboratory for stable-driven SDEs."""
    configure_logging(verbose)


@main.command()
@config_option
@click.option("--law", type=click.Choice(["standard", "isotropic", "positive", "anisotropic"]))
@click.option("--alpha", type=float, help="Stability index")
@click.option("--dim", type=int, help="Dimension")
@click.option("--n", "n", type=int, help="Number of draws")
@click.option("--kappa", type=float, help="Anisotropy of the anisotropic law")
@click.option("--dt", type=float, help="Time step of the anisotropic law")
@click.option("--seed", type=int, default=None, help="Master seed")
@click.option("--block-size", type=int, default=None, help="Draws per random stream")
@click.option("--output", default="./runs/sample", show_default=True, help="Output directory")
@handle_errors
def sample(
    config_path: Optional[str],
    law: Optional[str],
    alpha: Optional[float],
    dim: Optional[int],
    n: Optional[int],
    kappa: Optional[float],
    dt: Optional[float],
    seed: Optional[int],
    block_size: Optional[int],
    output: str,
) -> None:
    """Draw variates from a stable sampler and check the empirical CF."""
    data: Dict[str, Any] = {}
    base_seed, base_block = 0, 4096
    if config_path:
        config = load_experiment_config(config_path)
        data = config.sampler.model_dump(mode="json")
        base_seed, base_block = config.seed, config.block_size
    flags = {"law": law, "alpha": alpha, "dim": dim, "n": n, "kappa": kappa, "dt": dt}
    data.update({k: v for k, v in flags.items() if v is not None})
    sampler = validate_section(SamplerConfig, data, prefix="sampler.")

    workspace = OutputWorkspace.create(Path(output))
    workspace.ensure_exists()
    agent = SamplingAgent(
        workspace,
        sampler,
        base_seed if seed is None else seed,
        base_block if block_size is None else block_size,
    )
    console.print(
        f"\n[bold blue]Sampling:[/bold blue] {sampler.n} {sampler.law} draws "
        f"(alpha={sampler.alpha}, dim={sampler.dim})"
    )
    report = agent.run()

    table = Table(title="Empirical characteristic function")
    table.add_column("xi", style="cyan")
    table.add_column("empirical", style="green", justify="right")
    table.add_column("exact", style="yellow", justify="right")
    table.add_column("|diff|", justify="right")
    for row in report.results["cf_check"]:
        table.add_row(
            ", ".join(f"{v:.3g}" for v in row["xi"]),
            f"{row['empirical_re']:.4f}{row['empirical_im']:+.4f}i",
            f"{row['exact_re']:.4f}{row['exact_im']:+.4f}i",
            f"{row['abs_error']:.2e}",
        )
    console.print(table)
    console.print(f"[green]✓[/green] Samples written to {workspace.data / 'samples.csv'}")
    print_verdict(report)


@main.command("rate-study")
@config_option
@preset_option
@output_option
@workers_option
@seed_option
@paths_option
@handle_errors
def rate_study(
    config_path: Optional[str],
    preset: Optional[str],
    output: Optional[str],
    workers: int,
    seed: Optional[int],
    n_paths: Optional[int],
) -> None:
    """Measure the weak error along a step-size ladder and fit its order."""
    config = resolve_config(config_path, preset, {"seed": seed, "n_paths": n_paths})
    workspace = open_workspace(config, output)
    console.print(f"\n[bold blue]Rate study:[/bold blue] {config.name} ({config.model.name})")
    agent = RateStudyAgent(workspace, config, workers)
    report = agent.run_rate_study()
    print_ladder(report, "Weak error ladder")
    print_verdict(report)


@main.command("one-step")
@config_option
@preset_option
@output_option
@workers_option
@seed_option
@paths_option
@handle_errors
def one_step(
    config_path: Optional[str],
    preset: Optional[str],
    output: Optional[str],
    workers: int,
    seed: Optional[int],
    n_paths: Optional[int],
) -> None:
    """Single-step diagnostic: decay of sup |E f(Y_delta) - f(x)|."""
    config = resolve_config(config_path, preset, {"seed": seed, "n_paths": n_paths})
    workspace = open_workspace(config, output)
    console.print(f"\n[bold blue]One-step check:[/bold blue] {config.name} ({config.model.name})")
    agent = RateStudyAgent(workspace, config, workers)
    report = agent.run_one_step()
    print_ladder(report, "One-step ladder")
    print_verdict(report)


@main.command()
@config_option
@preset_option
@output_option
@workers_option
@click.option("--cross-check", is_flag=True, help="Compare with Euler Monte-Carlo at x0")
@handle_errors
def oracle(
    config_path: Optional[str],
    preset: Optional[str],
    output: Optional[str],
    workers: int,
    cross_check: bool,
) -> None:
    """Evaluate E g(X_t) with the Fourier oracle on a grid."""
    config = resolve_config(config_path, preset, {})
    if cross_check:
        config = config.model_copy(
            update={"oracle": config.oracle.model_copy(update={"cross_check": True})}
        )
    workspace = open_workspace(config, output)
    console.print(f"\n[bold blue]Oracle:[/bold blue] {config.name} ({config.model.name})")
    report = OracleAgent(workspace, config, workers).run()

    table = Table(title="E g(X_t) at x0")
    table.add_column("t", style="cyan", justify="right")
    table.add_column("oracle", style="green", justify="right")
    for t, value in report.results["value_at_x0"].items():
        table.add_row(t, f"{value:.10g}")
    console.print(table)
    for row in report.results["cross_check"]:
        console.print(
            f"  t={row['t']:g}: Monte-Carlo {row['mc_mean']:.6g} ± {row['mc_stderr']:.2g} "
            f"(z={row['z_score']:.2f})"
        )
    print_verdict(report)


@main.command("validate")
@config_option
@preset_option
@handle_errors
def validate_model(config_path: Optional[str], preset: Optional[str]) -> None:
    """Check the model assumptions on probe points."""
    config = resolve_config(config_path, preset, {})
    spec = model_from_config(config.model)
    result = validate(spec)
    console.print(
        f"\n[bold blue]Validating:[/bold blue] {spec.name} "
        f"(alpha={spec.alpha}, dim={spec.dim}, {result.n_probes} probes)"
    )
    if result.mu is not None:
        console.print(f"  Non-degeneracy constant: {result.mu:.4g}")
    if result.passed:
        console.print("[green]✓[/green] All assumptions hold on the probe set")
        return
    table = Table(title="Failed assumptions")
    table.add_column("assumption", style="red")
    table.add_column("message")
    table.add_column("probe", style="dim")
    for issue in result.issues:
        probe = "" if issue.probe is None else ", ".join(f"{v:.3g}" for v in issue.probe)
        table.add_row(issue.assumption, issue.message, probe)
    console.print(table)
    sys.exit(2)


@main.command()
def presets() -> None:
    """List built-in presets."""
    table = Table(title="stablelab presets")
    table.add_column("Preset", style="cyan")
    table.add_column("Description", style="green")
    for name in preset_names():
        table.add_row(name, preset_description(name))
    console.print(table)


@main.command("list")
@click.option("--runs", default="./runs", show_default=True, help="Directory holding run folders")
def list_runs(runs: str) -> None:
    """List stored runs with their latest verdicts."""
    runs_path = Path(runs)
    if not runs_path.exists():
        console.print(f"\n[yellow]No runs found at:[/yellow] {runs_path}")
        return

    table = Table(title="stablelab runs")
    table.add_column("Run", style="cyan")
    table.add_column("Model", style="green")
    table.add_column("alpha", justify="right")
    table.add_column("Reports", style="blue")
    table.add_column("Verdicts", style="yellow")
    for run_dir in sorted(d for d in runs_path.iterdir() if d.is_dir()):
        try:
            workspace = load_workspace(run_dir)
            config = load_workspace_config(workspace)
        except (FileNotFoundError, ConfigError):
            continue
        reports = sorted(workspace.reports.glob("*.json"))
        verdicts = [load_report(path).verdict or "-" for path in reports]
        alpha = config.model.alpha
        table.add_row(
            run_dir.name,
            config.model.name,
            "-" if alpha is None else f"{alpha:g}",
            ", ".join(path.stem for path in reports),
            ", ".join(verdicts),
        )
    console.print()
    console.print(table)


if __name__ == "__main__":
    main()
