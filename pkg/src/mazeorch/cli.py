"""Command line interface: generate, solve, bench, grid-search, report."""
from __future__ import annotations

import sys
from pathlib import Path

import click

from . import harness
from .active_inference import Thresholds
from .engine import Configuration, RunConfig, run_episode
from .maze import TIERS, MazeError
from .mazeio import load_maze

EXIT_OK, EXIT_PARTIAL, EXIT_CONFIG = 0, 1, 2


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise click.BadParameter(f"expected comma-separated numbers, got {text!r}") from None


class _Group(click.Group):
    def main(self, *args, standalone_mode=True, **kwargs):
        try:
            return super().main(*args, standalone_mode=False, **kwargs)
        except click.exceptions.Exit as exc:
            sys.exit(exc.exit_code)
        except click.ClickException as exc:
            exc.show()
            sys.exit(EXIT_CONFIG)
        except click.Abort:
            sys.exit(EXIT_PARTIAL)


@click.group(cls=_Group)
@click.version_option(package_name="artifact")
def main():
    """Multi-agent maze solving with free-energy benchmarking."""


@main.command()
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default="corpus", show_default=True)
@click.option("--tiers", default=",".join(TIERS), show_default=True, help="Comma-separated tier names.")
@click.option("--per-tier", type=int, default=5, show_default=True)
@click.option("--seed", "master_seed", type=int, default=0, show_default=True)
def generate(out_dir, tiers, per_tier, master_seed):
    """Write a validated maze corpus, one directory per tier."""
    names = [t.strip() for t in tiers.split(",") if t.strip()]
    try:
        made = harness.generate_corpus(out_dir, names, per_tier, master_seed)
    except harness.ConfigError as exc:
        raise click.UsageError(str(exc)) from None
    except MazeError as exc:
        click.echo(f"generation failed: {exc}", err=True)
        sys.exit(EXIT_PARTIAL)
    bad = 0
    for tier, items in made.items():
        for path, grid, report in items:
            bad += not report.passed
            click.echo(f"{path}  n={grid.size} starts={len(grid.starts)} rho={report.connectivity_ratio:.3f} "
                       f"path={report.path_length} {'ok' if report.passed else 'INVALID'}")
    sys.exit(EXIT_PARTIAL if bad else EXIT_OK)


@main.command()
@click.argument("maze", type=click.Path(exists=True, dir_okay=False))
@click.option("--configuration", type=click.Choice([c.value for c in Configuration]), default="fe_orchestration",
              show_default=True)
@click.option("--policy", type=click.Choice(["heuristic", "random_walk", "llm"]), default="heuristic",
              show_default=True)
@click.option("--agents", type=int, default=None, help="Defaults to 1 for solo, 2 otherwise.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--theta1", type=float, default=0.6, show_default=True)
@click.option("--theta2", type=float, default=0.4, show_default=True)
@click.option("--trace", "trace_path", type=click.Path(dir_okay=False), default=None,
              help="Write the tool-call trace here instead of stdout.")
@click.option("--fe-trace", "fe_path", type=click.Path(dir_okay=False), default=None)
@click.option("--orchestrator-log", "orch_path", type=click.Path(dir_okay=False), default=None)
def solve(maze, configuration, policy, agents, seed, theta1, theta2, trace_path, fe_path, orch_path):
    """Run one episode and print its trace."""
    try:
        grid, _ = load_maze(maze)
        config = RunConfig(grid, Configuration(configuration), policy, num_agents=agents, seed=seed,
                           thresholds=Thresholds(theta1, theta2))
    except (MazeError, ValueError) as exc:
        raise click.UsageError(str(exc)) from None
    result = run_episode(config)
    if trace_path:
        Path(trace_path).write_text(result.trace_text(), encoding="utf-8")
    else:
        click.echo(result.trace_text(), nl=False)
    if fe_path:
        Path(fe_path).write_text(result.fe_trace_text(), encoding="utf-8")
    if orch_path:
        Path(orch_path).write_text("".join(line + "\n" for line in result.orchestrator_log), encoding="utf-8")
    click.echo(f"# {result.termination_reason.value} steps={result.steps_taken}/{result.budget} "
               f"failed_moves={result.failed_moves} policy_failures={result.policy_failures}", err=True)
    sys.exit(EXIT_OK)


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None)
@click.option("--workers", type=int, default=None, help="Overrides the batch file's worker count.")
@click.option("--fe-trace/--no-fe-trace", default=False, show_default=True)
def bench(config_path, out_dir, workers, fe_trace):
    """Run a YAML batch file and write the reports."""
    try:
        batch = harness.load_batch_file(config_path)
    except harness.ConfigError as exc:
        raise click.UsageError(str(exc)) from None
    summary = harness.run_batch(batch.configs, workers or batch.workers, batch.precision_target,
                                keep_fe_traces=fe_trace)
    target = out_dir or batch.output or "results"
    for path in harness.emit_reports(summary, target):
        click.echo(f"wrote {path}", err=True)
    for c in summary.configs:
        if c.interval is None:
            click.echo(f"{c.name}: ERROR {c.error}")
        else:
            r = c.interval.rounded()
            click.echo(f"{c.name}: {c.successes}/{c.runs} = {r[0]}% [{r[1]}, {r[2]}] +/-{r[3]} pp")
    sys.exit(EXIT_PARTIAL if any(c.error for c in summary.configs) else EXIT_OK)


@main.command("grid-search")
@click.option("--maze-dir", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--tiers", default="medium,hard", show_default=True)
@click.option("--theta1", "theta1", default=",".join(map(str, harness.DEFAULT_THETA1)), show_default=True)
@click.option("--theta2", "theta2", default=",".join(map(str, harness.DEFAULT_THETA2)), show_default=True)
@click.option("--runs-per-cell", type=int, default=3, show_default=True)
@click.option("--mazes-per-tier", type=int, default=None, help="Use only the first N mazes of each tier.")
@click.option("--seed", "master_seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None)
def grid_search(maze_dir, tiers, theta1, theta2, runs_per_cell, mazes_per_tier, master_seed, out_path):
    """Mean steps of FE-only heuristic runs over a threshold grid."""
    try:
        mazes = {t: harness.load_corpus(maze_dir, t)[:mazes_per_tier] for t in tiers.split(",") if t}
        result = harness.grid_search(_floats(theta1), _floats(theta2), mazes, runs_per_cell, master_seed)
    except (harness.ConfigError, ValueError) as exc:
        raise click.UsageError(str(exc)) from None
    text = result.to_csv()
    if out_path:
        Path(out_path).write_text(text, encoding="utf-8")
    click.echo(text, nl=False)
    for tier, row in result.best.items():
        click.echo(f"# best {tier}: theta1={row.theta1} theta2={row.theta2} mean_steps={row.mean_steps:.2f}", err=True)
    sys.exit(EXIT_OK)


@main.command()
@click.option("--runs", "runs_path", type=click.Path(exists=True, dir_okay=False), required=True,
              help="A runs.csv ledger written by bench.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
def report(runs_path, out_dir):
    """Rebuild summary tables from a per-run ledger."""
    try:
        rows = harness.read_runs_csv(runs_path)
    except (KeyError, ValueError) as exc:
        raise click.UsageError(f"bad runs ledger: {exc}") from None
    summary = harness.BatchSummary(harness.summarize(rows), rows)
    for path in harness.emit_reports(summary, out_dir):
        click.echo(f"wrote {path}")
    sys.exit(EXIT_OK)


if __name__ == "__main__":
    main()
