"""Batch experiments: seeded runs, Wilson intervals, precision loop, grid search, reports."""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from statistics import NormalDist, fmean
from typing import Iterable, Sequence

import numpy as np
import yaml

from .active_inference import FE_TRACE_COLUMNS, Thresholds, fe_trace_rows
from .complexity import compute_complexity
from .engine import Configuration, RunConfig, RunResult, run_episode
from .maze import TIERS, MazeGrid, generate_maze, validate_maze
from .mazeio import load_maze, save_maze
from .policies import POLICY_NAMES

PRECISION_TARGET_PP = 15.0
MIN_RUNS = 10
MAX_RUNS = 200


class ConfigError(ValueError):
    """Invalid batch configuration."""


# --- Wilson interval ---------------------------------------------------------------


@dataclass(frozen=True)
class WilsonInterval:
    """Success rate and Wilson score interval, all in percent."""

    rate: float
    low: float
    high: float
    half_width: float

    def rounded(self, digits: int = 2) -> tuple[float, float, float, float]:
        return tuple(round(v, digits) for v in (self.rate, self.low, self.high, self.half_width))


def wilson_ci(successes: int, runs: int, confidence: float = 0.95) -> WilsonInterval:
    if runs < 1:
        raise ValueError("runs must be at least 1")
    if not 0 <= successes <= runs:
        raise ValueError("successes must lie in [0, runs]")
    if not 0.0 < confidence < 1.0:
        raise ValueError("confidence must lie in (0, 1)")
    z = NormalDist().inv_cdf(0.5 + confidence / 2.0)
    p = successes / runs
    z2n = z * z / runs
    center = (p + z2n / 2.0) / (1.0 + z2n)
    margin = z * math.sqrt(p * (1.0 - p) / runs + z2n / (4.0 * runs)) / (1.0 + z2n)
    # the bounds are exactly 0 and 1 at the extremes; the formula only gets there up to rounding
    low = 0.0 if successes == 0 else max(center - margin, 0.0)
    high = 1.0 if successes == runs else min(center + margin, 1.0)
    return WilsonInterval(100.0 * p, 100.0 * low, 100.0 * high, 50.0 * (high - low))


# --- batch configuration ---------------------------------------------------------------


def derive_seed(master_seed: int, run_index: int) -> int:
    """Per-run seed; identical across configurations for common random numbers."""
    return int(np.random.SeedSequence([master_seed, run_index]).generate_state(1, dtype=np.uint32)[0])


@dataclass
class BatchConfig:
    name: str
    configuration: Configuration | str
    mazes: list  # MazeGrid objects or maze file paths
    policy: object = "heuristic"
    tier: str = ""
    agents: int | None = None
    runs: int | None = None  # fixed run count; None enables the precision loop
    min_runs: int = MIN_RUNS
    max_runs: int = MAX_RUNS
    master_seed: int = 0
    thresholds: Thresholds = field(default_factory=Thresholds)
    step_budget_multiplier: float = 2.5
    timeout_seconds: float = 7200.0

    def __post_init__(self):
        try:
            self.configuration = Configuration(self.configuration)
        except ValueError:
            raise ConfigError(f"unknown configuration {self.configuration!r}") from None
        if not self.mazes:
            raise ConfigError(f"{self.name}: no mazes given")
        if isinstance(self.policy, str) and self.policy not in POLICY_NAMES:
            raise ConfigError(f"{self.name}: unknown policy {self.policy!r}")
        if self.runs is not None and self.runs < 1:
            raise ConfigError(f"{self.name}: runs must be positive")
        if self.min_runs < 1 or self.max_runs < self.min_runs:
            raise ConfigError(f"{self.name}: need 1 <= min_runs <= max_runs")
        if self.step_budget_multiplier <= 0:
            raise ConfigError(f"{self.name}: step_budget_multiplier must be positive")


@dataclass(frozen=True)
class RunRow:
    config: str
    tier: str
    configuration: str
    policy: str
    run_index: int
    maze_index: int
    maze_seed: int
    seed: int
    success: bool
    termination_reason: str
    steps_taken: int
    failed_moves: int
    policy_failures: int
    iterations: int
    budget: int
    fe_records: int
    directives: int


RUN_COLUMNS = tuple(RunRow.__dataclass_fields__)


@dataclass
class ConfigSummary:
    name: str
    tier: str
    configuration: str
    policy: str
    runs: int
    successes: int
    interval: WilsonInterval | None
    mean_steps: float
    mean_failed_moves: float
    error: str | None = None


@dataclass
class BatchSummary:
    configs: list[ConfigSummary]
    rows: list[RunRow]
    fe_traces: dict = field(default_factory=dict)  # (config, run_index) -> FE records

    def by_name(self, name: str) -> ConfigSummary:
        for c in self.configs:
            if c.name == name:
                return c
        raise KeyError(name)


def _policy_label(policy) -> str:
    if isinstance(policy, str):
        return policy
    return getattr(policy, "name", None) or getattr(policy, "__name__", type(policy).__name__)


def _run_task(task: tuple[RunConfig, bool]) -> RunResult:
    config, keep_fe = task
    result = run_episode(config)
    result.trace = []
    result.orchestrator_log = []
    if not keep_fe:
        result.fe_records = []
    return result


def _resolve_mazes(cfg: BatchConfig) -> list[MazeGrid]:
    out = []
    for m in cfg.mazes:
        out.append(m if isinstance(m, MazeGrid) else load_maze(m)[0])
    return out


def _row(cfg: BatchConfig, run_index: int, maze_index: int, grid: MazeGrid, res: RunResult, n_fe: int) -> RunRow:
    return RunRow(
        config=cfg.name,
        tier=cfg.tier,
        configuration=cfg.configuration.value,
        policy=_policy_label(cfg.policy),
        run_index=run_index,
        maze_index=maze_index,
        maze_seed=grid.seed,
        seed=res.seed,
        success=res.success,
        termination_reason=res.termination_reason.value,
        steps_taken=res.steps_taken,
        failed_moves=res.failed_moves,
        policy_failures=res.policy_failures,
        iterations=res.iterations,
        budget=res.budget,
        fe_records=n_fe,
        directives=len(res.directives),
    )


def summarize(rows: Sequence[RunRow]) -> list[ConfigSummary]:
    """Per-configuration summaries computed from sorted run rows."""
    groups: dict[str, list[RunRow]] = {}
    for r in sorted(rows, key=lambda r: (r.config, r.run_index)):
        groups.setdefault(r.config, []).append(r)
    out = []
    for name, rs in groups.items():
        succ = sum(r.success for r in rs)
        out.append(ConfigSummary(
            name=name,
            tier=rs[0].tier,
            configuration=rs[0].configuration,
            policy=rs[0].policy,
            runs=len(rs),
            successes=succ,
            interval=wilson_ci(succ, len(rs)),
            mean_steps=fmean(r.steps_taken for r in rs),
            mean_failed_moves=fmean(r.failed_moves for r in rs),
        ))
    return out


def run_batch(
    configs: Iterable[BatchConfig],
    parallelism: int = 1,
    precision_target_pp: float = PRECISION_TARGET_PP,
    keep_fe_traces: bool = False,
) -> BatchSummary:
    """Run every configuration until its Wilson half-width meets the target.

    Runs are assigned round-robin over the configuration's mazes and seeded
    from ``(master_seed, run_index)``. Results are consumed in run order, so
    the stopping point and the summary do not depend on ``parallelism``.
    """
    rows: list[RunRow] = []
    failed: list[ConfigSummary] = []
    fe_traces: dict = {}
    pool = ProcessPoolExecutor(max_workers=parallelism) if parallelism > 1 else None
    try:
        for cfg in configs:
            try:
                mazes = _resolve_mazes(cfg)
            except Exception as exc:  # a bad maze file only aborts this configuration
                failed.append(ConfigSummary(cfg.name, cfg.tier, cfg.configuration.value, _policy_label(cfg.policy),
                                            0, 0, None, math.nan, math.nan, error=str(exc)))
                continue
            limit = cfg.runs if cfg.runs is not None else cfg.max_runs
            chunk = max(parallelism, 1)
            done, successes, stop = 0, 0, False
            while done < limit and not stop:
                indices = range(done, min(done + chunk, limit))
                tasks = [
                    (RunConfig(
                        grid=mazes[i % len(mazes)],
                        configuration=cfg.configuration,
                        policy=cfg.policy,
                        num_agents=cfg.agents,
                        seed=derive_seed(cfg.master_seed, i),
                        thresholds=cfg.thresholds,
                        step_budget_multiplier=cfg.step_budget_multiplier,
                        timeout_seconds=cfg.timeout_seconds,
                        tier=cfg.tier,
                    ), keep_fe_traces)
                    for i in indices
                ]
                results = pool.map(_run_task, tasks) if pool else map(_run_task, tasks)
                for i, res in zip(indices, results):
                    rows.append(_row(cfg, i, i % len(mazes), mazes[i % len(mazes)], res, len(res.fe_records)))
                    if keep_fe_traces and res.fe_records:
                        fe_traces[(cfg.name, i)] = res.fe_records
                    done += 1
                    successes += res.success
                    if cfg.runs is None and done >= cfg.min_runs:
                        if wilson_ci(successes, done).half_width <= precision_target_pp:
                            stop = True
                            break
    finally:
        if pool is not None:
            pool.shutdown()
    return BatchSummary(summarize(rows) + failed, rows, fe_traces)


# --- grid search -------------------------------------------------------------------


@dataclass(frozen=True)
class GridRow:
    tier: str
    theta1: float
    theta2: float
    runs: int
    successes: int
    mean_steps: float


@dataclass
class GridSearchResult:
    rows: list[GridRow]
    best: dict[str, GridRow]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["tier", "theta1", "theta2", "runs", "successes", "mean_steps", "argmin"])
        for r in self.rows:
            w.writerow([r.tier, r.theta1, r.theta2, r.runs, r.successes, f"{r.mean_steps:.4f}",
                        int(self.best.get(r.tier) == r)])
        return buf.getvalue()


DEFAULT_THETA1 = (0.4, 0.5, 0.6, 0.7)
DEFAULT_THETA2 = (0.3, 0.4, 0.5)


def grid_search(
    theta1_values: Sequence[float],
    theta2_values: Sequence[float],
    mazes_by_tier: dict[str, list],
    runs_per_cell: int = 3,
    master_seed: int = 0,
    policy: object = "heuristic",
    parallelism: int = 1,
) -> GridSearchResult:
    """Mean total steps of FE-only episodes for each threshold pair, per tier."""
    if not theta1_values or not theta2_values:
        raise ValueError("threshold value lists must be non-empty")
    rows = []
    for tier, mazes in mazes_by_tier.items():
        for th1 in theta1_values:
            for th2 in theta2_values:
                cfg = BatchConfig(
                    name=f"{tier}:{th1}:{th2}", configuration=Configuration.FE_ONLY, mazes=list(mazes),
                    policy=policy, tier=tier, runs=runs_per_cell, master_seed=master_seed,
                    thresholds=Thresholds(th1, th2),
                )
                s = run_batch([cfg], parallelism=parallelism).configs[0]
                rows.append(GridRow(tier, th1, th2, s.runs, s.successes, s.mean_steps))
    best = {}
    for r in rows:  # first minimum wins: ties keep the earlier grid cell
        if r.tier not in best or r.mean_steps < best[r.tier].mean_steps:
            best[r.tier] = r
    return GridSearchResult(rows, best)


# --- reports -----------------------------------------------------------------------


SUMMARY_COLUMNS = (
    "config", "tier", "configuration", "policy", "runs", "successes", "success_rate",
    "ci_low", "ci_high", "half_width", "mean_steps", "mean_failed_moves", "error",
)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _summary_rows(summary: BatchSummary) -> list[list]:
    out = []
    for c in summary.configs:
        ci = c.interval.rounded() if c.interval else ("", "", "", "")
        out.append([c.name, c.tier, c.configuration, c.policy, c.runs, c.successes, *ci,
                    "" if math.isnan(c.mean_steps) else f"{c.mean_steps:.2f}",
                    "" if math.isnan(c.mean_failed_moves) else f"{c.mean_failed_moves:.2f}",
                    c.error or ""])
    return out


def convergence_series(rows: Sequence[RunRow]) -> list[tuple[str, int, int, float]]:
    """Cumulative Wilson half-width after each run, per configuration."""
    out = []
    counts: dict[str, tuple[int, int]] = {}
    for r in sorted(rows, key=lambda r: (r.config, r.run_index)):
        n, s = counts.get(r.config, (0, 0))
        n, s = n + 1, s + int(r.success)
        counts[r.config] = (n, s)
        out.append((r.config, n, s, round(wilson_ci(s, n).half_width, 6)))
    return out


def emit_reports(summary: BatchSummary, out_dir, fe_traces: dict | None = None) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = sorted(summary.rows, key=lambda r: (r.config, r.run_index))
    files = {
        "summary.csv": _csv(SUMMARY_COLUMNS, _summary_rows(summary)),
        "runs.csv": _csv(RUN_COLUMNS, [[getattr(r, c) for c in RUN_COLUMNS] for r in rows]),
        "steps_distribution.csv": _csv(
            ("config", "tier", "configuration", "run_index", "steps_taken", "success"),
            [[r.config, r.tier, r.configuration, r.run_index, r.steps_taken, r.success] for r in rows],
        ),
        "convergence.csv": _csv(("config", "runs", "successes", "half_width"), convergence_series(rows)),
    }
    doc = []
    for c in summary.configs:
        d = asdict(c)
        d["interval"] = dict(zip(("rate", "low", "high", "half_width"), c.interval.rounded())) if c.interval else None
        d["mean_steps"] = None if math.isnan(c.mean_steps) else round(c.mean_steps, 4)
        d["mean_failed_moves"] = None if math.isnan(c.mean_failed_moves) else round(c.mean_failed_moves, 4)
        doc.append(d)
    files["summary.json"] = json.dumps({"configs": doc}, indent=2, sort_keys=True) + "\n"
    traces = fe_traces if fe_traces is not None else summary.fe_traces
    if traces:
        body = []
        for (name, idx), records in sorted(traces.items()):
            body += [[name, idx, *row] for row in fe_trace_rows(records)]
        files["fe_trace.csv"] = _csv(("config", "run_index", *FE_TRACE_COLUMNS), body)
    paths = []
    for name, text in files.items():
        p = out / name
        p.write_text(text, encoding="utf-8")
        paths.append(p)
    return paths


def read_runs_csv(path) -> list[RunRow]:
    ints = {"run_index", "maze_index", "maze_seed", "seed", "steps_taken", "failed_moves", "policy_failures",
            "iterations", "budget", "fe_records", "directives"}
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            vals = {}
            for k in RUN_COLUMNS:
                v = rec[k]
                vals[k] = int(v) if k in ints else (v == "True") if k == "success" else v
            rows.append(RunRow(**vals))
    return rows


# --- maze corpus -------------------------------------------------------------------


def corpus_seed(master_seed: int, tier_index: int, maze_index: int) -> int:
    return master_seed * 10_000 + tier_index * 100 + maze_index


def generate_corpus(out_dir, tiers: Sequence[str] = tuple(TIERS), per_tier: int = 5, master_seed: int = 0):
    """Write ``per_tier`` validated mazes for each tier as ``<tier>/maze_<i>.txt``."""
    unknown = set(tiers) - set(TIERS)
    if unknown:
        raise ConfigError(f"unknown tiers: {', '.join(sorted(unknown))}")
    out = Path(out_dir)
    made = {}
    for ti, name in enumerate(TIERS):
        if name not in tiers:
            continue
        tier = TIERS[name]
        (out / name).mkdir(parents=True, exist_ok=True)
        made[name] = []
        for i in range(per_tier):
            grid = generate_maze(tier.size, tier.dead_end_factor, corpus_seed(master_seed, ti, i))
            report = validate_maze(grid)
            path = save_maze(out / name / f"maze_{i}.txt", grid, compute_complexity(grid))
            made[name].append((path, grid, report))
    return made


def load_corpus(maze_dir, tier: str) -> list[MazeGrid]:
    paths = sorted(Path(maze_dir, tier).glob("maze_*.txt"), key=lambda p: int(p.stem.split("_")[1]))
    if not paths:
        raise ConfigError(f"no mazes for tier {tier!r} under {maze_dir}")
    return [load_maze(p)[0] for p in paths]


# --- YAML batch files --------------------------------------------------------------


@dataclass
class BatchFile:
    configs: list[BatchConfig]
    workers: int = 1
    precision_target: float = PRECISION_TARGET_PP
    output: str | None = None


_CONFIG_KEYS = {"name", "configuration", "policy", "tier", "agents", "runs", "min_runs", "max_runs",
                "theta1", "theta2", "mazes", "step_budget_multiplier", "timeout_seconds"}


def load_batch_file(path) -> BatchFile:
    """Parse a YAML batch description (see README for the keys)."""
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    if not isinstance(data, dict) or not isinstance(data.get("configs"), list) or not data["configs"]:
        raise ConfigError("batch file needs a non-empty 'configs' list")
    master = int(data.get("master_seed", 0))
    maze_dir = Path(data.get("maze_dir", "corpus"))
    if not maze_dir.is_absolute():
        maze_dir = path.parent / maze_dir
    defaults = {"min_runs": int(data.get("min_runs", MIN_RUNS)), "max_runs": int(data.get("max_runs", MAX_RUNS))}
    configs = []
    for entry in data["configs"]:
        if not isinstance(entry, dict):
            raise ConfigError(f"config entry must be a mapping, got {entry!r}")
        unknown = set(entry) - _CONFIG_KEYS
        if unknown:
            raise ConfigError(f"unknown keys {sorted(unknown)} in config {entry.get('name')!r}")
        try:
            tier = entry["tier"]
            name = entry.get("name", f"{entry['configuration']}_{tier}")
        except KeyError as exc:
            raise ConfigError(f"config entry missing {exc}") from None
        if "mazes" in entry:
            mazes = [str(Path(maze_dir, m)) for m in entry["mazes"]]
        else:
            mazes = sorted(str(p) for p in Path(maze_dir, tier).glob("maze_*.txt"))
        try:
            th = Thresholds(float(entry.get("theta1", 0.6)), float(entry.get("theta2", 0.4)))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        configs.append(BatchConfig(
            name=name,
            configuration=entry["configuration"],
            mazes=mazes,
            policy=entry.get("policy", "heuristic"),
            tier=tier,
            agents=entry.get("agents"),
            runs=entry.get("runs"),
            min_runs=int(entry.get("min_runs", defaults["min_runs"])),
            max_runs=int(entry.get("max_runs", defaults["max_runs"])),
            master_seed=master,
            thresholds=th,
            step_budget_multiplier=float(entry.get("step_budget_multiplier", 2.5)),
            timeout_seconds=float(entry.get("timeout_seconds", 7200.0)),
        ))
    return BatchFile(configs, int(data.get("workers", 1)), float(data.get("precision_target", PRECISION_TARGET_PP)),
                     data.get("output"))
