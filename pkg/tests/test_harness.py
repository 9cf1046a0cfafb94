import csv
import json
import math

import pytest

from mazeorch.engine import Configuration
from mazeorch.harness import (
    DEFAULT_THETA1,
    DEFAULT_THETA2,
    BatchConfig,
    ConfigError,
    convergence_series,
    derive_seed,
    emit_reports,
    generate_corpus,
    grid_search,
    load_batch_file,
    load_corpus,
    read_runs_csv,
    run_batch,
    summarize,
    wilson_ci,
)
from mazeorch.maze import generate_tier
from stubs import NEXT_TO_EXIT, BernoulliPolicy


@pytest.fixture
def exit_grid(make_grid):
    return make_grid(NEXT_TO_EXIT, starts=[(1, 6)])


def bernoulli(name, grid, p, **kw):
    kw.setdefault("step_budget_multiplier", 0.1)
    return BatchConfig(name, Configuration.SOLO, [grid], policy=BernoulliPolicy(p), **kw)


@pytest.mark.parametrize("s,n,expected", [
    (11, 34, (32.35, 19.13, 49.16, 15.01)),
    (25, 25, (100.0, 86.68, 100.0, 6.66)),
    (0, 10, (0.0, 0.0, 27.75, 13.88)),
])
def test_wilson_examples(s, n, expected):
    assert wilson_ci(s, n).rounded() == pytest.approx(expected, abs=0.01)


def test_wilson_properties():
    for n in range(1, 60):
        for s in range(n + 1):
            ci = wilson_ci(s, n)
            assert ci.low <= ci.rate <= ci.high
            assert ci.half_width == pytest.approx((ci.high - ci.low) / 2)
    assert wilson_ci(5, 10, 0.99).half_width > wilson_ci(5, 10, 0.95).half_width
    for bad in [(1, 0), (-1, 5), (6, 5)]:
        with pytest.raises(ValueError):
            wilson_ci(*bad)


def test_seed_derivation_is_stable():
    assert derive_seed(7, 3) == derive_seed(7, 3)
    assert len({derive_seed(7, i) for i in range(100)}) == 100
    assert derive_seed(7, 0) != derive_seed(8, 0)


def test_always_succeed_ten_runs(exit_grid):
    s = run_batch([bernoulli("win", exit_grid, 1.0)]).configs[0]
    assert (s.runs, s.successes) == (10, 10)
    assert s.interval.rounded() == pytest.approx((100.0, 72.25, 100.0, 13.88), abs=0.01)


def test_precision_loop_stops_at_first_qualifying_run(exit_grid):
    summary = run_batch([bernoulli("half", exit_grid, 0.5, master_seed=3)])
    s = summary.configs[0]
    outcomes = [r.success for r in sorted(summary.rows, key=lambda r: r.run_index)]
    expected = None
    for n in range(10, 201):
        if wilson_ci(sum(outcomes[:n]), n).half_width <= 15.0:
            expected = n
            break
    assert s.runs == expected == len(outcomes)
    assert 10 <= s.runs <= 200


def test_precision_loop_cap(exit_grid):
    s = run_batch([bernoulli("cap", exit_grid, 0.5, max_runs=12)], precision_target_pp=1.0).configs[0]
    assert s.runs == 12


def test_fixed_run_count_and_round_robin(exit_grid, make_grid):
    other = make_grid(NEXT_TO_EXIT, starts=[(1, 5)])
    summary = run_batch([BatchConfig("rr", "solo", [exit_grid, other], policy="heuristic", runs=5)])
    assert [r.maze_index for r in summary.rows] == [0, 1, 0, 1, 0]
    assert [r.steps_taken for r in summary.rows] == [1, 2, 1, 2, 1]


def test_rerun_is_identical(exit_grid):
    cfgs = lambda: [bernoulli("a", exit_grid, 0.4, master_seed=9), bernoulli("b", exit_grid, 0.8)]
    assert run_batch(cfgs()).rows == run_batch(cfgs()).rows


def test_parallel_matches_serial():
    grids = [generate_tier("easy", s) for s in range(2)]
    cfg = lambda: [BatchConfig("p", "fe_only", grids, policy="random_walk", runs=6, master_seed=2)]
    assert run_batch(cfg(), parallelism=3).rows == run_batch(cfg()).rows


def test_exact_wilson_coverage():
    from scipy.stats import binom

    def coverage(n, p):
        return sum(binom.pmf(s, n, p) for s in range(n + 1)
                   if wilson_ci(s, n).low <= 100 * p <= wilson_ci(s, n).high)

    assert coverage(30, 0.5) == pytest.approx(0.9572, abs=1e-4)
    # coverage oscillates with n and p and dips below nominal in places
    assert coverage(30, 0.3) < 0.93 < coverage(40, 0.3)


def test_coverage_of_true_rate(exit_grid):
    p, hits = 0.5, 0
    for trial in range(100):
        s = run_batch([bernoulli("cov", exit_grid, p, runs=30, master_seed=1000 + trial)]).configs[0]
        hits += s.interval.low <= 100 * p <= s.interval.high
    assert hits >= 93


def test_bad_maze_aborts_only_that_config(exit_grid, tmp_path):
    bad = tmp_path / "broken.txt"
    bad.write_text("nonsense\n")
    summary = run_batch([BatchConfig("bad", "solo", [str(bad)]), bernoulli("ok", exit_grid, 1.0)])
    assert summary.by_name("bad").error and summary.by_name("bad").runs == 0
    assert summary.by_name("ok").successes == 10


@pytest.mark.parametrize("kw", [dict(configuration="duo"), dict(mazes=[]), dict(policy="oracle"),
                                dict(runs=0), dict(min_runs=5, max_runs=4), dict(step_budget_multiplier=0)])
def test_batch_config_validation(exit_grid, kw):
    args = dict(name="x", configuration="solo", mazes=[exit_grid])
    args.update(kw)
    with pytest.raises(ConfigError):
        BatchConfig(**args)


def test_emit_reports(exit_grid, tmp_path):
    summary = run_batch([bernoulli("a", exit_grid, 0.5, master_seed=1), bernoulli("b", exit_grid, 1.0)])
    paths = emit_reports(summary, tmp_path / "one")
    again = emit_reports(summary, tmp_path / "two")
    for p, q in zip(paths, again):
        assert p.read_bytes() == q.read_bytes()
    names = {p.name for p in paths}
    assert names >= {"summary.csv", "runs.csv", "steps_distribution.csv", "convergence.csv", "summary.json"}
    with open(tmp_path / "one" / "summary.csv") as fh:
        assert len(list(csv.DictReader(fh))) == 2
    doc = json.loads((tmp_path / "one" / "summary.json").read_text())
    assert [c["name"] for c in doc["configs"]] == ["a", "b"]
    rows = read_runs_csv(tmp_path / "one" / "runs.csv")
    assert sorted(rows, key=lambda r: (r.config, r.run_index)) == sorted(summary.rows, key=lambda r: (r.config, r.run_index))
    assert summarize(rows) == summary.configs


def test_convergence_non_increasing_at_constant_rate(exit_grid):
    summary = run_batch([bernoulli("win", exit_grid, 1.0, runs=40)])
    hw = [h for _, _, _, h in convergence_series(summary.rows)]
    assert all(b <= a for a, b in zip(hw, hw[1:]))
    # alternating outcomes: compare at even counts, where the ratio is exactly one half
    series = [wilson_ci(n // 2, n).half_width for n in range(2, 80, 2)]
    assert all(b <= a for a, b in zip(series, series[1:]))


def test_grid_search_singleton_matches_batch(exit_grid):
    grids = [generate_tier("easy", 0)]
    res = grid_search([0.6], [0.4], {"easy": grids}, runs_per_cell=2)
    assert len(res.rows) == 1
    direct = run_batch([BatchConfig("d", "fe_only", grids, runs=2)]).configs[0]
    assert res.rows[0].mean_steps == direct.mean_steps
    assert res.best["easy"] == res.rows[0]


def test_grid_search_argmin_and_defaults():
    assert 0.6 in DEFAULT_THETA1 and 0.4 in DEFAULT_THETA2
    grids = [generate_tier("easy", 1)]
    res = grid_search([0.4, 0.7], [0.3, 0.5], {"easy": grids}, runs_per_cell=2, policy="random_walk")
    assert len(res.rows) == 4
    assert res.best["easy"].mean_steps == min(r.mean_steps for r in res.rows)
    assert sum(line.endswith(",1") for line in res.to_csv().splitlines()) == 1
    with pytest.raises(ValueError):
        grid_search([], [0.4], {"easy": grids})


def test_corpus_and_batch_file(tmp_path):
    made = generate_corpus(tmp_path / "corpus", ["easy"], per_tier=2, master_seed=1)
    assert [p.name for p, _, _ in made["easy"]] == ["maze_0.txt", "maze_1.txt"]
    assert all(rep.passed for _, _, rep in made["easy"])
    assert load_corpus(tmp_path / "corpus", "easy") == [g for _, g, _ in made["easy"]]
    cfg = tmp_path / "batch.yaml"
    cfg.write_text(
        "master_seed: 5\nmaze_dir: corpus\nworkers: 2\nconfigs:\n"
        "  - {name: s, configuration: solo, policy: heuristic, tier: easy, runs: 3}\n"
        "  - {configuration: fe_only, tier: easy, theta1: 0.5, mazes: [easy/maze_1.txt]}\n"
    )
    batch = load_batch_file(cfg)
    assert batch.workers == 2 and [c.name for c in batch.configs] == ["s", "fe_only_easy"]
    assert len(batch.configs[0].mazes) == 2 and batch.configs[1].thresholds.theta1 == 0.5
    assert batch.configs[0].master_seed == 5
    with pytest.raises(ConfigError):
        generate_corpus(tmp_path / "x", ["impossible"])
    with pytest.raises(ConfigError):
        load_corpus(tmp_path / "corpus", "hard")


@pytest.mark.parametrize("text", ["configs: []\n", "- a\n", "configs:\n  - {tier: easy, configuration: solo, bogus: 1}\n",
                                  "configs:\n  - {configuration: solo}\n", ": : :\n"])
def test_batch_file_errors(tmp_path, text):
    p = tmp_path / "b.yaml"
    p.write_text(text)
    with pytest.raises(ConfigError):
        load_batch_file(p)
