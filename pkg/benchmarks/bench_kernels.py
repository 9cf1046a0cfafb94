"""Compare the compiled and pure-Python BFS kernels.

Usage: python benchmarks/bench_kernels.py [--repeat N]

Times the raw kernels on generated mazes of growing size, then a full
heuristic episode with each backend swapped in.
"""
from __future__ import annotations

import argparse
import timeit

from mazeorch import _kernels_py, kernels
from mazeorch.engine import RunConfig, run_episode
from mazeorch.maze import generate_maze

try:
    from mazeorch import _kernels as _kernels_c
except ImportError:
    _kernels_c = None


def _use(module) -> None:
    kernels.bfs_distances = module.bfs_distances
    kernels.trace_path = module.trace_path


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args()
    backends = {"python": _kernels_py}
    if _kernels_c is not None:
        backends["cython"] = _kernels_c
    else:
        print("compiled kernels not built; timing the fallback only")

    print(f"{'size':>5} " + " ".join(f"{name + ' us':>12}" for name in backends) + f" {'speedup':>8}")
    for size in (12, 18, 25, 30, 45, 61):
        grid = generate_maze(size, 0.10, seed=1)
        s = grid.starts[0]
        times = {}
        for name, mod in backends.items():
            t = timeit.timeit(lambda: mod.trace_path(mod.bfs_distances(grid.passable, *s), *grid.exit),
                              number=args.repeat)
            times[name] = 1e6 * t / args.repeat
        speed = times["python"] / times["cython"] if "cython" in times else float("nan")
        print(f"{size:>5} " + " ".join(f"{times[n]:>12.1f}" for n in backends) + f" {speed:>8.1f}x")

    grid = generate_maze(25, 0.25, seed=3)
    for name, mod in backends.items():
        _use(mod)
        t = timeit.timeit(lambda: run_episode(RunConfig(grid, "fe_orchestration", "heuristic", seed=0)), number=3)
        print(f"episode (25x25, fe_orchestration) with {name} kernels: {t / 3 * 1e3:.1f} ms")
    _use(backends.get("cython", _kernels_py))


if __name__ == "__main__":
    main()
