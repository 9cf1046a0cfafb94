"""Text serialization of mazes and their complexity metrics.

Grammar (UTF-8, ``\\n`` line endings)::

    size=<n> seed=<u64> dead_end_factor=<decimal>
    <n rows of n characters from W, O, E, X>
    starts=<row>,<col>[;<row>,<col>...]
    [complexity]
    surprisingness=<float>
    deceptiveness=<float>
    total_trap_complexity=<float>
    connectivity_ratio=<float>
    optimal_path_length=<int>
    traps=[<br>,<bc>,<er>,<ec>,<depth>,<branches>,<dead_ends>[;...]]
    checksum=sha256:<hex digest of every preceding line, newline-terminated>

The ``[complexity]`` block is optional on load.
"""
from __future__ import annotations

import hashlib
import re
from pathlib import Path

from .complexity import MazeComplexity, TrapRecord
from .maze import MazeError, MazeFormatError, MazeGrid

_HEADER = re.compile(r"^size=(\d+) seed=(\d+) dead_end_factor=([0-9.eE+-]+)$")
_FLOAT_KEYS = ("surprisingness", "deceptiveness", "total_trap_complexity", "connectivity_ratio")


class MazeFileError(MazeError):
    pass


def dumps(grid: MazeGrid, complexity: MazeComplexity | None = None) -> str:
    lines = [f"size={grid.size} seed={grid.seed} dead_end_factor={grid.dead_end_factor!r}"]
    lines += grid.rows()
    lines.append("starts=" + ";".join(f"{r},{c}" for r, c in grid.starts))
    if complexity is not None:
        lines.append("[complexity]")
        lines.append(f"surprisingness={complexity.surprisingness!r}")
        lines.append(f"deceptiveness={complexity.deceptiveness!r}")
        lines.append(f"total_trap_complexity={complexity.total_trap_complexity!r}")
        lines.append(f"connectivity_ratio={complexity.connectivity_ratio!r}")
        lines.append(f"optimal_path_length={complexity.optimal_path_length}")
        traps = ";".join(
            f"{t.branch_cell[0]},{t.branch_cell[1]},{t.entry_cell[0]},{t.entry_cell[1]},"
            f"{t.depth},{t.branches},{t.dead_ends}"
            for t in complexity.traps
        )
        lines.append(f"traps={traps}")
    body = "".join(line + "\n" for line in lines)
    return body + f"checksum=sha256:{hashlib.sha256(body.encode()).hexdigest()}\n"


def loads(text: str) -> tuple[MazeGrid, MazeComplexity | None]:
    lines = text.splitlines()
    if not lines or not lines[-1].startswith("checksum=sha256:"):
        raise MazeFileError("missing checksum line")
    body = "".join(line + "\n" for line in lines[:-1])
    if hashlib.sha256(body.encode()).hexdigest() != lines[-1].removeprefix("checksum=sha256:"):
        raise MazeFileError("checksum mismatch")
    m = _HEADER.match(lines[0])
    if not m:
        raise MazeFileError(f"bad header line {lines[0]!r}")
    n, seed, factor = int(m.group(1)), int(m.group(2)), float(m.group(3))
    if len(lines) < n + 3:
        raise MazeFileError("truncated maze file")
    rows = lines[1 : n + 1]
    if any(len(r) != n for r in rows):
        raise MazeFileError(f"expected {n} rows of {n} characters")
    starts_line = lines[n + 1]
    if not starts_line.startswith("starts="):
        raise MazeFileError("missing starts line")
    try:
        starts = [tuple(int(v) for v in pair.split(",")) for pair in starts_line[7:].split(";") if pair]
        grid = MazeGrid.from_rows(rows, starts, seed, factor)
    except (ValueError, MazeFormatError) as exc:
        raise MazeFileError(f"invalid maze: {exc}") from None
    rest = lines[n + 2 : -1]
    if not rest:
        return grid, None
    if rest[0] != "[complexity]":
        raise MazeFileError(f"unexpected line {rest[0]!r}")
    return grid, _parse_complexity(rest[1:])


def _parse_complexity(lines: list[str]) -> MazeComplexity:
    kv = {}
    for line in lines:
        key, sep, value = line.partition("=")
        if not sep:
            raise MazeFileError(f"malformed complexity line {line!r}")
        kv[key] = value
    try:
        traps = []
        for item in filter(None, kv["traps"].split(";")):
            br, bc, er, ec, depth, branches, dead = (int(v) for v in item.split(","))
            traps.append(TrapRecord((br, bc), (er, ec), depth, branches, dead))
        out = MazeComplexity(
            surprisingness=float(kv["surprisingness"]),
            deceptiveness=float(kv["deceptiveness"]),
            traps=traps,
            connectivity_ratio=float(kv["connectivity_ratio"]),
            optimal_path_length=int(kv["optimal_path_length"]),
        )
        stored_tc = float(kv["total_trap_complexity"])
    except (KeyError, ValueError) as exc:
        raise MazeFileError(f"malformed complexity block: {exc}") from None
    if abs(stored_tc - out.total_trap_complexity) > 1e-9:
        raise MazeFileError("total_trap_complexity disagrees with trap weights")
    return out


def save_maze(path, grid: MazeGrid, complexity: MazeComplexity | None = None) -> Path:
    path = Path(path)
    path.write_text(dumps(grid, complexity), encoding="utf-8")
    return path


def load_maze(path) -> tuple[MazeGrid, MazeComplexity | None]:
    return loads(Path(path).read_text(encoding="utf-8"))
