"""Entropy-based maze difficulty metrics and trap detection."""
from __future__ import annotations

import math
from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .geometry import Coord, Direction
from .maze import MazeError, MazeGrid, connectivity_ratio, shortest_path


@dataclass(frozen=True)
class TrapRecord:
    branch_cell: Coord
    entry_cell: Coord
    depth: int
    branches: int
    dead_ends: int
    cells: frozenset = field(default=frozenset(), compare=False, repr=False)

    @property
    def weight(self) -> float:
        return trap_weight(self.depth, self.branches, self.dead_ends)


@dataclass
class MazeComplexity:
    surprisingness: float
    deceptiveness: float
    traps: list[TrapRecord]
    connectivity_ratio: float
    optimal_path_length: int

    @property
    def total_trap_complexity(self) -> float:
        return sum(t.weight for t in self.traps)


def trap_weight(depth: int, branches: int, dead_ends: int) -> float:
    return 1.0 + 0.5 * depth + 0.3 * branches + 0.2 * dead_ends


def entropy_bits(counts: Iterable[int]) -> float:
    counts = [c for c in counts if c > 0]
    total = sum(counts)
    if total == 0:
        return 0.0
    h = -sum((c / total) * math.log2(c / total) for c in counts)
    return max(h, 0.0)


def path_directions(path: Sequence[Coord]) -> list[Direction]:
    return [Direction.between(a, b) for a, b in zip(path, path[1:])]


def direction_entropy(path: Sequence[Coord]) -> float:
    """Shannon entropy (bits) of the move directions along ``path``."""
    return entropy_bits(Counter(path_directions(path)).values())


def optimal_path(grid: MazeGrid) -> list[Coord]:
    path = shortest_path(grid, grid.starts[0], grid.exit)
    if path is None:
        raise MazeError("no path from the primary start to the exit")
    return path


def surprisingness(grid: MazeGrid) -> float:
    return direction_entropy(optimal_path(grid))


def detect_traps(grid: MazeGrid, path: Sequence[Coord] | None = None) -> list[TrapRecord]:
    """Dead-end subtrees hanging off the optimal path.

    Open cells off the path are split into connected components. A component
    is a trap when it touches the path through exactly one edge and contains
    no cycle. Depth is measured from the path cell it branches from.
    """
    if path is None:
        path = optimal_path(grid)
    on_path = set(path)
    seen: set[Coord] = set()
    traps = []
    for p in path:
        for entry in grid.open_neighbors(p):
            if entry in on_path or entry in seen:
                continue
            comp = _component(grid, entry, on_path)
            seen |= comp
            trap = _as_trap(grid, comp, on_path)
            if trap is not None:
                traps.append(trap)
    return traps


def _component(grid: MazeGrid, start: Coord, blocked: set) -> set:
    comp = {start}
    queue = deque([start])
    while queue:
        cell = queue.popleft()
        for nb in grid.open_neighbors(cell):
            if nb not in blocked and nb not in comp:
                comp.add(nb)
                queue.append(nb)
    return comp


def _as_trap(grid: MazeGrid, comp: set, on_path: set) -> TrapRecord | None:
    links = [(c, nb) for c in comp for nb in grid.open_neighbors(c) if nb in on_path]
    if len(links) != 1:
        return None
    inner_edges = sum(1 for c in comp for nb in grid.open_neighbors(c) if nb in comp) // 2
    if inner_edges != len(comp) - 1:
        return None
    entry, branch = links[0]
    tree = comp | {branch}
    depth = 0
    dist = {branch: 0}
    queue = deque([branch])
    while queue:
        cell = queue.popleft()
        depth = max(depth, dist[cell])
        for nb in grid.open_neighbors(cell):
            if nb in tree and nb not in dist:
                dist[nb] = dist[cell] + 1
                queue.append(nb)
    branches = sum(1 for c in comp if sum(nb in tree for nb in grid.open_neighbors(c)) >= 3)
    dead_ends = sum(1 for c in comp if grid.degree(c) == 1)
    return TrapRecord(branch, entry, depth, branches, dead_ends, frozenset(comp))


def total_trap_complexity(traps: Iterable[TrapRecord]) -> float:
    return sum(t.weight for t in traps)


def deceptiveness(grid: MazeGrid, traps: list[TrapRecord] | None = None, path=None) -> float:
    """Sum over path cells of the entropy mass on moves that enter a trap.

    Transitions from a path cell are uniform over its open neighbours.
    """
    if path is None:
        path = optimal_path(grid)
    if traps is None:
        traps = detect_traps(grid, path)
    entries: Counter = Counter(t.branch_cell for t in traps)
    total = 0.0
    for cell, k in sorted(entries.items()):
        deg = grid.degree(cell)
        p = 1.0 / deg
        total += k * (-p * math.log2(p))
    return total


def compute_complexity(grid: MazeGrid) -> MazeComplexity:
    path = optimal_path(grid)
    traps = detect_traps(grid, path)
    return MazeComplexity(
        surprisingness=direction_entropy(path),
        deceptiveness=deceptiveness(grid, traps, path),
        traps=traps,
        connectivity_ratio=connectivity_ratio(grid.cells),
        optimal_path_length=len(path) - 1,
    )
