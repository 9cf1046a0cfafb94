"""Maze grids: generation, validation, shortest paths and exit placement.

A maze is an ``n x n`` grid whose border is frame. Interior cells are wall,
open or the single exit. Carving runs a recursive backtracker on the
odd-coordinate lattice, seeded from several start cells, then nudges the
dead-end density toward the requested factor.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .geometry import DIRECTIONS, Cell, Coord

MIN_SIZE = 8
DEAD_END_RANGE = (0.03, 0.35)
RHO_RANGE = (0.10, 0.95)
MAX_ATTEMPTS = 64
DEAD_END_TOLERANCE = 0.20


@dataclass(frozen=True)
class Tier:
    name: str
    size: int
    dead_end_factor: float


TIERS: dict[str, Tier] = {
    t.name: t
    for t in (
        Tier("easy", 12, 0.03),
        Tier("medium", 18, 0.10),
        Tier("hard", 25, 0.25),
        Tier("very_hard", 30, 0.35),
    )
}


class MazeError(Exception):
    pass


class MazeFormatError(MazeError):
    """A grid violates the structural invariants."""


class MazeGenerationError(MazeError):
    def __init__(self, message: str, attempts: int):
        super().__init__(f"{message} (after {attempts} attempts)")
        self.attempts = attempts


def start_count(size: int) -> int:
    if size < 15:
        return 1
    if size < 25:
        return 5
    return 9


@dataclass(eq=False)
class MazeGrid:
    cells: np.ndarray
    starts: tuple[Coord, ...]
    exit: Coord
    seed: int = 0
    dead_end_factor: float = 0.0
    _passable: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        cells = np.array(self.cells, dtype=np.uint8)
        cells.setflags(write=False)
        self.cells = cells
        self.starts = tuple((int(r), int(c)) for r, c in self.starts)
        self.exit = (int(self.exit[0]), int(self.exit[1]))
        self.seed = int(self.seed)
        self.dead_end_factor = float(self.dead_end_factor)
        self._check_structure()
        passable = (cells == Cell.OPEN) | (cells == Cell.EXIT)
        passable.setflags(write=False)
        self._passable = passable

    def _check_structure(self):
        c = self.cells
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise MazeFormatError(f"grid must be square, got shape {c.shape}")
        n = c.shape[0]
        if n < 3:
            raise MazeFormatError("grid too small")
        if c.max() > Cell.FRAME:
            raise MazeFormatError("unknown cell value")
        border = np.ones_like(c, dtype=bool)
        border[1:-1, 1:-1] = False
        if not np.all(c[border] == Cell.FRAME):
            raise MazeFormatError("boundary cells must all be frame")
        if np.any(c[~border] == Cell.FRAME):
            raise MazeFormatError("frame cells inside the interior")
        exits = np.argwhere(c == Cell.EXIT)
        if len(exits) != 1:
            raise MazeFormatError(f"expected exactly one exit, found {len(exits)}")
        if tuple(int(v) for v in exits[0]) != self.exit:
            raise MazeFormatError(f"exit field {self.exit} does not match grid")
        if not self.starts:
            raise MazeFormatError("maze has no start cells")
        for s in self.starts:
            if not self.in_bounds(s) or c[s] != Cell.OPEN:
                raise MazeFormatError(f"start {s} is not an open cell")

    @property
    def size(self) -> int:
        return int(self.cells.shape[0])

    @property
    def passable(self) -> np.ndarray:
        """Boolean mask of open and exit cells."""
        return self._passable

    def in_bounds(self, cell: Coord) -> bool:
        n = self.cells.shape[0]
        return 0 <= cell[0] < n and 0 <= cell[1] < n

    def kind(self, cell: Coord) -> Cell:
        if not self.in_bounds(cell):
            return Cell.FRAME
        return Cell(int(self.cells[cell]))

    def is_passable(self, cell: Coord) -> bool:
        return self.in_bounds(cell) and bool(self._passable[cell])

    def open_neighbors(self, cell: Coord) -> list[Coord]:
        r, c = cell
        n = self.cells.shape[0]
        mask = self._passable
        return [
            (rr, cc)
            for rr, cc in ((r - 1, c), (r + 1, c), (r, c + 1), (r, c - 1))
            if 0 <= rr < n and 0 <= cc < n and mask[rr, cc]
        ]

    def degree(self, cell: Coord) -> int:
        return len(self.open_neighbors(cell))

    def rows(self) -> list[str]:
        return ["".join("WOEX"[v] for v in row) for row in self.cells.tolist()]

    @classmethod
    def from_rows(cls, rows, starts, seed: int = 0, dead_end_factor: float = 0.0) -> "MazeGrid":
        try:
            cells = np.array([[Cell.from_char(ch) for ch in row] for row in rows], dtype=np.uint8)
        except ValueError as exc:
            raise MazeFormatError(str(exc)) from None
        if len({len(r) for r in rows}) != 1:
            raise MazeFormatError("rows have unequal length")
        exits = np.argwhere(cells == Cell.EXIT)
        if len(exits) != 1:
            raise MazeFormatError(f"expected exactly one exit, found {len(exits)}")
        return cls(cells, tuple(starts), tuple(int(v) for v in exits[0]), seed, dead_end_factor)

    def __eq__(self, other):
        if not isinstance(other, MazeGrid):
            return NotImplemented
        return (
            np.array_equal(self.cells, other.cells)
            and self.starts == other.starts
            and self.exit == other.exit
            and self.seed == other.seed
            and self.dead_end_factor == other.dead_end_factor
        )

    __hash__ = None  # type: ignore[assignment]


@dataclass
class ValidationReport:
    passed: bool
    connectivity_ratio: float
    path_length: int | None
    failures: list[str] = field(default_factory=list)


def open_neighbor_counts(passable: np.ndarray) -> np.ndarray:
    """Number of passable 4-neighbours of every cell."""
    p = np.pad(passable.astype(np.int8), 1)
    return p[:-2, 1:-1] + p[2:, 1:-1] + p[1:-1, :-2] + p[1:-1, 2:]


def connectivity_ratio(cells: np.ndarray) -> float:
    interior = cells[1:-1, 1:-1]
    return float(np.count_nonzero((interior == Cell.OPEN) | (interior == Cell.EXIT)) / interior.size)


def shortest_path(grid: MazeGrid, a: Coord, b: Coord) -> list[Coord] | None:
    """Minimum-length 4-connected path from ``a`` to ``b``; ``None`` if disconnected."""
    for cell in (a, b):
        if not grid.is_passable(cell):
            raise ValueError(f"{cell} is not an open or exit cell")
    dist = kernels.bfs_distances(grid.passable, a[0], a[1])
    if dist[b] < 0:
        return None
    return [tuple(p) for p in kernels.trace_path(dist, b[0], b[1])]


def validate_maze(grid: MazeGrid) -> ValidationReport:
    n = grid.size
    rho = connectivity_ratio(grid.cells)
    failures = []
    lo, hi = RHO_RANGE
    if not lo <= rho <= hi:
        failures.append(f"connectivity ratio {rho:.3f} outside [{lo}, {hi}]")
    dist = kernels.bfs_distances(grid.passable, grid.exit[0], grid.exit[1])
    for s in grid.starts:
        if dist[s] < 0:
            failures.append(f"unreachable exit from start {s}")
    primary = int(dist[grid.starts[0]])
    path_length = primary if primary >= 0 else None
    if path_length is not None and path_length < n:
        failures.append(f"optimal path length {path_length} < {n}")
    return ValidationReport(not failures, rho, path_length, failures)


def _exit_scores(grid_cells: np.ndarray, passable: np.ndarray, start: Coord, exclude) -> np.ndarray:
    """Exit score of every candidate cell; -inf where not a candidate."""
    n = grid_cells.shape[0]
    dist = kernels.bfs_distances(passable, start[0], start[1])
    rows, cols = np.indices((n, n))
    center = (n - 1) / 2.0
    man_start = np.abs(rows - start[0]) + np.abs(cols - start[1])
    man_center = np.abs(rows - center) + np.abs(cols - center)
    edge_r = (rows == 1) | (rows == n - 2)
    edge_c = (cols == 1) | (cols == n - 2)
    edge = np.where(edge_r | edge_c, 15.0, 0.0) + np.where(edge_r & edge_c, 25.0, 0.0)
    deg = open_neighbor_counts(passable)
    topo = np.where(deg == 1, 30.0, np.where(deg >= 3, -10.0, 0.0))
    score = 10.0 * dist + 5.0 * man_start + edge + topo + 2.0 * man_center
    candidate = passable & (dist >= 0)
    for cell in exclude:
        candidate[cell] = False
    return np.where(candidate, score, -np.inf)


def place_exit(grid: MazeGrid, start: Coord) -> tuple[Coord, float]:
    """Best exit cell for ``start`` and its score.

    Candidates are the open cells (and the current exit) reachable from
    ``start``, excluding start cells. Ties go to the first cell in row-major
    order.
    """
    return _best_exit(grid.cells, grid.passable, start, set(grid.starts) | {start})


def _best_exit(cells, passable, start, exclude) -> tuple[Coord, float]:
    scores = _exit_scores(cells, passable, start, exclude)
    flat = int(np.argmax(scores))
    best = float(scores.flat[flat])
    if best == -np.inf:
        raise MazeError(f"no reachable exit candidate from {start}")
    n = cells.shape[0]
    return (flat // n, flat % n), best


# --- generation -----------------------------------------------------------------

_LATTICE_STEPS = ((-1, 0), (1, 0), (0, 1), (0, -1))


def _branch_probability(dead_end_factor: float) -> float:
    # Chance of resuming from a random stack cell instead of the newest one;
    # side branches raise the dead-end count.
    return min(0.9, 2.0 * dead_end_factor)


def _sectors(j: int) -> list[tuple[float, float, float, float]]:
    if j == 1:
        return [(0.0, 1.0, 0.0, 1.0)]
    if j == 5:
        quads = [(r, r + 0.5, c, c + 0.5) for r in (0.0, 0.5) for c in (0.0, 0.5)]
        return quads + [(0.25, 0.75, 0.25, 0.75)]
    thirds = (0.0, 1 / 3, 2 / 3)
    return [(r, r + 1 / 3, c, c + 1 / 3) for r in thirds for c in thirds]


def _pick_start_nodes(lattice: int, j: int, rng: np.random.Generator) -> list[Coord]:
    picked: list[Coord] = []
    for r0, r1, c0, c1 in _sectors(j):
        rows = range(int(r0 * lattice), max(int(r0 * lattice) + 1, int(math.ceil(r1 * lattice))))
        cols = range(int(c0 * lattice), max(int(c0 * lattice) + 1, int(math.ceil(c1 * lattice))))
        free = [(a, b) for a in rows for b in cols if (a, b) not in picked]
        if not free:
            free = [(a, b) for a in range(lattice) for b in range(lattice) if (a, b) not in picked]
        picked.append(free[int(rng.integers(len(free)))])
    return picked


def _carve(size: int, dead_end_factor: float, rng: np.random.Generator) -> tuple[np.ndarray, list[Coord]]:
    cells = np.full((size, size), Cell.WALL, dtype=np.uint8)
    cells[0, :] = cells[-1, :] = cells[:, 0] = cells[:, -1] = Cell.FRAME
    coords = list(range(1, size - 1, 2))
    lat = len(coords)
    owner = np.full((lat, lat), -1, dtype=np.int32)
    seeds = _pick_start_nodes(lat, start_count(size), rng)
    stacks: list[list[Coord]] = []
    for i, (a, b) in enumerate(seeds):
        owner[a, b] = i
        cells[coords[a], coords[b]] = Cell.OPEN
        stacks.append([(a, b)])

    branch_p = _branch_probability(dead_end_factor)
    while any(stacks):
        for i, stack in enumerate(stacks):
            if not stack:
                continue
            if len(stack) > 1 and rng.random() < branch_p:
                idx = int(rng.integers(len(stack)))
            else:
                idx = len(stack) - 1
            a, b = stack[idx]
            options = [
                (a + da, b + db)
                for da, db in _LATTICE_STEPS
                if 0 <= a + da < lat and 0 <= b + db < lat and owner[a + da, b + db] < 0
            ]
            if not options:
                stack.pop(idx)
                continue
            na, nb = options[int(rng.integers(len(options)))]
            owner[na, nb] = i
            cells[coords[na], coords[nb]] = Cell.OPEN
            cells[coords[a] + (na - a), coords[b] + (nb - b)] = Cell.OPEN
            stack.append((na, nb))

    # Join the per-start trees into one spanning tree.
    joins = []
    for a in range(lat):
        for b in range(lat):
            if a + 1 < lat and owner[a, b] != owner[a + 1, b]:
                joins.append((a, b, 1, 0))
            if b + 1 < lat and owner[a, b] != owner[a, b + 1]:
                joins.append((a, b, 0, 1))
    parent = list(range(len(seeds)))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for idx in rng.permutation(len(joins)):
        a, b, da, db = joins[int(idx)]
        ra, rb = find(int(owner[a, b])), find(int(owner[a + da, b + db]))
        if ra != rb:
            parent[ra] = rb
            cells[coords[a] + da, coords[b] + db] = Cell.OPEN

    starts = [(coords[a], coords[b]) for a, b in seeds]
    return cells, starts


def dead_end_fraction(cells: np.ndarray) -> float:
    passable = (cells == Cell.OPEN) | (cells == Cell.EXIT)
    total = np.count_nonzero(passable)
    if not total:
        return 0.0
    deg = open_neighbor_counts(passable)
    return float(np.count_nonzero(passable & (deg == 1)) / total)


def _adjust_dead_ends(cells: np.ndarray, target: float, rng: np.random.Generator, keep) -> None:
    """Move the dead-end fraction toward ``target`` (within the tolerance band).

    Raising: open a stub next to a corridor cell, or else retract a dead-end
    tip whose neighbour is a plain corridor (the neighbour becomes the new
    tip). Lowering: open a wall next to a dead end, braiding a loop.
    Cells in ``keep`` are never filled.
    """
    lo, hi = target * (1 - DEAD_END_TOLERANCE), target * (1 + DEAD_END_TOLERANCE)
    interior = np.zeros(cells.shape, dtype=bool)
    interior[1:-1, 1:-1] = True
    protected = np.zeros(cells.shape, dtype=bool)
    for cell in keep:
        protected[cell] = True
    for _ in range(cells.size):
        passable = cells == Cell.OPEN
        deg = open_neighbor_counts(passable)
        dead = passable & (deg == 1)
        frac = np.count_nonzero(dead) / np.count_nonzero(passable)
        wall = interior & (cells == Cell.WALL)
        fill = False
        if frac < lo:
            # a stub only adds a dead end if its single neighbour is not one already
            good_nb = open_neighbor_counts(passable & (deg >= 2))
            cand = np.argwhere(wall & (deg == 1) & (good_nb == 1))
            if not len(cand):
                corridor_nb = open_neighbor_counts(passable & (deg == 2))
                cand = np.argwhere(dead & (corridor_nb == 1) & ~protected)
                fill = True
        elif frac > hi:
            near_dead = open_neighbor_counts(dead) > 0
            cand = np.argwhere(wall & (deg >= 2) & near_dead)
        else:
            return
        if not len(cand):
            return
        r, c = cand[int(rng.integers(len(cand)))]
        cells[r, c] = Cell.WALL if fill else Cell.OPEN


def generate_maze(size: int, dead_end_factor: float, seed: int, max_attempts: int = MAX_ATTEMPTS) -> MazeGrid:
    """Generate a validated maze. Pure function of its arguments."""
    if size < MIN_SIZE:
        raise ValueError(f"size must be >= {MIN_SIZE}")
    lo, hi = DEAD_END_RANGE
    if not lo <= dead_end_factor <= hi:
        raise ValueError(f"dead_end_factor must lie in [{lo}, {hi}]")
    if seed < 0:
        raise ValueError("seed must be non-negative")
    reasons: list[str] = []
    for attempt in range(max_attempts):
        rng = np.random.default_rng([seed, attempt])
        cells, starts = _carve(size, dead_end_factor, rng)
        _adjust_dead_ends(cells, dead_end_factor, rng, starts)
        passable = cells == Cell.OPEN
        try:
            exit_cell, _ = _best_exit(cells, passable, starts[0], set(starts))
        except MazeError as exc:
            reasons = [str(exc)]
            continue
        cells[exit_cell] = Cell.EXIT
        grid = MazeGrid(cells, tuple(starts), exit_cell, seed, dead_end_factor)
        report = validate_maze(grid)
        if report.passed:
            return grid
        reasons = report.failures
    raise MazeGenerationError("; ".join(reasons) or "validation failed", max_attempts)


def generate_tier(tier: str | Tier, seed: int) -> MazeGrid:
    t = TIERS[tier] if isinstance(tier, str) else tier
    return generate_maze(t.size, t.dead_end_factor, seed)

