"""Agent-facing maze tools: moves, local view, dead-end marking, backtracking."""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import kernels
from .active_inference import BASE_WEIGHTS, RECENT_WINDOW, WeightVector
from .geometry import DIRECTIONS, Cell, Coord, Direction
from .maze import MazeGrid


class FailureReason(str, Enum):
    BLOCKED_BY_WALL = "BlockedByWall"
    BOUNDARY_VIOLATION = "BoundaryViolation"
    LOCK_VIOLATION = "LockViolation"


class BacktrackError(Exception):
    pass


class AlreadyBacktracking(BacktrackError):
    pass


class NoUnexploredOpening(BacktrackError):
    pass


class BacktrackKind(Enum):
    INACTIVE = "inactive"
    ACTIVE = "active"  # planned route, deviation allowed (cancels it)
    LOCK = "lock"  # planned route, only the next planned step is legal


@dataclass(frozen=True)
class BacktrackMode:
    kind: BacktrackKind = BacktrackKind.INACTIVE
    target: Coord | None = None
    plan: tuple[Coord, ...] = ()
    cursor: int = 0

    @property
    def engaged(self) -> bool:
        return self.kind is not BacktrackKind.INACTIVE

    def next_cell(self) -> Coord | None:
        return self.plan[self.cursor] if self.engaged and self.cursor < len(self.plan) else None


INACTIVE = BacktrackMode()


@dataclass
class AgentState:
    agent_id: int
    position: Coord
    previous_position: Coord | None = None
    visited: set = field(default_factory=set)
    path_history: list = field(default_factory=list)
    marked_dead_ends: set = field(default_factory=set)
    recent_moves: deque = field(default_factory=lambda: deque(maxlen=RECENT_WINDOW))
    observed: dict = field(default_factory=dict)
    total_moves: int = 0
    total_move_attempts: int = 0
    dead_end_revisits: int = 0
    backtrack: BacktrackMode = INACTIVE
    weights: WeightVector = BASE_WEIGHTS

    @classmethod
    def start(cls, agent_id: int, position: Coord, weights: WeightVector = BASE_WEIGHTS) -> "AgentState":
        position = (int(position[0]), int(position[1]))
        return cls(
            agent_id=agent_id,
            position=position,
            visited={position},
            path_history=[position],
            recent_moves=deque([position], maxlen=RECENT_WINDOW),
            weights=weights,
        )

    @property
    def failed_moves(self) -> int:
        return self.total_move_attempts - self.total_moves

    def fingerprint(self) -> tuple:
        """Hashable summary used for replay equality checks."""
        return (
            self.agent_id, self.position, self.previous_position, tuple(self.path_history),
            tuple(sorted(self.visited)), tuple(sorted(self.marked_dead_ends)), tuple(self.recent_moves),
            self.total_moves, self.total_move_attempts, self.dead_end_revisits, self.backtrack, self.weights,
        )


@dataclass(frozen=True)
class Observation:
    position: Coord
    available_moves: tuple[Direction, ...]
    local_view: tuple[tuple[Cell, ...], ...]
    exit_adjacent: bool
    unexplored_directions: tuple[Direction, ...]

    def render(self) -> str:
        return "\n".join("".join(c.char for c in row) for row in self.local_view)


@dataclass(frozen=True)
class MoveResult:
    success: bool
    new_position: Coord | None = None
    failure_reason: FailureReason | None = None


@dataclass(frozen=True)
class MarkOutcome:
    marked: bool
    reason: str | None = None


def _advance_plan(state: AgentState, cell: Coord) -> None:
    mode = state.backtrack
    if not mode.engaged:
        return
    if mode.next_cell() == cell:
        cursor = mode.cursor + 1
        state.backtrack = INACTIVE if cursor >= len(mode.plan) else BacktrackMode(mode.kind, mode.target, mode.plan, cursor)
    else:
        state.backtrack = INACTIVE


def apply_move(state: AgentState, grid: MazeGrid, direction: Direction) -> MoveResult:
    mode = state.backtrack
    target = direction.step(state.position)
    if mode.kind is BacktrackKind.LOCK and target != mode.next_cell():
        return MoveResult(False, None, FailureReason.LOCK_VIOLATION)
    state.total_move_attempts += 1
    kind = grid.kind(target)
    if kind is Cell.FRAME:
        return MoveResult(False, None, FailureReason.BOUNDARY_VIOLATION)
    if kind is Cell.WALL:
        return MoveResult(False, None, FailureReason.BLOCKED_BY_WALL)
    state.previous_position = state.position
    state.position = target
    state.visited.add(target)
    state.path_history.append(target)
    state.recent_moves.append(target)
    state.total_moves += 1
    if target in state.marked_dead_ends:
        state.dead_end_revisits += 1
    _advance_plan(state, target)
    return MoveResult(True, target, None)


def local_view(grid: MazeGrid, cell: Coord) -> tuple[tuple[Cell, ...], ...]:
    r, c = cell
    return tuple(tuple(grid.kind((r + dr, c + dc)) for dc in (-1, 0, 1)) for dr in (-1, 0, 1))


def observe(state: AgentState, grid: MazeGrid) -> Observation:
    """Build the observation at the agent's position without recording it."""
    pos = state.position
    view = local_view(grid, pos)
    available = tuple(d for d in DIRECTIONS if grid.is_passable(d.step(pos)))
    unexplored = tuple(d for d in available if d.step(pos) not in state.visited)
    exit_adjacent = any(cell is Cell.EXIT for row in view for cell in row)
    return Observation(pos, available, view, exit_adjacent, unexplored)


def get_current_view(state: AgentState, grid: MazeGrid) -> Observation:
    """Observe and add the 3x3 patch to the agent's local map."""
    obs = observe(state, grid)
    r, c = obs.position
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            state.observed[(r + dr, c + dc)] = obs.local_view[dr + 1][dc + 1]
    return obs


def dead_end_confidence(state: AgentState, grid: MazeGrid) -> float:
    """Fraction of the four neighbours that are blocked or already visited."""
    closed = 0
    for d in DIRECTIONS:
        nb = d.step(state.position)
        if not grid.is_passable(nb) or nb in state.visited:
            closed += 1
    return closed / 4.0


def mark_check(state: AgentState, grid: MazeGrid) -> str | None:
    """First violated marking criterion for the current cell, or None."""
    pos = state.position
    if state.backtrack.engaged:
        return "backtracking"
    if pos in state.marked_dead_ends:
        return "already marked"
    moves = grid.open_neighbors(pos)
    if len(moves) != 1:
        return "multiple paths" if moves else "no paths"
    if moves[0] not in state.visited:
        return "unexplored directions"
    if dead_end_confidence(state, grid) < state.weights.dead_end_confidence:
        return "low confidence"
    return None


def mark_dead_end(state: AgentState, grid: MazeGrid) -> MarkOutcome:
    reason = mark_check(state, grid)
    if reason is not None:
        return MarkOutcome(False, reason)
    state.marked_dead_ends.add(state.position)
    return MarkOutcome(True, None)


def _visited_mask(state: AgentState, shape) -> np.ndarray:
    mask = np.zeros(shape, dtype=np.uint8)
    for cell in state.visited:
        mask[cell] = 1
    return mask


def known_openings(state: AgentState, grid: MazeGrid) -> list[Coord]:
    """Visited cells with at least one passable, unvisited neighbour (row-major)."""
    out = []
    for cell in sorted(state.visited):
        if any(nb not in state.visited for nb in grid.open_neighbors(cell)):
            out.append(cell)
    return out


def plan_backtrack(state: AgentState, grid: MazeGrid) -> tuple[Coord | None, tuple[Coord, ...]]:
    """Nearest opening by BFS over visited cells; ties go to row-major order."""
    openings = known_openings(state, grid)
    if not openings:
        return None, ()
    dist = kernels.bfs_distances(_visited_mask(state, grid.cells.shape), *state.position)
    reachable = [(int(dist[c]), c) for c in openings if dist[c] >= 0]
    if not reachable:
        return None, ()
    _, target = min(reachable)
    path = kernels.trace_path(dist, target[0], target[1])
    return target, tuple(tuple(p) for p in path[1:])


def start_backtracking(state: AgentState, grid: MazeGrid, lock: bool = True) -> tuple[Coord, ...]:
    """Plan a route to the nearest unexplored opening and engage backtracking.

    Returns the planned cells (excluding the current one). An empty plan means
    the agent already stands at an opening; the mode then stays inactive.
    """
    if state.backtrack.engaged:
        raise AlreadyBacktracking(f"agent {state.agent_id} is already backtracking")
    target, plan = plan_backtrack(state, grid)
    if target is None:
        raise NoUnexploredOpening(f"agent {state.agent_id} has no reachable unexplored opening")
    if plan:
        kind = BacktrackKind.LOCK if lock else BacktrackKind.ACTIVE
        state.backtrack = BacktrackMode(kind, target, plan, 0)
    return plan


def step_budget(grid_or_size, multiplier: float = 2.5) -> int:
    n = grid_or_size.size if isinstance(grid_or_size, MazeGrid) else int(grid_or_size)
    return math.ceil(multiplier * n * n)


# --- trace log ----------------------------------------------------------------------
#
# One line per tool call: t,k,agent_id,tool,args,result,position
# tool     : move_north | move_south | move_east | move_west | get_current_view |
#            mark_dead_end | start_backtracking | finish | policy_failure
# args     : '-' or a token without commas
# result   : ok | BlockedByWall | BoundaryViolation | LockViolation | marked |
#            skipped:<reason> | plan:<length> | error:<name> | view:<moves>
# position : <row>:<col> after the call

TRACE_HEADER = "t,k,agent_id,tool,args,result,position"


def format_trace_line(t: int, k: int, agent_id: int, tool: str, args: str, result: str, position: Coord) -> str:
    for token in (tool, args, result):
        if "," in token or "\n" in token:
            raise ValueError(f"trace token {token!r} contains a separator")
    return f"{t},{k},{agent_id},{tool},{args or '-'},{result},{position[0]}:{position[1]}"


def parse_trace_line(line: str) -> dict:
    t, k, agent_id, tool, args, result, position = line.split(",")
    r, c = position.split(":")
    return {
        "t": int(t), "k": int(k), "agent_id": int(agent_id), "tool": tool,
        "args": args, "result": result, "position": (int(r), int(c)),
    }
