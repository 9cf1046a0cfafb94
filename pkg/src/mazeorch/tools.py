"""Tool calls exchanged between policies and the engine, and the policy context."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .active_inference import Features, FreeEnergyRecord, WeightVector
from .environment import BacktrackMode, Observation
from .geometry import Coord, Direction


class ToolKind(Enum):
    MOVE_NORTH = "move_north"
    MOVE_SOUTH = "move_south"
    MOVE_EAST = "move_east"
    MOVE_WEST = "move_west"
    GET_CURRENT_VIEW = "get_current_view"
    MARK_DEAD_END = "mark_dead_end"
    START_BACKTRACKING = "start_backtracking"
    FINISH = "finish"

    @property
    def direction(self) -> Direction | None:
        return _MOVE_DIRECTIONS.get(self)

    @classmethod
    def move(cls, direction: Direction) -> "ToolKind":
        return _DIRECTION_MOVES[direction]


_MOVE_DIRECTIONS = {
    ToolKind.MOVE_NORTH: Direction.NORTH,
    ToolKind.MOVE_SOUTH: Direction.SOUTH,
    ToolKind.MOVE_EAST: Direction.EAST,
    ToolKind.MOVE_WEST: Direction.WEST,
}
_DIRECTION_MOVES = {d: k for k, d in _MOVE_DIRECTIONS.items()}


@dataclass(frozen=True)
class ToolCall:
    kind: ToolKind
    issued_by: int

    @classmethod
    def move(cls, direction: Direction, agent_id: int) -> "ToolCall":
        return cls(ToolKind.move(direction), agent_id)


@dataclass(frozen=True)
class Decision:
    """One policy decision: a primary tool call plus the optional dead-end mark."""

    call: ToolCall
    mark: bool = False
    tokens: tuple[str, ...] | None = None
    violations: int = 0
    rationale: str = ""


class PolicyFailure(Exception):
    """Raised by a policy that could not produce a usable tool call."""


@dataclass(frozen=True)
class PolicyContext:
    agent_id: int
    t: int
    k: int
    observation: Observation
    position: Coord
    previous_position: Coord | None
    weights: WeightVector
    features: dict[Direction, Features]
    scores: dict[Direction, float]
    backtrack: BacktrackMode
    recent_moves: tuple[Coord, ...]
    can_backtrack: bool
    dead_end_confidence: float
    exit_cell: Coord | None = None  # only set when the exit is a 4-neighbour
    guidance: object | None = None  # orchestration.Directive
    focus: tuple[Coord, ...] = ()
    teammate_recent: frozenset = frozenset()
    teammate_dead_ends: frozenset = frozenset()
    teammate_junctions: frozenset = frozenset()
    marked_dead_ends: frozenset = frozenset()
    visited_count: int = 0
    steps_remaining: int = 0
    last_record: FreeEnergyRecord | None = None
    prompt_modifiers: tuple[str, ...] = field(default=())
