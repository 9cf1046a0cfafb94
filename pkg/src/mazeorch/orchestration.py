"""Orchestrator node: global map, dead-end checks, focus assignment, directives.

Every decision is serialized with the same three keys as the LLM response
contract (``analysis``, ``corrections``, ``guidance_for_agents``) whether it
came from the rule engine here or from a language model, so logs of both
modes can be diffed.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping

import numpy as np

from . import kernels
from .active_inference import Category, Features, WeightVector, best_direction, score_features
from .environment import AgentState
from .geometry import DIRECTIONS, Cell, Coord, Direction

FOCUS_CELLS_PER_AGENT = 3
RELAX_FACTOR = 0.5
RELAX_STREAK = 3


class PlanStep(Enum):
    LOOK_AROUND = "LookAround"
    SELECT_DIRECTION = "SelectDirection"
    MOVE = "Move"
    MARK_DEAD_END = "MarkDeadEnd"


DEFAULT_PLAN: tuple[PlanStep, ...] = (
    PlanStep.LOOK_AROUND,
    PlanStep.SELECT_DIRECTION,
    PlanStep.MOVE,
    PlanStep.MARK_DEAD_END,
)


def validate_plan(plan) -> tuple[PlanStep, ...]:
    plan = tuple(PlanStep(p) for p in plan)
    if PlanStep.MOVE not in plan:
        raise ValueError("plan must contain at least one Move step")
    return plan


class DirectiveKind(Enum):
    EXPLORATION_FOCUS = "exploration_focus"
    OVERRIDE_PENALTY = "override_penalty"
    RELAX_WEIGHTS = "relax_weights"
    NO_OP = "no_op"


@dataclass(frozen=True)
class Directive:
    agent_id: int
    kind: DirectiveKind = DirectiveKind.NO_OP
    cells: tuple[Coord, ...] = ()
    direction: Direction | None = None
    factor: float | None = None
    rationale: str = ""

    def text(self) -> str:
        if self.kind is DirectiveKind.OVERRIDE_PENALTY:
            return f"Override penalty and go {self.direction.name}."
        if self.kind is DirectiveKind.RELAX_WEIGHTS:
            return f"Relax weights by factor {self.factor} and break the loop."
        if self.kind is DirectiveKind.EXPLORATION_FOCUS:
            return "Explore toward " + ", ".join(f"({r}, {c})" for r, c in self.cells) + "."
        return self.rationale or "Continue current exploration."


class UnknownAgentError(KeyError):
    pass


@dataclass(frozen=True)
class AgentSnapshot:
    agent_id: int
    position: Coord
    visited: frozenset
    marked_dead_ends: frozenset
    observed: tuple  # ((cell, Cell), ...)
    recent: tuple
    category: Category | None = None


def snapshot(state: AgentState, category: Category | None = None) -> AgentSnapshot:
    return AgentSnapshot(
        agent_id=state.agent_id,
        position=state.position,
        visited=frozenset(state.visited),
        marked_dead_ends=frozenset(state.marked_dead_ends),
        observed=tuple(sorted(state.observed.items())),
        recent=tuple(state.path_history[-10:]),
        category=category,
    )


@dataclass
class OrchestratorState:
    size: int
    agent_ids: tuple[int, ...]
    discovered: dict = field(default_factory=dict)
    agent_snapshots: dict = field(default_factory=dict)
    validated_dead_ends: set = field(default_factory=set)
    remove_dead_ends: list = field(default_factory=list)
    add_exploration_focus: list = field(default_factory=list)
    focus_by_agent: dict = field(default_factory=dict)
    guidance: dict = field(default_factory=dict)
    category_streaks: dict = field(default_factory=dict)
    t: int = 0

    @classmethod
    def initialize(cls, size: int, agents) -> "OrchestratorState":
        orch = cls(size=size, agent_ids=tuple(a.agent_id for a in agents))
        for a in agents:
            snap = snapshot(a)
            orch.agent_snapshots[a.agent_id] = snap
            orch.discovered.update(dict(snap.observed))
            for cell in snap.visited:
                orch.discovered.setdefault(cell, Cell.OPEN)
        return orch

    def is_open(self, cell: Coord) -> bool:
        return self.discovered.get(cell) in (Cell.OPEN, Cell.EXIT)

    def masks(self) -> tuple[np.ndarray, np.ndarray]:
        """(discovered, discovered-and-open) boolean masks over the grid."""
        known = np.zeros((self.size, self.size), dtype=bool)
        open_ = np.zeros((self.size, self.size), dtype=bool)
        for (r, c), kind in self.discovered.items():
            if 0 <= r < self.size and 0 <= c < self.size:
                known[r, c] = True
                open_[r, c] = kind in (Cell.OPEN, Cell.EXIT)
        return known, open_

    def passable_mask(self) -> np.ndarray:
        return self.masks()[1].astype(np.uint8)

    def frontier(self) -> list[Coord]:
        """Discovered open cells with an undiscovered in-bounds neighbour (row-major)."""
        known, open_ = self.masks()
        padded = np.pad(known, 1, constant_values=True)
        unknown_nb = (
            ~padded[:-2, 1:-1] | ~padded[2:, 1:-1] | ~padded[1:-1, :-2] | ~padded[1:-1, 2:]
        )
        rows, cols = np.nonzero(open_ & unknown_nb)
        return [(int(r), int(c)) for r, c in zip(rows, cols)]


def update_global_state(orch: OrchestratorState, snapshots) -> OrchestratorState:
    for snap in snapshots:
        if snap.agent_id not in orch.agent_ids:
            raise UnknownAgentError(snap.agent_id)
    for snap in snapshots:
        orch.agent_snapshots[snap.agent_id] = snap
        orch.discovered.update(dict(snap.observed))
        for cell in snap.visited:
            orch.discovered.setdefault(cell, Cell.OPEN)
        if snap.category is Category.LOW_DRIVE_HIGH_COST:
            orch.category_streaks[snap.agent_id] = orch.category_streaks.get(snap.agent_id, 0) + 1
        else:
            orch.category_streaks[snap.agent_id] = 0
    orch.t += 1
    return orch


def validate_dead_ends(orch: OrchestratorState) -> list[Coord]:
    """Marked dead ends contradicted by the discovered map.

    A marking is flagged when the discovered map shows at least two open
    neighbours and not all of them lie on the marking agent's own path.
    """
    flagged = set()
    confirmed = set()
    for aid in orch.agent_ids:
        snap = orch.agent_snapshots.get(aid)
        if snap is None:
            continue
        for cell in snap.marked_dead_ends:
            open_nbs = [d.step(cell) for d in DIRECTIONS if orch.is_open(d.step(cell))]
            if len(open_nbs) >= 2 and any(nb not in snap.visited for nb in open_nbs):
                flagged.add(cell)
            else:
                confirmed.add(cell)
    orch.validated_dead_ends = confirmed - flagged
    orch.remove_dead_ends = sorted(flagged)
    return orch.remove_dead_ends


def assign_exploration_focus(orch: OrchestratorState) -> tuple[list[Coord], dict[int, Directive]]:
    """Split frontier cells among agents by BFS distance over discovered cells.

    Each frontier cell goes to its nearest agent (lower id on ties); each agent
    receives at most three of its cells, nearest first, then row-major.
    """
    frontier = orch.frontier()
    guidance = {aid: Directive(aid, DirectiveKind.NO_OP, rationale="No frontier left.") for aid in orch.agent_ids}
    orch.focus_by_agent = {aid: () for aid in orch.agent_ids}
    if not frontier:
        orch.add_exploration_focus = []
        return [], guidance
    mask = orch.passable_mask()
    dists = {}
    for aid in orch.agent_ids:
        pos = orch.agent_snapshots[aid].position
        dists[aid] = kernels.bfs_distances(mask, pos[0], pos[1])
    owned: dict[int, list[tuple[int, Coord]]] = {aid: [] for aid in orch.agent_ids}
    for cell in frontier:
        best = None
        for aid in orch.agent_ids:
            d = int(dists[aid][cell])
            if d >= 0 and (best is None or d < best[0]):
                best = (d, aid)
        if best is not None:
            owned[best[1]].append((best[0], cell))
    focus_all = []
    for aid in orch.agent_ids:
        cells = tuple(c for _, c in sorted(owned[aid])[:FOCUS_CELLS_PER_AGENT])
        orch.focus_by_agent[aid] = cells
        if cells:
            guidance[aid] = Directive(aid, DirectiveKind.EXPLORATION_FOCUS, cells=cells,
                                      rationale="nearest frontier cells")
            focus_all.extend(cells)
    orch.add_exploration_focus = sorted(set(focus_all))
    return orch.add_exploration_focus, guidance


@dataclass(frozen=True)
class ConflictContext:
    """An agent's current decision inputs as seen by the orchestrator."""

    position: Coord
    features: Mapping[Direction, Features]
    weights: WeightVector


def _on_route_to_frontier(orch: OrchestratorState, mask, frontier, position: Coord, target: Coord) -> bool:
    if not frontier:
        return False
    from_agent = kernels.bfs_distances(mask, position[0], position[1])
    reach = [int(from_agent[f]) for f in frontier if from_agent[f] >= 0]
    if not reach or min(reach) == 0:
        return False
    from_target = kernels.bfs_distances(mask, target[0], target[1])
    via = [int(from_target[f]) for f in frontier if from_target[f] >= 0]
    return bool(via) and min(via) == min(reach) - 1


def resolve_conflicts(orch: OrchestratorState, contexts: Mapping[int, ConflictContext]) -> dict[int, Directive]:
    """Penalty overrides and weight relaxations.

    An override is issued when the direction an agent would prefer with its
    coordination/backtracking penalties removed is suppressed by them, is not
    its actual choice, and leads along a shortest route to the nearest
    frontier. Agents stuck in the low-drive/high-cost category for three
    consecutive iterations get a weight relaxation.
    """
    out: dict[int, Directive] = {}
    frontier = orch.frontier()
    mask = orch.passable_mask()
    for aid in orch.agent_ids:
        ctx = contexts.get(aid)
        if ctx is not None and ctx.features:
            scores = score_features(ctx.features, ctx.weights)
            unpenalized = {
                d: ctx.weights.explore * f.explore + ctx.weights.exploit * f.exploit
                + ctx.weights.coordinate * max(f.coordinate, 0.0) + ctx.weights.backtrack * max(f.backtrack, 0.0)
                for d, f in ctx.features.items()
            }
            preferred = best_direction(unpenalized)
            target = preferred.step(ctx.position)
            if (
                ctx.features[preferred].penalized
                and preferred is not best_direction(scores)
                and orch.is_open(target)
                and _on_route_to_frontier(orch, mask, frontier, ctx.position, target)
            ):
                out[aid] = Directive(aid, DirectiveKind.OVERRIDE_PENALTY, direction=preferred,
                                     rationale="penalty blocks the route to the nearest frontier")
                continue
        if orch.category_streaks.get(aid, 0) >= RELAX_STREAK:
            out[aid] = Directive(aid, DirectiveKind.RELAX_WEIGHTS, factor=RELAX_FACTOR,
                                 rationale="low drive with high cost for several iterations")
    return out


@dataclass
class OrchestratorDecision:
    analysis: str
    remove_dead_ends: list = field(default_factory=list)
    add_exploration_focus: list = field(default_factory=list)
    guidance: dict = field(default_factory=dict)  # agent_id -> Directive
    focus_by_agent: dict = field(default_factory=dict)

    def to_contract(self) -> dict:
        return {
            "analysis": self.analysis,
            "corrections": {
                "remove_dead_ends": [list(c) for c in self.remove_dead_ends],
                "add_exploration_focus": [list(c) for c in self.add_exploration_focus],
            },
            "guidance_for_agents": {str(aid): d.text() for aid, d in sorted(self.guidance.items())},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_contract(), sort_keys=True, separators=(",", ":"))


class RuleBasedOrchestrator:
    name = "rule"

    def step(self, orch: OrchestratorState, snapshots, contexts: Mapping[int, ConflictContext]) -> OrchestratorDecision:
        update_global_state(orch, snapshots)
        removed = validate_dead_ends(orch)
        focus, guidance = assign_exploration_focus(orch)
        guidance.update(resolve_conflicts(orch, contexts))
        orch.guidance = guidance
        kinds = sorted(d.kind.value for d in guidance.values())
        analysis = (
            f"iteration {orch.t}: {len(orch.discovered)} cells discovered, "
            f"{len(orch.frontier())} frontier cells, {len(removed)} dead-end corrections, "
            f"directives {kinds}"
        )
        return OrchestratorDecision(analysis, list(removed), list(focus), dict(guidance), dict(orch.focus_by_agent))


# --- LLM response contract ----------------------------------------------------------


class OrchestratorResponseError(ValueError):
    pass


_DIRECTION_WORD = re.compile(r"\b(NORTH|SOUTH|EAST|WEST)\b", re.IGNORECASE)


def directive_from_text(agent_id: int, text: str, focus: tuple = ()) -> Directive:
    """Map a free-text guidance line onto a structured directive."""
    lowered = text.lower()
    m = _DIRECTION_WORD.search(text)
    if "override" in lowered and m:
        return Directive(agent_id, DirectiveKind.OVERRIDE_PENALTY, direction=Direction[m.group(1).upper()], rationale=text)
    if "relax" in lowered:
        return Directive(agent_id, DirectiveKind.RELAX_WEIGHTS, factor=RELAX_FACTOR, rationale=text)
    if focus:
        return Directive(agent_id, DirectiveKind.EXPLORATION_FOCUS, cells=tuple(focus), rationale=text)
    return Directive(agent_id, DirectiveKind.NO_OP, rationale=text)


def _cells(value, orch: OrchestratorState) -> list[Coord]:
    if not isinstance(value, list):
        raise OrchestratorResponseError("cell lists must be JSON arrays")
    out = []
    for item in value:
        if not (isinstance(item, list) and len(item) == 2 and all(isinstance(v, int) for v in item)):
            raise OrchestratorResponseError(f"bad cell {item!r}")
        cell = (item[0], item[1])
        if cell in orch.discovered:  # never accept invented coordinates
            out.append(cell)
    return sorted(set(out))


def parse_orchestrator_response(text: str, orch: OrchestratorState) -> OrchestratorDecision:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise OrchestratorResponseError(f"invalid JSON: {exc}") from None
    if not isinstance(data, dict) or set(data) != {"analysis", "corrections", "guidance_for_agents"}:
        raise OrchestratorResponseError("response must have exactly analysis, corrections, guidance_for_agents")
    corrections = data["corrections"]
    if not isinstance(corrections, dict):
        raise OrchestratorResponseError("corrections must be an object")
    remove = _cells(corrections.get("remove_dead_ends", []), orch)
    focus = _cells(corrections.get("add_exploration_focus", []), orch)
    guidance_raw = data["guidance_for_agents"]
    if not isinstance(guidance_raw, dict):
        raise OrchestratorResponseError("guidance_for_agents must be an object")
    guidance = {}
    for key, text_value in guidance_raw.items():
        try:
            aid = int(key)
        except ValueError:
            continue
        if aid not in orch.agent_ids or not isinstance(text_value, str):
            continue
        guidance[aid] = directive_from_text(aid, text_value, tuple(focus))
    focus_by_agent = {aid: tuple(focus) for aid in orch.agent_ids}
    return OrchestratorDecision(str(data["analysis"]), remove, focus, guidance, focus_by_agent)
