"""Agent decision policies: memory-enhanced random walk, rule hierarchy, LLM adapter."""
from __future__ import annotations

from typing import Protocol

import numpy as np

from .environment import BacktrackKind
from .geometry import DIRECTIONS, Direction
from .orchestration import DirectiveKind
from .tools import Decision, PolicyContext, PolicyFailure, ToolCall, ToolKind

__all__ = [
    "Policy", "RandomWalkPolicy", "HeuristicPolicy", "LLMPolicy", "PolicyFailure",
    "random_walk_decide", "heuristic_decide", "llm_decide", "make_policy", "POLICY_NAMES",
]


class Policy(Protocol):
    name: str
    marks_dead_ends: bool  # engine marks automatically whenever the criteria hold

    def decide(self, ctx: PolicyContext, rng: np.random.Generator) -> Decision: ...


def random_walk_decide(ctx: PolicyContext, rng: np.random.Generator) -> ToolCall:
    """Uniform over available moves, avoiding the cell just left when possible."""
    obs = ctx.observation
    moves = list(obs.available_moves)
    if not moves:
        if ctx.previous_position is not None:
            back = Direction.between(ctx.position, ctx.previous_position)
            return ToolCall.move(back, ctx.agent_id)
        return ToolCall(ToolKind.MOVE_NORTH, ctx.agent_id)
    if len(moves) > 1 and ctx.previous_position is not None:
        moves = [d for d in moves if d.step(ctx.position) != ctx.previous_position] or moves
    choice = moves[int(rng.integers(len(moves)))]
    return ToolCall.move(choice, ctx.agent_id)


def _argmax(scores) -> Direction | None:
    best = None
    for d in DIRECTIONS:
        if d in scores and (best is None or scores[d] > scores[best]):
            best = d
    return best


def _toward(ctx: PolicyContext, cell) -> ToolCall:
    return ToolCall.move(Direction.between(ctx.position, cell), ctx.agent_id)


def heuristic_decide(ctx: PolicyContext) -> ToolCall:
    """Ordered decision rules; the first rule that applies decides.

    1. lock mode: take the next planned step
       (exit next door: step into it)
    2. teammate avoidance lives in the coordinate feature of the scores
    3. an orchestrator override direction, if it is available
    4. an active, unlocked backtracking plan: keep following it
    5. oscillation on the current cell: start backtracking, or, when already
       standing on an opening, take its best unexplored direction
    6. nothing left to explore here: start backtracking
    7. best movement score
    """
    obs = ctx.observation
    agent = ctx.agent_id
    if ctx.backtrack.kind is BacktrackKind.LOCK and ctx.backtrack.next_cell() is not None:
        return _toward(ctx, ctx.backtrack.next_cell())
    if ctx.exit_cell is not None:
        return _toward(ctx, ctx.exit_cell)
    guidance = ctx.guidance
    if (
        guidance is not None
        and guidance.kind is DirectiveKind.OVERRIDE_PENALTY
        and guidance.direction in obs.available_moves
    ):
        return ToolCall.move(guidance.direction, agent)
    if ctx.backtrack.kind is BacktrackKind.ACTIVE and ctx.backtrack.next_cell() is not None:
        return _toward(ctx, ctx.backtrack.next_cell())
    if ctx.recent_moves.count(ctx.position) >= 3:
        if ctx.can_backtrack:
            return ToolCall(ToolKind.START_BACKTRACKING, agent)
        fresh = _argmax({d: ctx.scores[d] for d in obs.unexplored_directions if d in ctx.scores})
        if fresh is not None:
            return ToolCall.move(fresh, agent)
    if ctx.can_backtrack and (
        not obs.available_moves
        or (not obs.unexplored_directions and ctx.dead_end_confidence >= ctx.weights.backtrack_threshold)
    ):
        return ToolCall(ToolKind.START_BACKTRACKING, agent)
    best = _argmax(ctx.scores)
    if best is None:
        return ToolCall(ToolKind.GET_CURRENT_VIEW, agent)
    return ToolCall.move(best, agent)


class RandomWalkPolicy:
    name = "random_walk"
    marks_dead_ends = False

    def decide(self, ctx: PolicyContext, rng: np.random.Generator) -> Decision:
        return Decision(random_walk_decide(ctx, rng))


class HeuristicPolicy:
    name = "heuristic"
    marks_dead_ends = True

    def decide(self, ctx: PolicyContext, rng: np.random.Generator) -> Decision:
        return Decision(heuristic_decide(ctx))


def llm_decide(ctx: PolicyContext, transport, model: str = "gpt-4.1-nano", audit: list | None = None) -> Decision:
    from .llm import request_agent_decision

    return request_agent_decision(ctx, transport, model=model, audit=audit)


class LLMPolicy:
    name = "llm"
    marks_dead_ends = False

    def __init__(self, transport, model: str = "gpt-4.1-nano", audit: list | None = None):
        self.transport = transport
        self.model = model
        self.audit = audit

    def decide(self, ctx: PolicyContext, rng: np.random.Generator) -> Decision:
        return llm_decide(ctx, self.transport, self.model, self.audit)


POLICY_NAMES = ("random_walk", "heuristic", "llm")


def make_policy(name: str, **kwargs) -> Policy:
    if name == "random_walk":
        return RandomWalkPolicy()
    if name == "heuristic":
        return HeuristicPolicy()
    if name == "llm":
        if "transport" not in kwargs:
            from .llm import HttpTransport

            kwargs["transport"] = HttpTransport.from_env()
        return LLMPolicy(**kwargs)
    raise ValueError(f"unknown policy {name!r}; choose from {', '.join(POLICY_NAMES)}")
