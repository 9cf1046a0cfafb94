"""Episode loop: agents step through a static plan, benchmarked and coordinated.

Per iteration every agent walks the plan in order. Each plan step may call
the policy or a tool; after every step the agent's free energy is recorded
and its weights are re-derived from it. When the orchestrator is part of the
configuration it runs once after each full iteration and its directives
apply to the next one.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np

from .active_inference import (
    BASE_WEIGHTS,
    CoordinationContext,
    FreeEnergyRecord,
    FreeEnergyTracker,
    ModulationConfig,
    Thresholds,
    WeightVector,
    format_fe_trace,
    modulate_weights,
    movement_features,
    score_features,
)
from .environment import (
    TRACE_HEADER,
    AgentState,
    BacktrackError,
    dead_end_confidence,
    format_trace_line,
    get_current_view,
    mark_check,
    mark_dead_end,
    apply_move,
    observe,
    plan_backtrack,
    start_backtracking,
    step_budget,
)
from .geometry import DIRECTIONS, Cell
from .maze import MazeGrid
from .orchestration import (
    DEFAULT_PLAN,
    ConflictContext,
    DirectiveKind,
    OrchestratorState,
    PlanStep,
    RuleBasedOrchestrator,
    snapshot,
    validate_plan,
)
from .policies import Policy, make_policy
from .tools import Decision, PolicyContext, PolicyFailure, ToolKind

TEAMMATE_MEMORY = 10


class Configuration(Enum):
    SOLO = "solo"
    FE_ONLY = "fe_only"
    FE_ORCHESTRATION = "fe_orchestration"

    @property
    def has_fe(self) -> bool:
        return self is not Configuration.SOLO

    @property
    def has_orchestration(self) -> bool:
        return self is Configuration.FE_ORCHESTRATION


class TerminationReason(Enum):
    EXIT_REACHED = "ExitReached"
    BUDGET_EXHAUSTED = "BudgetExhausted"
    TIMEOUT = "Timeout"


@dataclass
class RunConfig:
    grid: MazeGrid
    configuration: Configuration = Configuration.FE_ORCHESTRATION
    policy: object = "heuristic"  # name, Policy instance, or zero-argument factory
    num_agents: int | None = None  # default: 1 for solo, 2 otherwise
    seed: int = 0
    thresholds: Thresholds = field(default_factory=Thresholds)
    modulation: ModulationConfig = field(default_factory=ModulationConfig)
    step_budget_multiplier: float = 2.5
    budget: int | None = None  # overrides the multiplier when set
    timeout_seconds: float = 7200.0
    plan: tuple = DEFAULT_PLAN
    orchestrator: object = "rule"  # "rule", or any object with a step() like RuleBasedOrchestrator
    base_weights: WeightVector = BASE_WEIGHTS
    tier: str | None = None
    clock: Callable[[], float] = time.monotonic

    def __post_init__(self):
        self.configuration = Configuration(self.configuration)
        if self.step_budget_multiplier <= 0:
            raise ValueError("step_budget_multiplier must be positive")
        if self.budget is not None and self.budget < 0:
            raise ValueError("budget must be non-negative")
        if self.num_agents is None:
            self.num_agents = 1 if self.configuration is Configuration.SOLO else 2
        if self.num_agents < 1:
            raise ValueError("at least one execution agent is required")
        self.plan = validate_plan(self.plan)

    @property
    def step_limit(self) -> int:
        if self.budget is not None:
            return self.budget
        return step_budget(self.grid, self.step_budget_multiplier)

    def make_policy(self) -> Policy:
        if isinstance(self.policy, str):
            return make_policy(self.policy)
        if hasattr(self.policy, "decide"):
            return self.policy
        if callable(self.policy):
            return self.policy()
        raise TypeError(f"cannot build a policy from {self.policy!r}")


@dataclass
class RunResult:
    success: bool
    termination_reason: TerminationReason
    steps_taken: int
    failed_moves: int
    budget: int
    iterations: int
    wall_seconds: float
    policy_failures: int = 0
    protocol_violations: int = 0
    seed: int = 0
    fe_records: list = field(default_factory=list)
    trace: list = field(default_factory=list)
    orchestrator_log: list = field(default_factory=list)
    directives: list = field(default_factory=list)
    final_positions: tuple = ()

    def trace_text(self) -> str:
        return "".join(line + "\n" for line in [TRACE_HEADER, *self.trace])

    def fe_trace_text(self) -> str:
        return format_fe_trace(self.fe_records)

    def summary_row(self) -> dict:
        return {
            "success": self.success,
            "termination_reason": self.termination_reason.value,
            "steps_taken": self.steps_taken,
            "failed_moves": self.failed_moves,
            "policy_failures": self.policy_failures,
            "iterations": self.iterations,
        }


class _Episode:
    def __init__(self, config: RunConfig):
        self.cfg = config
        self.grid = config.grid
        self.policy = config.make_policy()
        self.rng = np.random.default_rng(config.seed)
        start = self.grid.starts[0]
        self.agents = [AgentState.start(i, start, config.base_weights) for i in range(config.num_agents)]
        self.trackers = {a.agent_id: FreeEnergyTracker(a.agent_id, config.thresholds, config.modulation)
                         for a in self.agents}
        self.last_record: dict[int, FreeEnergyRecord] = {}
        self.guidance: dict = {}
        self.focus: dict = {}
        self.scale = {a.agent_id: 1.0 for a in self.agents}
        self.orchestrator = None
        self.orch_state = None
        if config.configuration.has_orchestration:
            orch = config.orchestrator
            self.orchestrator = RuleBasedOrchestrator() if orch in (None, "rule") else orch
            self.orch_state = OrchestratorState.initialize(self.grid.size, self.agents)
        self.budget = config.step_limit
        self.steps = 0
        self.policy_failures = 0
        self.violations = 0
        self.trace: list[str] = []
        self.fe_records: list[FreeEnergyRecord] = []
        self.orch_log: list[str] = []
        self.directives: list = []

    # --- helpers ------------------------------------------------------------

    def log(self, t, k, agent, tool, args, result):
        self.trace.append(format_trace_line(t, k, agent.agent_id, tool, args, result, agent.position))

    def coordination(self, agent: AgentState) -> CoordinationContext:
        recent, dead = set(), set()
        for other in self.agents:
            if other is agent:
                continue
            recent.update(other.path_history[-TEAMMATE_MEMORY:])
            dead.update(other.marked_dead_ends)
        return CoordinationContext(frozenset(recent), frozenset(dead), frozenset(self.focus.get(agent.agent_id, ())))

    def teammate_junctions(self, agent: AgentState) -> frozenset:
        out = set()
        for other in self.agents:
            if other is not agent:
                out.update(c for c in other.visited if self.grid.degree(c) >= 3)
        return frozenset(out)

    def context(self, agent: AgentState, t: int, k: int) -> PolicyContext:
        obs = observe(agent, self.grid)
        coord = self.coordination(agent)
        features = movement_features(agent, obs, coord)
        scores = score_features(features, agent.weights)
        exit_cell = None
        for d in obs.available_moves:
            if self.grid.kind(d.step(agent.position)) is Cell.EXIT:
                exit_cell = d.step(agent.position)
                break
        can_backtrack = not agent.backtrack.engaged and bool(plan_backtrack(agent, self.grid)[1])
        return PolicyContext(
            agent_id=agent.agent_id,
            t=t,
            k=k,
            observation=obs,
            position=agent.position,
            previous_position=agent.previous_position,
            weights=agent.weights,
            features=features,
            scores=scores,
            backtrack=agent.backtrack,
            recent_moves=tuple(agent.recent_moves),
            can_backtrack=can_backtrack,
            dead_end_confidence=dead_end_confidence(agent, self.grid),
            exit_cell=exit_cell,
            guidance=self.guidance.get(agent.agent_id),
            focus=tuple(coord.focus),
            teammate_recent=coord.teammate_recent,
            teammate_dead_ends=coord.teammate_dead_ends,
            teammate_junctions=self.teammate_junctions(agent) if len(self.agents) > 1 else frozenset(),
            marked_dead_ends=frozenset(agent.marked_dead_ends),
            visited_count=len(agent.visited),
            steps_remaining=self.budget - self.steps,
            last_record=self.last_record.get(agent.agent_id),
        )

    def decide(self, agent: AgentState, t: int, k: int) -> Decision | None:
        try:
            decision = self.policy.decide(self.context(agent, t, k), self.rng)
        except PolicyFailure as exc:
            self.policy_failures += 1
            self.log(t, k, agent, "policy_failure", "-", "error:" + type(exc).__name__)
            return None
        self.violations += decision.violations
        return decision

    def execute(self, agent: AgentState, decision: Decision, t: int, k: int) -> None:
        kind = decision.call.kind
        if kind.direction is not None:
            res = apply_move(agent, self.grid, kind.direction)
            self.log(t, k, agent, kind.value, "-", "ok" if res.success else res.failure_reason.value)
        elif kind is ToolKind.START_BACKTRACKING:
            try:
                plan = start_backtracking(agent, self.grid, lock=True)
                self.log(t, k, agent, kind.value, "-", f"plan:{len(plan)}")
            except BacktrackError as exc:
                self.log(t, k, agent, kind.value, "-", "error:" + type(exc).__name__)
        elif kind is ToolKind.GET_CURRENT_VIEW:
            obs = get_current_view(agent, self.grid)
            self.log(t, k, agent, kind.value, "-", "view:" + "".join(d.letter for d in obs.available_moves))
        elif kind is ToolKind.MARK_DEAD_END:
            self.mark(agent, t, k)
        elif kind is ToolKind.FINISH:
            self.log(t, k, agent, kind.value, "-", "ok" if agent.position == self.grid.exit else "rejected")

    def mark(self, agent: AgentState, t: int, k: int) -> None:
        outcome = mark_dead_end(agent, self.grid)
        self.log(t, k, agent, "mark_dead_end", "-", "marked" if outcome.marked else "skipped:" + outcome.reason)

    def benchmark(self, agent: AgentState, t: int, k: int, decision: Decision | None) -> None:
        if decision is not None and decision.tokens:
            signal = decision.tokens
        else:
            obs = observe(agent, self.grid)
            signal = score_features(movement_features(agent, obs, self.coordination(agent)), agent.weights)
        record = self.trackers[agent.agent_id].record(agent, t, k, signal)
        self.fe_records.append(record)
        self.last_record[agent.agent_id] = record
        base = agent.weights if self.cfg.modulation.cumulative else self.cfg.base_weights
        agent.weights = modulate_weights(base, record, self.cfg.modulation, self.scale[agent.agent_id])

    def orchestrate(self) -> None:
        snaps, contexts = [], {}
        for agent in self.agents:
            rec = self.last_record.get(agent.agent_id)
            snaps.append(snapshot(agent, rec.category if rec else None))
            obs = observe(agent, self.grid)
            contexts[agent.agent_id] = ConflictContext(
                agent.position, movement_features(agent, obs, self.coordination(agent)), agent.weights
            )
        decision = self.orchestrator.step(self.orch_state, snaps, contexts)
        for cell in decision.remove_dead_ends:
            for agent in self.agents:
                agent.marked_dead_ends.discard(cell)
        self.focus = {aid: tuple(cells) for aid, cells in decision.focus_by_agent.items()}
        self.guidance = dict(decision.guidance)
        for agent in self.agents:
            d = self.guidance.get(agent.agent_id)
            self.scale[agent.agent_id] = d.factor if d is not None and d.kind is DirectiveKind.RELAX_WEIGHTS else 1.0
        self.directives.extend(self.guidance.values())
        self.orch_log.append(decision.to_json())

    # --- main loop ----------------------------------------------------------

    def run(self) -> RunResult:
        clock = self.cfg.clock
        started = clock()
        reason = None
        t = 0
        if self.budget == 0:
            reason = TerminationReason.BUDGET_EXHAUSTED
        while reason is None:
            t += 1
            for agent in self.agents:
                if self.steps >= self.budget:
                    reason = TerminationReason.BUDGET_EXHAUSTED
                    break
                decision = None
                mark_flag = False
                for k, step in enumerate(self.cfg.plan):
                    if clock() - started > self.cfg.timeout_seconds:
                        reason = TerminationReason.TIMEOUT
                        break
                    if step is PlanStep.LOOK_AROUND:
                        obs = get_current_view(agent, self.grid)
                        self.log(t, k, agent, "get_current_view", "-",
                                 "view:" + "".join(d.letter for d in obs.available_moves))
                    elif step is PlanStep.SELECT_DIRECTION:
                        decision = self.decide(agent, t, k)
                    elif step is PlanStep.MOVE:
                        if self.steps >= self.budget:
                            reason = TerminationReason.BUDGET_EXHAUSTED
                            break
                        self.steps += 1
                        if decision is None and PlanStep.SELECT_DIRECTION not in self.cfg.plan:
                            decision = self.decide(agent, t, k)
                        if decision is not None:
                            self.execute(agent, decision, t, k)
                            mark_flag = decision.mark
                    elif step is PlanStep.MARK_DEAD_END:
                        if mark_flag or (self.policy.marks_dead_ends and mark_check(agent, self.grid) is None):
                            self.mark(agent, t, k)
                        mark_flag = False
                    if self.cfg.configuration.has_fe:
                        self.benchmark(agent, t, k, decision)
                    if step is PlanStep.MOVE:
                        decision = None
                    if agent.position == self.grid.exit:
                        reason = TerminationReason.EXIT_REACHED
                        break
                if reason is not None:
                    break
            if reason is None and self.orchestrator is not None:
                self.orchestrate()
        return RunResult(
            success=reason is TerminationReason.EXIT_REACHED,
            termination_reason=reason,
            steps_taken=self.steps,
            failed_moves=sum(a.failed_moves for a in self.agents),
            budget=self.budget,
            iterations=t,
            wall_seconds=clock() - started,
            policy_failures=self.policy_failures,
            protocol_violations=self.violations,
            seed=self.cfg.seed,
            fe_records=self.fe_records,
            trace=self.trace,
            orchestrator_log=self.orch_log,
            directives=self.directives,
            final_positions=tuple(a.position for a in self.agents),
        )


def run_episode(config: RunConfig) -> RunResult:
    return _Episode(config).run()
