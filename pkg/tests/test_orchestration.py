import json

import networkx as nx
import pytest

from mazeorch.active_inference import BASE_WEIGHTS, Category, Features
from mazeorch.environment import AgentState, apply_move, get_current_view
from mazeorch.geometry import Cell, Direction
from mazeorch.orchestration import (
    DEFAULT_PLAN,
    ConflictContext,
    DirectiveKind,
    OrchestratorResponseError,
    OrchestratorState,
    PlanStep,
    RuleBasedOrchestrator,
    UnknownAgentError,
    assign_exploration_focus,
    parse_orchestrator_response,
    resolve_conflicts,
    snapshot,
    update_global_state,
    validate_dead_ends,
    validate_plan,
)

N, S, E, W = Direction.NORTH, Direction.SOUTH, Direction.EAST, Direction.WEST

T_MAZE = [
    "XXXXXXXXX",
    "XWWWWWWWX",
    "XWOOOOOWX",
    "XWWWOWWWX",
    "XWWWOWWWX",
    "XWWWOWWWX",
    "XWWWWWWWX",
    "XWWWWWWEX",
    "XXXXXXXXX",
]

OPEN_BOX = [
    "XXXXXXXXX",
    "XOOOOOOOX",
    "XOOOOOOOX",
    "XOOOOOOOX",
    "XOOOOOOOX",
    "XOOOOOOOX",
    "XOOOOOOOX",
    "XOOOOOOEX",
    "XXXXXXXXX",
]

CORRIDOR = [
    "XXXXXXXXX",
    "XOOOOOOEX",
    "XWWWWWWWX",
    "XWWWWWWWX",
    "XWWWWWWWX",
    "XWWWWWWWX",
    "XWWWWWWWX",
    "XWWWWWWWX",
    "XXXXXXXXX",
]


def explorer(grid, aid, start, *dirs):
    st = AgentState.start(aid, start)
    get_current_view(st, grid)
    for d in dirs:
        assert apply_move(st, grid, d).success
        get_current_view(st, grid)
    return st


def test_plan_validation():
    assert DEFAULT_PLAN == (PlanStep.LOOK_AROUND, PlanStep.SELECT_DIRECTION, PlanStep.MOVE, PlanStep.MARK_DEAD_END)
    assert validate_plan(["Move", "LookAround"]) == (PlanStep.MOVE, PlanStep.LOOK_AROUND)
    with pytest.raises(ValueError):
        validate_plan(["LookAround", "MarkDeadEnd"])


def test_update_is_union_and_monotone(make_grid):
    g = make_grid(T_MAZE, starts=[(5, 4)])
    a = explorer(g, 0, (5, 4))
    orch = OrchestratorState.initialize(g.size, [a])
    before = dict(orch.discovered)
    update_global_state(orch, [snapshot(a)])
    assert orch.discovered == before and orch.t == 1
    apply_move(a, g, N)
    get_current_view(a, g)
    update_global_state(orch, [snapshot(a)])
    assert set(before) < set(orch.discovered)
    assert orch.discovered[(3, 4)] is Cell.OPEN and orch.discovered[(3, 3)] is Cell.WALL


def test_update_rejects_unknown_agent(make_grid):
    g = make_grid(T_MAZE, starts=[(5, 4)])
    a = explorer(g, 0, (5, 4))
    orch = OrchestratorState.initialize(g.size, [a])
    with pytest.raises(UnknownAgentError):
        update_global_state(orch, [snapshot(explorer(g, 7, (4, 4)))])


def test_validate_dead_ends(make_grid):
    g = make_grid(T_MAZE, starts=[(5, 4)])
    a = explorer(g, 0, (4, 4), N)
    a.marked_dead_ends.add((2, 4))  # wrong: seen only from the stem
    b = explorer(g, 1, (2, 2), E, E, E)
    c = explorer(g, 2, (4, 4), S)
    c.marked_dead_ends.add((5, 4))  # a genuine cul-de-sac
    orch = OrchestratorState.initialize(g.size, [a, b, c])
    assert validate_dead_ends(orch) == [(2, 4)]
    assert orch.validated_dead_ends == {(5, 4)}


def test_validate_empty_marks(make_grid):
    g = make_grid(T_MAZE, starts=[(5, 4)])
    orch = OrchestratorState.initialize(g.size, [explorer(g, 0, (5, 4), N)])
    assert validate_dead_ends(orch) == []


def test_single_agent_gets_nearest_three(make_grid):
    g = make_grid(OPEN_BOX, starts=[(1, 1)])
    a = explorer(g, 0, (1, 1), E, E)
    orch = OrchestratorState.initialize(g.size, [a])
    focus, guidance = assign_exploration_focus(orch)
    assert len(focus) == 3 and set(focus) <= set(orch.frontier())
    d = guidance[0]
    assert d.kind is DirectiveKind.EXPLORATION_FOCUS and set(d.cells) == set(focus)


def _oracle_owner(orch, cell):
    graph = nx.Graph()
    opened = [c for c in orch.discovered if orch.is_open(c)]
    graph.add_nodes_from(opened)
    for r, c in opened:
        for nb in ((r + 1, c), (r, c + 1)):
            if orch.is_open(nb):
                graph.add_edge((r, c), nb)
    best = None
    for aid in orch.agent_ids:
        pos = orch.agent_snapshots[aid].position
        try:
            d = nx.shortest_path_length(graph, pos, cell)
        except nx.NetworkXNoPath:
            continue
        if best is None or d < best[0]:
            best = (d, aid)
    return best


def test_two_agents_get_disjoint_nearest_focus(make_grid):
    g = make_grid(OPEN_BOX, starts=[(1, 1)])
    a = explorer(g, 0, (1, 1), E, E, E)
    b = explorer(g, 1, (7, 6), W, W, W)
    orch = OrchestratorState.initialize(g.size, [a, b])
    focus, guidance = assign_exploration_focus(orch)
    fa, fb = set(orch.focus_by_agent[0]), set(orch.focus_by_agent[1])
    assert fa and fb and not fa & fb
    for aid, cells in orch.focus_by_agent.items():
        for cell in cells:
            d, owner = _oracle_owner(orch, cell)
            assert owner == aid


def test_fully_discovered_gives_noop(make_grid):
    g = make_grid(CORRIDOR, starts=[(1, 1)])
    a = explorer(g, 0, (1, 1), E, E, E, E, E, E)
    orch = OrchestratorState.initialize(g.size, [a])
    assert orch.frontier() == []
    focus, guidance = assign_exploration_focus(orch)
    assert focus == [] and guidance[0].kind is DirectiveKind.NO_OP


def test_no_penalty_no_override(make_grid):
    g = make_grid(CORRIDOR, starts=[(1, 1)])
    a = explorer(g, 0, (1, 1), E, E)
    orch = OrchestratorState.initialize(g.size, [a])
    ctx = ConflictContext((1, 3), {E: Features(1, 1, 0, 0), W: Features(-0.5, -1, 0, 0)}, BASE_WEIGHTS)
    assert resolve_conflicts(orch, {0: ctx}) == {}


def test_penalty_on_frontier_route_is_overridden(make_grid):
    g = make_grid(CORRIDOR, starts=[(1, 1)])
    a = explorer(g, 0, (1, 1), E, E)
    orch = OrchestratorState.initialize(g.size, [a])
    assert orch.frontier() == [(1, 4)]
    # east is suppressed by a teammate penalty; west wins on raw score
    ctx = ConflictContext((1, 3), {E: Features(1, 0, -1, 0), W: Features(-0.5, 1, 0, 0)}, BASE_WEIGHTS)
    out = resolve_conflicts(orch, {0: ctx})
    assert out[0].kind is DirectiveKind.OVERRIDE_PENALTY and out[0].direction is E
    assert out[0].text() == "Override penalty and go EAST."


def test_relax_after_three_low_drive_high_cost(make_grid):
    g = make_grid(T_MAZE, starts=[(5, 4)])
    a = explorer(g, 0, (5, 4))
    orch = OrchestratorState.initialize(g.size, [a])
    for i in range(3):
        assert resolve_conflicts(orch, {}) == {}
        update_global_state(orch, [snapshot(a, Category.LOW_DRIVE_HIGH_COST)])
    out = resolve_conflicts(orch, {})
    assert out[0].kind is DirectiveKind.RELAX_WEIGHTS and out[0].factor == 0.5
    update_global_state(orch, [snapshot(a, Category.HIGH_DRIVE_LOW_COST)])
    assert resolve_conflicts(orch, {}) == {}


def test_rule_based_decision_contract(make_grid):
    g = make_grid(T_MAZE, starts=[(5, 4)])
    a = explorer(g, 0, (5, 4), N)
    b = explorer(g, 1, (2, 2), E)
    orch = OrchestratorState.initialize(g.size, [a, b])
    decision = RuleBasedOrchestrator().step(orch, [snapshot(a), snapshot(b)], {})
    data = json.loads(decision.to_json())
    assert set(data) == {"analysis", "corrections", "guidance_for_agents"}
    assert set(data["corrections"]) == {"remove_dead_ends", "add_exploration_focus"}
    assert set(data["guidance_for_agents"]) == {"0", "1"}
    for cell in data["corrections"]["add_exploration_focus"]:
        assert tuple(cell) in orch.discovered
    assert decision.to_json() == decision.to_json()


def test_llm_contract_guardrails(make_grid):
    g = make_grid(T_MAZE, starts=[(5, 4)])
    a = explorer(g, 0, (5, 4), N)
    orch = OrchestratorState.initialize(g.size, [a])
    reply = json.dumps({
        "analysis": "stem explored",
        "corrections": {"remove_dead_ends": [[5, 4], [9, 9]], "add_exploration_focus": [[3, 4], [1, 1]]},
        "guidance_for_agents": {"0": "Override penalty and go north.", "5": "Relax weights.", "x": "?"},
    })
    decision = parse_orchestrator_response(reply, orch)
    assert decision.remove_dead_ends == [(5, 4)]
    assert decision.add_exploration_focus == [(1, 1), (3, 4)] or (1, 1) not in orch.discovered
    assert all(c in orch.discovered for c in decision.add_exploration_focus)
    assert set(decision.guidance) == {0}
    assert decision.guidance[0].kind is DirectiveKind.OVERRIDE_PENALTY
    assert decision.guidance[0].direction is N


@pytest.mark.parametrize("text", [
    "not json",
    json.dumps({"analysis": "", "corrections": {}}),
    json.dumps({"analysis": "", "corrections": {}, "guidance_for_agents": {}, "extra": 1}),
    json.dumps({"analysis": "", "corrections": [], "guidance_for_agents": {}}),
    json.dumps({"analysis": "", "corrections": {"remove_dead_ends": [[1]]}, "guidance_for_agents": {}}),
])
def test_llm_contract_rejects_malformed(make_grid, text):
    g = make_grid(T_MAZE, starts=[(5, 4)])
    orch = OrchestratorState.initialize(g.size, [explorer(g, 0, (5, 4))])
    with pytest.raises(OrchestratorResponseError):
        parse_orchestrator_response(text, orch)
