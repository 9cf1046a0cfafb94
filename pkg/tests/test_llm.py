import io
import json
import urllib.error

import numpy as np
import pytest

from mazeorch import llm
from mazeorch.active_inference import token_entropy
from mazeorch.engine import Configuration, RunConfig, run_episode
from mazeorch.environment import AgentState, get_current_view
from mazeorch.llm import (
    HttpTransport,
    LLMOrchestrator,
    TransportError,
    build_agent_request,
    load_prompt,
    parse_agent_response,
    request_agent_decision,
    tool_definitions,
)
from mazeorch.orchestration import DirectiveKind, OrchestratorState, snapshot
from mazeorch.policies import LLMPolicy
from mazeorch.tools import PolicyFailure, ToolKind
from test_policies import CROSS, context

CORRIDOR = ["XXXXXXXXX", "XOOOOOOEX"] + ["XWWWWWWWX"] * 6 + ["XXXXXXXXX"]


def reply(*names, content="moving on"):
    calls = [{"id": f"c{i}", "type": "function", "function": {"name": n, "arguments": "{}"}}
             for i, n in enumerate(names)]
    return {"choices": [{"message": {"role": "assistant", "content": content, "tool_calls": calls}}]}


class StubTransport:
    def __init__(self, responses):
        self.responses = list(responses)
        self.requests = []

    def complete(self, request):
        self.requests.append(request)
        item = self.responses.pop(0) if len(self.responses) > 1 else self.responses[0]
        if isinstance(item, Exception):
            raise item
        return item(request) if callable(item) else item


@pytest.fixture
def ctx(make_grid):
    g = make_grid(CROSS, starts=[(6, 4)])
    st = AgentState.start(0, (6, 4))
    return context(st, g)


def test_single_call_is_parsed():
    d = parse_agent_response(reply("move_north"), 3)
    assert d.call.kind is ToolKind.MOVE_NORTH and d.call.issued_by == 3
    assert d.violations == 0 and not d.mark
    assert "move_north" in d.tokens and "moving" in d.tokens


def test_two_moves_first_wins_with_violation():
    d = parse_agent_response(reply("move_east", "move_west"), 0)
    assert d.call.kind is ToolKind.MOVE_EAST and d.violations == 1


def test_mark_alongside_move_sets_flag():
    d = parse_agent_response(reply("move_south", "mark_dead_end"), 0)
    assert d.call.kind is ToolKind.MOVE_SOUTH and d.mark and d.violations == 0
    d = parse_agent_response(reply("mark_dead_end", "move_south", "mark_dead_end"), 0)
    assert d.call.kind is ToolKind.MOVE_SOUTH and d.violations == 1


@pytest.mark.parametrize("response", [
    reply("teleport"),
    reply(),
    {"choices": []},
    {"choices": [{"message": {"tool_calls": [{"oops": 1}]}}]},
])
def test_bad_responses_raise_policy_failure(response):
    with pytest.raises(PolicyFailure):
        parse_agent_response(response, 0)


def test_request_shape(ctx):
    req = build_agent_request(ctx, "m")
    assert req["model"] == "m" and req["tool_choice"] == "required"
    names = {t["function"]["name"] for t in req["tools"]}
    assert names == {k.value for k in ToolKind}
    assert req["messages"][0]["role"] == "system" and req["messages"][1]["role"] == "user"
    assert "prompt-version" not in req["messages"][0]["content"]
    assert json.dumps(req)  # serializable
    assert len(tool_definitions()) == len(ToolKind)
    assert load_prompt("agent_system").strip()


def test_request_agent_decision_audits(ctx):
    audit = []
    stub = StubTransport([reply("move_north")])
    d = request_agent_decision(ctx, stub, audit=audit)
    assert d.call.kind is ToolKind.MOVE_NORTH
    assert len(stub.requests) == 1 and audit[0]["response"] == reply("move_north")


def test_transport_error_becomes_policy_failure(ctx):
    audit = []
    stub = StubTransport([TransportError("down")])
    with pytest.raises(PolicyFailure):
        request_agent_decision(ctx, stub, audit=audit)
    assert "error" in audit[0]


def test_llm_policy_episode_with_stub(make_grid):
    g = make_grid(CORRIDOR, starts=[(1, 1)])
    stub = StubTransport([reply("move_east", content="east is open")])
    result = run_episode(RunConfig(g, Configuration.FE_ONLY, LLMPolicy(stub), num_agents=1))
    assert result.success and result.steps_taken == 6
    assert result.policy_failures == 0
    assert all(r.u_epistemic == pytest.approx(2 * token_entropy(["east", "is", "open", "move_east", "{}"]))
               for r in result.fe_records if r.k == 1)


def test_llm_policy_failures_skip_steps(make_grid):
    g = make_grid(CORRIDOR, starts=[(1, 1)])
    stub = StubTransport([reply("bogus")])
    result = run_episode(RunConfig(g, Configuration.SOLO, LLMPolicy(stub), budget=5))
    assert not result.success and result.steps_taken == 5
    assert result.policy_failures == 5 and result.final_positions == ((1, 1),)


def test_llm_orchestrator_with_stub(make_grid):
    g = make_grid(CROSS, starts=[(6, 4)])
    a = AgentState.start(0, (6, 4))
    get_current_view(a, g)
    orch = OrchestratorState.initialize(g.size, [a])
    body = {"analysis": "ok", "corrections": {"remove_dead_ends": [], "add_exploration_focus": [[5, 4]]},
            "guidance_for_agents": {"0": "Relax weights and leave this loop."}}
    stub = StubTransport([{"choices": [{"message": {"content": json.dumps(body)}}]}])
    decision = LLMOrchestrator(stub).step(orch, [snapshot(a)], {})
    assert decision.guidance[0].kind is DirectiveKind.RELAX_WEIGHTS
    assert decision.add_exploration_focus == [(5, 4)]
    bad = LLMOrchestrator(StubTransport([{"choices": [{"message": {"content": "{}"}}]}]))
    assert bad.step(orch, [snapshot(a)], {}).guidance == {} and bad.failures == 1


class _Resp(io.BytesIO):
    def __enter__(self):
        return self

    def __exit__(self, *exc):
        return False


def test_http_transport_retries_then_succeeds(monkeypatch):
    calls = []

    def fake_urlopen(req, timeout):
        calls.append((req.full_url, req.get_header("Authorization"), timeout))
        if len(calls) < 2:
            raise urllib.error.URLError("flaky")
        return _Resp(json.dumps(reply("move_west")).encode())

    monkeypatch.setenv("TEST_KEY", "secret")
    monkeypatch.setattr(llm.urllib.request, "urlopen", fake_urlopen)
    t = HttpTransport("http://stub.invalid/v1", api_key_env="TEST_KEY", timeout=3, retries=2, backoff=0)
    assert t.complete({"x": 1}) == reply("move_west")
    assert calls[0] == ("http://stub.invalid/v1", "Bearer secret", 3) and len(calls) == 2


def test_http_transport_gives_up(monkeypatch):
    def fail(req, timeout):
        raise urllib.error.URLError("down")

    monkeypatch.setenv("TEST_KEY", "secret")
    monkeypatch.setattr(llm.urllib.request, "urlopen", fail)
    with pytest.raises(TransportError):
        HttpTransport("http://stub.invalid", api_key_env="TEST_KEY", retries=1, backoff=0).complete({})


def test_http_transport_needs_key(monkeypatch):
    monkeypatch.delenv("NO_SUCH_KEY", raising=False)
    with pytest.raises(TransportError, match="NO_SUCH_KEY"):
        HttpTransport(api_key_env="NO_SUCH_KEY").complete({})


def test_from_env(monkeypatch):
    monkeypatch.setenv("MAZEORCH_LLM_ENDPOINT", "http://e")
    monkeypatch.setenv("MAZEORCH_LLM_TIMEOUT", "4.5")
    monkeypatch.setenv("MAZEORCH_LLM_RETRIES", "0")
    t = HttpTransport.from_env()
    assert (t.endpoint, t.timeout, t.retries) == ("http://e", 4.5, 0)
