"""Chat-completions adapter for LLM-driven agents and the LLM orchestrator.

The transport is any object with ``complete(request: dict) -> dict``. The
bundled :class:`HttpTransport` posts to a chat-completions endpoint with the
standard library; tests substitute a stub.
"""
from __future__ import annotations

import json
import os
import time
import urllib.error
import urllib.request
from dataclasses import dataclass
from importlib import resources
from typing import Mapping, Protocol

from .orchestration import (
    ConflictContext,
    OrchestratorDecision,
    OrchestratorResponseError,
    OrchestratorState,
    parse_orchestrator_response,
    update_global_state,
    validate_dead_ends,
    assign_exploration_focus,
)
from .tools import Decision, PolicyContext, PolicyFailure, ToolCall, ToolKind

DEFAULT_ENDPOINT = "https://api.openai.com/v1/chat/completions"
DEFAULT_MODEL = "gpt-4.1-nano"


class Transport(Protocol):
    def complete(self, request: dict) -> dict: ...


class TransportError(RuntimeError):
    pass


@dataclass
class HttpTransport:
    endpoint: str = DEFAULT_ENDPOINT
    api_key_env: str = "OPENAI_API_KEY"
    timeout: float = 30.0
    retries: int = 2
    backoff: float = 1.0

    @classmethod
    def from_env(cls) -> "HttpTransport":
        return cls(
            endpoint=os.environ.get("MAZEORCH_LLM_ENDPOINT", DEFAULT_ENDPOINT),
            api_key_env=os.environ.get("MAZEORCH_LLM_KEY_ENV", "OPENAI_API_KEY"),
            timeout=float(os.environ.get("MAZEORCH_LLM_TIMEOUT", "30")),
            retries=int(os.environ.get("MAZEORCH_LLM_RETRIES", "2")),
        )

    def complete(self, request: dict) -> dict:
        key = os.environ.get(self.api_key_env)
        if not key:
            raise TransportError(f"environment variable {self.api_key_env} is not set")
        body = json.dumps(request).encode()
        headers = {"Content-Type": "application/json", "Authorization": f"Bearer {key}"}
        last = None
        for attempt in range(self.retries + 1):
            req = urllib.request.Request(self.endpoint, data=body, headers=headers, method="POST")
            try:
                with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                    return json.loads(resp.read().decode())
            except (urllib.error.URLError, TimeoutError, json.JSONDecodeError) as exc:
                last = exc
                if attempt < self.retries:
                    time.sleep(self.backoff * 2**attempt)
        raise TransportError(f"request failed after {self.retries + 1} attempts: {last}")


def load_prompt(name: str) -> str:
    text = resources.files("mazeorch").joinpath("prompts", f"{name}.txt").read_text(encoding="utf-8")
    return "".join(line for line in text.splitlines(keepends=True) if not line.startswith("# prompt-version"))


_TOOL_DESCRIPTIONS = {
    ToolKind.MOVE_NORTH: "Move one cell north (row - 1).",
    ToolKind.MOVE_SOUTH: "Move one cell south (row + 1).",
    ToolKind.MOVE_EAST: "Move one cell east (col + 1).",
    ToolKind.MOVE_WEST: "Move one cell west (col - 1).",
    ToolKind.GET_CURRENT_VIEW: "Return the 3x3 patch around the agent.",
    ToolKind.MARK_DEAD_END: "Mark the current cell as a dead end.",
    ToolKind.START_BACKTRACKING: "Walk back to the nearest visited cell with an unexplored neighbour.",
    ToolKind.FINISH: "Report that the exit has been reached.",
}


def tool_definitions() -> list[dict]:
    return [
        {
            "type": "function",
            "function": {
                "name": kind.value,
                "description": desc,
                "parameters": {"type": "object", "properties": {}, "additionalProperties": False},
            },
        }
        for kind, desc in _TOOL_DESCRIPTIONS.items()
    ]


def _fmt_cells(cells) -> str:
    cells = list(cells)
    return "[" + ", ".join(f"({r}, {c})" for r, c in cells) + "]" if cells else "none"


def render_agent_messages(ctx: PolicyContext, current_step: str = "SelectDirection") -> list[dict]:
    w = ctx.weights
    system = load_prompt("agent_system").format(
        agent_id=ctx.agent_id,
        coordinate_weight=f"{w.coordinate:.2f}",
        explore_weight=f"{w.explore:.2f}",
        exploit_weight=f"{w.exploit:.2f}",
        dead_end_confidence=f"{w.dead_end_confidence:.2f}",
    )
    scores = ", ".join(f"{d.name}={s:+.2f}" for d, s in ctx.scores.items()) or "none"
    best = max(ctx.scores, key=ctx.scores.get).name if ctx.scores else "none"
    modifiers = "".join(f"- {m}\n" for m in ctx.prompt_modifiers)
    guidance = ctx.guidance.text() if ctx.guidance is not None else "none"
    user = load_prompt("agent_context").format(
        step_number=ctx.k + 1,
        current_step=current_step,
        position=ctx.position,
        available_moves=", ".join(d.name for d in ctx.observation.available_moves) or "none",
        unexplored_directions=", ".join(d.name for d in ctx.observation.unexplored_directions) or "none",
        can_backtrack="yes" if ctx.can_backtrack else "no",
        local_view=ctx.observation.render(),
        modifiers=modifiers,
        score_details=f"{scores} (best {best})",
        backtrack_threshold=w.backtrack_threshold,
        dead_end_confidence=ctx.dead_end_confidence,
        dead_end_threshold=w.dead_end_confidence,
        backtracking="YES" if ctx.backtrack.engaged else "NO",
        lock_mode="YES" if ctx.backtrack.kind.value == "lock" else "NO",
        next_planned=ctx.backtrack.next_cell() or "none",
        visited_count=ctx.visited_count,
        marked_count=len(ctx.marked_dead_ends),
        recent_moves=_fmt_cells(ctx.recent_moves),
        previous_position=ctx.previous_position or "none",
        teammate_recent=_fmt_cells(sorted(ctx.teammate_recent)),
        teammate_waypoints=_fmt_cells(sorted(ctx.teammate_junctions | ctx.teammate_dead_ends)),
        guidance=guidance,
        explore_weight=w.explore,
        exploit_weight=w.exploit,
        coordinate_weight=w.coordinate,
        backtrack_weight=w.backtrack,
    )
    return [{"role": "system", "content": system}, {"role": "user", "content": user}]


def build_agent_request(ctx: PolicyContext, model: str = DEFAULT_MODEL) -> dict:
    return {
        "model": model,
        "messages": render_agent_messages(ctx),
        "tools": tool_definitions(),
        "tool_choice": "required",
    }


_KINDS = {k.value: k for k in ToolKind}


def _message(response: dict) -> dict:
    try:
        return response["choices"][0]["message"]
    except (KeyError, IndexError, TypeError):
        raise PolicyFailure("response has no message") from None


def parse_agent_response(response: dict, agent_id: int) -> Decision:
    """Turn a chat-completions response into a decision.

    The first primary tool call wins. Further primary calls count as protocol
    violations. A ``mark_dead_end`` call next to a primary call sets the
    mark flag.
    """
    message = _message(response)
    calls = message.get("tool_calls") or []
    names = []
    for call in calls:
        try:
            name = call["function"]["name"]
        except (KeyError, TypeError):
            raise PolicyFailure(f"malformed tool call {call!r}") from None
        if name not in _KINDS:
            raise PolicyFailure(f"unknown tool {name!r}")
        names.append(name)
    if not names:
        raise PolicyFailure("no tool call in response")
    primaries = [n for n in names if n != ToolKind.MARK_DEAD_END.value]
    n_marks = len(names) - len(primaries)
    if primaries:
        kind, mark = _KINDS[primaries[0]], n_marks > 0
        violations = len(primaries) - 1 + max(n_marks - 1, 0)
    else:
        kind, mark = ToolKind.MARK_DEAD_END, False
        violations = n_marks - 1
    content = message.get("content") or ""
    tokens = tuple(content.split()) + tuple(names)
    for call in calls:
        args = call.get("function", {}).get("arguments") or ""
        tokens += tuple(args.split())
    return Decision(ToolCall(kind, agent_id), mark=mark, tokens=tokens, violations=violations, rationale=content)


def request_agent_decision(ctx: PolicyContext, transport: Transport, model: str = DEFAULT_MODEL,
                           audit: list | None = None) -> Decision:
    request = build_agent_request(ctx, model)
    try:
        response = transport.complete(request)
    except Exception as exc:  # any transport problem degrades to a skipped step
        if audit is not None:
            audit.append({"request": request, "error": str(exc)})
        raise PolicyFailure(f"transport failure: {exc}") from exc
    if audit is not None:
        audit.append({"request": request, "response": response})
    return parse_agent_response(response, ctx.agent_id)


# --- orchestrator ---------------------------------------------------------------------


def render_orchestrator_messages(orch: OrchestratorState, contexts: Mapping[int, ConflictContext]) -> list[dict]:
    data = {
        "iteration": orch.t,
        "agents": {
            str(aid): {
                "position": list(s.position),
                "visited": len(s.visited),
                "marked_dead_ends": [list(c) for c in sorted(s.marked_dead_ends)],
                "category": s.category.value if s.category else None,
            }
            for aid, s in sorted(orch.agent_snapshots.items())
        },
        "frontier": [list(c) for c in orch.frontier()],
    }
    conflicts = {
        str(aid): {
            d.name: {"explore": f.explore, "exploit": f.exploit, "coordinate": f.coordinate, "backtrack": f.backtrack}
            for d, f in ctx.features.items()
        }
        for aid, ctx in sorted(contexts.items())
    }
    focus = {str(aid): [list(c) for c in cells] for aid, cells in sorted(orch.focus_by_agent.items())}
    efficiency = {str(aid): streak for aid, streak in sorted(orch.category_streaks.items())}
    user = load_prompt("orchestrator_context").format(
        iteration=orch.t,
        orchestration_data=json.dumps(data, sort_keys=True),
        movement_conflicts=json.dumps(conflicts, sort_keys=True),
        exploration_coordination=json.dumps(focus, sort_keys=True),
        dead_end_analysis=json.dumps([list(c) for c in orch.remove_dead_ends]),
        agent_summaries=json.dumps(efficiency, sort_keys=True),
        discovered_count=len(orch.discovered),
        num_agents=len(contexts),
    )
    return [{"role": "system", "content": load_prompt("orchestrator_system")}, {"role": "user", "content": user}]


class LLMOrchestrator:
    """Orchestrator whose decisions come from a language model.

    The deterministic checks still run first so the prompt carries their
    findings. An unusable reply yields an empty decision.
    """

    name = "llm"

    def __init__(self, transport: Transport, model: str = DEFAULT_MODEL, audit: list | None = None):
        self.transport = transport
        self.model = model
        self.audit = audit
        self.failures = 0

    def step(self, orch: OrchestratorState, snapshots, contexts: Mapping[int, ConflictContext]) -> OrchestratorDecision:
        update_global_state(orch, snapshots)
        validate_dead_ends(orch)
        assign_exploration_focus(orch)
        request = {"model": self.model, "messages": render_orchestrator_messages(orch, contexts)}
        try:
            response = self.transport.complete(request)
            text = _message(response).get("content") or ""
            decision = parse_orchestrator_response(text, orch)
        except (OrchestratorResponseError, PolicyFailure, TransportError, OSError) as exc:
            self.failures += 1
            if self.audit is not None:
                self.audit.append({"request": request, "error": str(exc)})
            return OrchestratorDecision(analysis=f"unusable orchestrator reply: {exc}")
        if self.audit is not None:
            self.audit.append({"request": request, "response": response})
        orch.guidance = dict(decision.guidance)
        orch.focus_by_agent = dict(decision.focus_by_agent)
        return decision
