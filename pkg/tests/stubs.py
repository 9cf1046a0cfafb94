"""Scripted policies shared by the harness, CLI and acceptance tests."""
from mazeorch.geometry import Direction
from mazeorch.tools import Decision, ToolCall, ToolKind

# start (1,6) sits next to the exit (1,7)
NEXT_TO_EXIT = ["XXXXXXXXX", "XOOOOOOEX"] + ["XWWWWWWWX"] * 6 + ["XXXXXXXXX"]


class BernoulliPolicy:
    """Steps into the exit on the first decision with probability ``p``, else idles forever."""

    marks_dead_ends = False

    def __init__(self, p: float):
        self.p = p
        self.name = f"bernoulli_{p}"

    def decide(self, ctx, rng):
        if ctx.t == 1 and rng.random() < self.p:
            return Decision(ToolCall.move(Direction.EAST, ctx.agent_id))
        return Decision(ToolCall(ToolKind.GET_CURRENT_VIEW, ctx.agent_id))
