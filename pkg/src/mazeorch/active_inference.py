"""Free-energy benchmarking of execution agents.

Per step, each agent's epistemic drive (scaled normalized entropy of its
decision signal) is offset against an accuracy cost built from five
behavioural risk components. The resulting free energy and its change since
the previous iteration place the agent in one of four performance
categories, which in turn adjust its behavioural weights.
"""
from __future__ import annotations

import csv
import io
import math
import warnings
from collections import Counter
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import TYPE_CHECKING, Hashable, Iterable, Mapping, Sequence

from .geometry import DIRECTIONS, Coord, Direction

if TYPE_CHECKING:
    from .environment import AgentState, Observation

CAP = 2.0
WEIGHT_RANGE = (0.0, 3.0)
RISK_WEIGHTS = (0.20, 0.20, 0.20, 0.20, 0.20)
RECENT_WINDOW = 8


@dataclass(frozen=True)
class WeightVector:
    explore: float = 1.0
    exploit: float = 1.0
    coordinate: float = 1.0
    backtrack: float = 1.0
    backtrack_threshold: float = 0.7
    dead_end_confidence: float = 0.8

    def clamped(self) -> "WeightVector":
        lo, hi = WEIGHT_RANGE
        return replace(
            self,
            explore=min(max(self.explore, lo), hi),
            exploit=min(max(self.exploit, lo), hi),
            coordinate=min(max(self.coordinate, lo), hi),
            backtrack=min(max(self.backtrack, lo), hi),
        )

    def scaled(self, factor: float) -> "WeightVector":
        return replace(
            self,
            explore=self.explore * factor,
            exploit=self.exploit * factor,
            coordinate=self.coordinate * factor,
            backtrack=self.backtrack * factor,
        )

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.explore, self.exploit, self.coordinate, self.backtrack)


BASE_WEIGHTS = WeightVector()


@dataclass(frozen=True)
class Thresholds:
    theta1: float = 0.6  # epistemic drive cut
    theta2: float = 0.4  # accuracy cost cut

    def __post_init__(self):
        for name in ("theta1", "theta2"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")


class Category(Enum):
    HIGH_DRIVE_LOW_COST = "high_drive_low_cost"
    HIGH_DRIVE_HIGH_COST = "high_drive_high_cost"
    LOW_DRIVE_LOW_COST = "low_drive_low_cost"
    LOW_DRIVE_HIGH_COST = "low_drive_high_cost"


@dataclass(frozen=True)
class ModulationConfig:
    """Engine constants for weight modulation and signal scaling."""

    boost: float = 0.3
    coordinate_boost: float = 0.2
    gradient_gain: float = 0.1
    drive_scale: float = 2.0
    softmax_temperature: float = 1.0
    cumulative: bool = False  # True: each update starts from the previous weights


@dataclass(frozen=True)
class FreeEnergyRecord:
    agent_id: int
    t: int
    k: int
    u_epistemic: float
    c_accuracy: float
    free_energy: float
    gradient: float
    category: Category
    risk_components: tuple[float, float, float, float, float]
    u_signed: float = 0.0
    weights: WeightVector = field(default=BASE_WEIGHTS)


# --- entropy --------------------------------------------------------------------


def normalized_entropy(probabilities: Iterable[float]) -> float:
    """Shannon entropy divided by log2 of the support size; 0 for one outcome."""
    p = [x for x in probabilities if x > 0]
    if len(p) <= 1:
        return 0.0
    total = sum(p)
    h = -sum((x / total) * math.log2(x / total) for x in p)
    return min(max(h / math.log2(len(p)), 0.0), 1.0)


def token_entropy(message: str | Sequence[Hashable]) -> float:
    """Normalized entropy of token frequencies. Strings split on whitespace."""
    tokens = message.split() if isinstance(message, str) else list(message)
    if not tokens:
        warnings.warn("token_entropy called on an empty message", RuntimeWarning, stacklevel=2)
        return 0.0
    return normalized_entropy(Counter(tokens).values())


def score_distribution(scores: Mapping[Direction, float], temperature: float = 1.0) -> dict[Direction, float]:
    """Softmax over per-direction scores."""
    if not scores:
        return {}
    top = max(scores.values())
    ex = {d: math.exp((s - top) / temperature) for d, s in scores.items()}
    z = sum(ex.values())
    return {d: v / z for d, v in ex.items()}


def epistemic_drive(signal, config: ModulationConfig = ModulationConfig()) -> float:
    """Drive in [0, cap] from a token sequence or a direction->score mapping."""
    if isinstance(signal, Mapping):
        h = normalized_entropy(score_distribution(signal, config.softmax_temperature).values())
    else:
        h = token_entropy(signal)
    return min(config.drive_scale * h, CAP)


# --- accuracy cost --------------------------------------------------------------


def _backtrack_ratio(history: Sequence[Coord]) -> float:
    # moves among the last RECENT_WINDOW that return to the cell before last
    n_moves = len(history) - 1
    if n_moves <= 0:
        return 0.0
    first = max(1, n_moves - RECENT_WINDOW + 1)
    considered = range(first, n_moves + 1)
    back = sum(1 for j in considered if j >= 2 and history[j] == history[j - 2])
    return back / len(considered)


def risk_components(state: "AgentState") -> tuple[float, float, float, float, float]:
    moves = state.total_moves
    attempts = state.total_move_attempts
    r1 = 1.0 - moves / attempts if attempts else 0.0
    unique_entered = len(set(state.path_history[1:]))
    r2 = min(max(1.0 - unique_entered / moves, 0.0), 1.0) if moves else 0.0
    recent = list(state.recent_moves)
    oscillating = 1.0 if recent and max(Counter(recent).values()) >= 3 else 0.0
    r3 = min(max(_backtrack_ratio(state.path_history) + 1.5 * oscillating, 0.0), 2.0)
    r4 = state.dead_end_revisits / moves if moves else 0.0
    r5 = 1.0 - len(set(recent)) / len(recent) if recent else 0.0
    return (r1, r2, r3, r4, r5)


def accuracy_cost(components: Sequence[float]) -> float:
    return min(sum(w * r for w, r in zip(RISK_WEIGHTS, components)), CAP)


def cap(value: float) -> float:
    return min(max(value, -CAP), CAP)


def free_energy(u: float, c: float) -> float:
    return u - c


def categorize(u: float, c: float, th: Thresholds = Thresholds()) -> Category:
    high_drive = u > th.theta1
    high_cost = c > th.theta2
    if high_drive:
        return Category.HIGH_DRIVE_HIGH_COST if high_cost else Category.HIGH_DRIVE_LOW_COST
    return Category.LOW_DRIVE_HIGH_COST if high_cost else Category.LOW_DRIVE_LOW_COST


def _sign(x: float) -> int:
    return (x > 0) - (x < 0)


def modulate_weights(
    base: WeightVector,
    record: FreeEnergyRecord,
    config: ModulationConfig = ModulationConfig(),
    scale: float = 1.0,
) -> WeightVector:
    """Category delta plus a gradient term on the boosted weights.

    A falling free energy amplifies the boost by ``gradient_gain``, a rising
    one damps it. ``scale`` multiplies the whole delta (orchestrator weight
    relaxation).
    """
    cat = record.category
    if cat is Category.HIGH_DRIVE_HIGH_COST:
        deltas = {"exploit": config.boost}
    elif cat is Category.LOW_DRIVE_LOW_COST:
        deltas = {"explore": config.boost}
    elif cat is Category.LOW_DRIVE_HIGH_COST:
        deltas = {"backtrack": config.boost, "coordinate": config.coordinate_boost}
    else:
        deltas = {}
    g = -config.gradient_gain * _sign(record.gradient)
    changes = {name: getattr(base, name) + scale * (d + g) for name, d in deltas.items()}
    return replace(base, **changes).clamped()


# --- movement scores ------------------------------------------------------------


@dataclass(frozen=True)
class CoordinationContext:
    teammate_recent: frozenset = frozenset()
    teammate_dead_ends: frozenset = frozenset()
    focus: frozenset = frozenset()


@dataclass(frozen=True)
class Features:
    explore: float
    exploit: float
    coordinate: float
    backtrack: float

    @property
    def penalized(self) -> bool:
        return self.coordinate < 0 or self.backtrack < 0


def movement_features(
    state: "AgentState", obs: "Observation", context: CoordinationContext = CoordinationContext()
) -> dict[Direction, Features]:
    heading = None
    if state.previous_position is not None:
        heading = Direction.between(state.previous_position, state.position)
    out = {}
    for d in obs.available_moves:
        target = d.step(state.position)
        explore = 1.0 if target not in state.visited else -0.5
        if heading is None:
            exploit = 0.0
        elif d is heading:
            exploit = 1.0
        elif d is heading.reverse:
            exploit = -1.0
        else:
            exploit = 0.0
        if target in context.teammate_recent or target in context.teammate_dead_ends:
            coordinate = -1.0
        elif target in context.focus:
            coordinate = 0.5
        else:
            coordinate = 0.0
        backtrack = -1.0 if target in state.marked_dead_ends else 0.0
        out[d] = Features(explore, exploit, coordinate, backtrack)
    return out


def score_features(features: Mapping[Direction, Features], weights: WeightVector) -> dict[Direction, float]:
    return {
        d: weights.explore * f.explore
        + weights.exploit * f.exploit
        + weights.coordinate * f.coordinate
        + weights.backtrack * f.backtrack
        for d, f in features.items()
    }


def movement_scores(
    state: "AgentState", obs: "Observation", context: CoordinationContext = CoordinationContext()
) -> dict[Direction, float]:
    return score_features(movement_features(state, obs, context), state.weights)


def best_direction(scores: Mapping[Direction, float]) -> Direction | None:
    """Argmax with ties resolved in N, S, E, W order."""
    best = None
    for d in DIRECTIONS:
        if d in scores and (best is None or scores[d] > scores[best]):
            best = d
    return best


# --- per-agent tracker ----------------------------------------------------------


class FreeEnergyTracker:
    """Computes one record per (iteration, plan step) and remembers F for the gradient."""

    def __init__(self, agent_id: int, thresholds: Thresholds = Thresholds(), config: ModulationConfig = ModulationConfig()):
        self.agent_id = agent_id
        self.thresholds = thresholds
        self.config = config
        self._previous: dict[int, float] = {}

    def record(self, state: "AgentState", t: int, k: int, signal) -> FreeEnergyRecord:
        u = cap(epistemic_drive(signal, self.config))
        risks = risk_components(state)
        c = cap(accuracy_cost(risks))
        f = free_energy(u, c)
        prev = self._previous.get(k)
        gradient = 0.0 if prev is None else f - prev
        self._previous[k] = f
        return FreeEnergyRecord(
            agent_id=self.agent_id,
            t=t,
            k=k,
            u_epistemic=u,
            c_accuracy=c,
            free_energy=f,
            gradient=gradient,
            category=categorize(u, c, self.thresholds),
            risk_components=risks,
            u_signed=-u,
            weights=state.weights,
        )


FE_TRACE_COLUMNS = (
    "t", "k", "agent_id", "u_epistemic", "u_signed", "c_accuracy", "free_energy", "gradient", "category",
    "r1", "r2", "r3", "r4", "r5", "w_explore", "w_exploit", "w_coordinate", "w_backtrack",
)


def fe_trace_rows(records: Iterable[FreeEnergyRecord]) -> list[list[str]]:
    rows = []
    for r in records:
        rows.append(
            [str(r.t), str(r.k), str(r.agent_id)]
            + [f"{v:.6f}" for v in (r.u_epistemic, r.u_signed, r.c_accuracy, r.free_energy, r.gradient)]
            + [r.category.value]
            + [f"{v:.6f}" for v in r.risk_components]
            + [f"{v:.6f}" for v in r.weights.as_tuple()]
        )
    return rows


def format_fe_trace(records: Iterable[FreeEnergyRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(FE_TRACE_COLUMNS)
    writer.writerows(fe_trace_rows(records))
    return buf.getvalue()
