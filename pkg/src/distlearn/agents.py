"""Agent decision rules and the randomized response they transmit.

An agent holding ``(xi, yi)`` answers a broadcast query ``x`` in two steps:
``delta_bar`` maps the triple to either ``ABSTAIN`` (``None``) or a coin bias in
``[0, 1]``, and ``respond`` flips that coin. Abstention is never randomized.

On the wire ``Response.ONE`` / ``Response.ZERO`` carry the labels 1 / 0 of the
{0, 1} encoding and +1 / -1 of the {-1, +1} encoding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from types import MappingProxyType
from typing import Any, Mapping, Optional

import numpy as np

from .errors import ConfigurationError, UsageError
from .rng import Stream, as_generator

ABSTAIN = None


class Response(IntEnum):
    ABSTAIN = -1
    ZERO = 0
    ONE = 1


class RuleKind(str, Enum):
    CLASSIFY_ABSTAIN = "ClassifyAbstain"
    CLASSIFY_COIN = "ClassifyCoin"
    REGRESS_ABSTAIN_CLIP = "RegressAbstainClip"
    CUSTOM_TABLE = "CustomTable"

    @property
    def abstains(self) -> bool:
        return self in (RuleKind.CLASSIFY_ABSTAIN, RuleKind.REGRESS_ABSTAIN_CLIP)


def _point_key(x: Any) -> tuple[float, ...]:
    return tuple(float(v) for v in np.atleast_1d(np.asarray(x, dtype=float)))


def table_key(x: Any, xi: Any, yi: float) -> tuple:
    return (_point_key(x), _point_key(xi), float(yi))


@dataclass(frozen=True)
class DecisionRuleSpec:
    """Parameters of a homogeneous agent rule.

    Use the ``classify_abstain`` / ``classify_coin`` / ``regress_abstain_clip`` /
    ``custom_table`` constructors rather than filling fields by hand.
    """

    kind: RuleKind
    radius: Optional[float] = None
    clip: Optional[float] = None
    table: Optional[Mapping[tuple, Optional[float]]] = field(default=None, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "kind", RuleKind(self.kind))
        if self.kind is RuleKind.CUSTOM_TABLE:
            if not self.table:
                raise ConfigurationError("CustomTable rule needs a non-empty table")
            for key, value in self.table.items():
                if value is None:
                    raise ConfigurationError(
                        f"CustomTable entry {key} abstains; tables model rules without abstention"
                    )
                if not 0.0 <= value <= 1.0:
                    raise ConfigurationError(f"CustomTable entry {key} = {value} is outside [0, 1]")
            object.__setattr__(self, "table", MappingProxyType(dict(self.table)))
            return
        if self.radius is None or not self.radius > 0 or not math.isfinite(self.radius):
            raise ConfigurationError(f"radius must be a positive finite real, got {self.radius}")
        if self.kind is RuleKind.REGRESS_ABSTAIN_CLIP:
            if self.clip is None or not self.clip > 0 or not math.isfinite(self.clip):
                raise ConfigurationError(f"clip level must be a positive finite real, got {self.clip}")

    @classmethod
    def classify_abstain(cls, radius: float) -> "DecisionRuleSpec":
        return cls(RuleKind.CLASSIFY_ABSTAIN, radius=float(radius))

    @classmethod
    def classify_coin(cls, radius: float) -> "DecisionRuleSpec":
        return cls(RuleKind.CLASSIFY_COIN, radius=float(radius))

    @classmethod
    def regress_abstain_clip(cls, radius: float, clip: float) -> "DecisionRuleSpec":
        return cls(RuleKind.REGRESS_ABSTAIN_CLIP, radius=float(radius), clip=float(clip))

    @classmethod
    def custom_table(cls, entries) -> "DecisionRuleSpec":
        """``entries`` is a mapping or iterable of ``((x, xi, yi), bias)``."""
        items = entries.items() if isinstance(entries, Mapping) else entries
        table = {table_key(*k): (None if v is None else float(v)) for k, v in items}
        return cls(RuleKind.CUSTOM_TABLE, table=table)


def distances(x: Any, xs: np.ndarray) -> np.ndarray:
    """Euclidean distances from one query to the rows of ``xs``."""
    xs = np.asarray(xs, dtype=float)
    if xs.ndim == 1:
        xs = xs.reshape(-1, 1)
    q = np.atleast_1d(np.asarray(x, dtype=float))
    if q.shape[0] != xs.shape[1]:
        raise UsageError(f"query has dimension {q.shape[0]}, training points {xs.shape[1]}")
    if xs.shape[1] == 1:
        return np.abs(xs[:, 0] - q[0])
    return np.sqrt(((xs - q) ** 2).sum(axis=1))


def clip_map(y, c: float):
    """Send ``[-c, c]`` affinely onto ``[0, 1]`` and everything else to 1/2."""
    if not c > 0:
        raise ConfigurationError(f"clip level must be positive, got {c}")
    y_arr = np.asarray(y, dtype=float)
    out = np.where(np.abs(y_arr) <= c, y_arr / (2.0 * c) + 0.5, 0.5)
    return float(out) if out.ndim == 0 else out


def delta_bar(rule: DecisionRuleSpec, x: Any, xi: Any, yi: float) -> Optional[float]:
    """Coin bias sent by one agent, or ``ABSTAIN``."""
    if rule.kind is RuleKind.CUSTOM_TABLE:
        key = table_key(x, xi, yi)
        try:
            return rule.table[key]
        except KeyError:
            raise ConfigurationError(f"CustomTable has no entry for {key}") from None
    inside = float(distances(x, np.atleast_1d(np.asarray(xi, dtype=float))[None, :])[0]) <= rule.radius
    if rule.kind is RuleKind.CLASSIFY_ABSTAIN:
        if yi not in (0.0, 1.0):
            raise UsageError(f"ClassifyAbstain expects labels in {{0, 1}}, got {yi}")
        return float(yi) if inside else ABSTAIN
    if rule.kind is RuleKind.CLASSIFY_COIN:
        if yi not in (-1.0, 1.0):
            raise UsageError(f"ClassifyCoin expects labels in {{-1, +1}}, got {yi}")
        return 0.5 * yi + 0.5 if inside else 0.5
    return clip_map(yi, rule.clip) if inside else ABSTAIN


def delta_bar_many(rule: DecisionRuleSpec, x: Any, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Vectorised ``delta_bar`` over a whole ensemble; NaN marks abstention."""
    ys = np.asarray(ys, dtype=float)
    if rule.kind is RuleKind.CUSTOM_TABLE:
        xs2 = np.asarray(xs, dtype=float).reshape(len(ys), -1)
        rows = np.column_stack([xs2, ys])
        uniq, inverse = np.unique(rows, axis=0, return_inverse=True)
        vals = np.array([delta_bar(rule, x, row[:-1], row[-1]) for row in uniq], dtype=float)
        return vals[np.asarray(inverse).reshape(-1)]
    inside = distances(x, xs) <= rule.radius
    if rule.kind is RuleKind.CLASSIFY_ABSTAIN:
        return np.where(inside, ys, np.nan)
    if rule.kind is RuleKind.CLASSIFY_COIN:
        return np.where(inside, 0.5 * ys + 0.5, 0.5)
    return np.where(inside, clip_map(ys, rule.clip), np.nan)


def flip(biases: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw responses for an array of biases (NaN = abstain) as int8 codes.

    Agent ``i`` sends ONE iff its uniform ``u_i`` is below its bias, so biases 0
    and 1 are deterministic.
    """
    biases = np.asarray(biases, dtype=float)
    u = rng.random(biases.shape)
    out = (u < biases).astype(np.int8)
    out[np.isnan(biases)] = Response.ABSTAIN
    return out


def respond(rule: DecisionRuleSpec, x: Any, xi: Any, yi: float, stream: Stream) -> Response:
    bias = delta_bar(rule, x, xi, yi)
    if bias is ABSTAIN:
        return Response.ABSTAIN
    return Response.ONE if as_generator(stream).random() < bias else Response.ZERO


# ---------------------------------------------------------------------------
# rate schedules


@dataclass(frozen=True)
class RateSchedule:
    """``r_n = r0 * n**-beta`` and ``c_n = c0 * n**gamma``."""

    r0: float
    beta: float
    c0: float = 1.0
    gamma: float = 0.0

    def __post_init__(self):
        if not (self.r0 > 0 and math.isfinite(self.r0)):
            raise ConfigurationError(f"r0 must be positive, got {self.r0}")
        if not (self.c0 > 0 and math.isfinite(self.c0)):
            raise ConfigurationError(f"c0 must be positive, got {self.c0}")
        if self.beta < 0 or self.gamma < 0:
            raise ConfigurationError("beta and gamma must be non-negative")

    def radius(self, n: int) -> float:
        return self.r0 * float(n) ** (-self.beta)

    def clip(self, n: int) -> float:
        return self.c0 * float(n) ** self.gamma

    def to_dict(self) -> dict:
        return {"r0": self.r0, "beta": self.beta, "c0": self.c0, "gamma": self.gamma}


class Theorem(str, Enum):
    T1 = "T1"
    T2 = "T2"
    T3 = "T3"


@dataclass(frozen=True)
class Condition:
    statement: str
    exponent: float
    passed: bool


@dataclass(frozen=True)
class ScheduleReport:
    theorem: Theorem
    d: int
    conditions: tuple[Condition, ...]

    @property
    def valid(self) -> bool:
        return all(c.passed for c in self.conditions)

    @property
    def violations(self) -> list[str]:
        return [c.statement for c in self.conditions if not c.passed]


def schedule_check(schedule: RateSchedule, theorem: Theorem | str, d: int) -> ScheduleReport:
    """Check the asymptotic rate conditions on the schedule's exponents.

    Each condition is reduced to the sign of one exponent of ``n``: e.g.
    ``(r_n)^d sqrt(n) = r0^d n^(1/2 - d*beta)`` diverges iff ``1/2 - d*beta > 0``.
    """
    if not isinstance(schedule, RateSchedule):
        raise UsageError("only parametric schedules r0*n^-beta, c0*n^gamma are supported")
    theorem = Theorem(theorem)
    if d < 1:
        raise UsageError(f"dimension must be >= 1, got {d}")
    b, g = schedule.beta, schedule.gamma
    conds = [Condition("r_n → 0", -b, b > 0)]
    if theorem is Theorem.T1:
        e = 1.0 - d * b
        conds.append(Condition("(r_n)^d n → ∞", e, e > 0))
    elif theorem is Theorem.T2:
        e = 0.5 - d * b
        conds.append(Condition("(r_n)^d √n → ∞", e, e > 0))
    else:
        conds.insert(0, Condition("c_n → ∞", g, g > 0))
        e = 2.0 * g - 1.0 + d * b
        conds.append(Condition("c_n²/(n r_n^d) → 0", e, e < 0))
    return ScheduleReport(theorem, d, tuple(conds))
