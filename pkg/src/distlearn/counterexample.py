"""Two distributions that a one-bit regression ensemble cannot tell apart.

Given the biases an agent rule assigns at query ``x0`` to the four possible
training pairs, :func:`build_auxiliary` finds a second two-atom law with the
labels swapped (``x_i`` carries ``y_{1-i}``) whose single-agent probability of
sending ONE at ``x0`` equals the original one. The fusion center then sees
i.i.d. Bernoulli bits with the same parameter under both laws, so any fusion
rule produces the same prediction law at ``x0`` although the targets differ.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .agents import DecisionRuleSpec
from .distributions import DiscreteAtoms
from .ensemble import Ensemble, ModelKind
from .errors import ConfigurationError, InfeasibleInstanceError
from .fusion import MeanTransfer, constant_transfer, linear_transfer
from .rng import COIN, MATCH, TRAIN, keyed_rng

_DENOM_FLOOR = 1e-6
# rounding slack when the matching mass lands on 0 or 1 exactly
_EDGE_TOL = 1e-12


def build_auxiliary(table: Sequence[float], q: float) -> float:
    """Mass at ``x1`` of the label-swapped law that matches the bit statistics.

    ``table`` lists the biases at query ``x0`` for the training pairs
    ``(x0, y0), (x1, y1), (x0, y1), (x1, y0)`` in that order. Under the swapped
    law an agent at ``x0`` holds ``y1`` and one at ``x1`` holds ``y0``; solving

        (1 - p1) * t(x0, y1) + p1 * t(x1, y0) = q * t(x0, y0) + (1 - q) * t(x1, y1)

    for ``p1`` gives the result.
    """
    a00, a11, a01, a10 = (float(v) for v in table)
    if not 0.0 < q < 1.0:
        raise ConfigurationError(f"q must lie in (0, 1), got {q}")
    for v in (a00, a11, a01, a10):
        if not 0.0 <= v <= 1.0:
            raise ConfigurationError(f"bias {v} is outside [0, 1]")
    denom = a01 - a10
    if abs(denom) < _DENOM_FLOOR:
        raise InfeasibleInstanceError(
            f"degenerate instance: biases for (x0, y1) and (x1, y0) coincide ({a01} vs {a10})"
        )
    target = q * a00 + (1.0 - q) * a11
    p1 = (a01 - target) / denom
    if -_EDGE_TOL <= p1 < 0.0 or 1.0 < p1 <= 1.0 + _EDGE_TOL:
        p1 = min(max(p1, 0.0), 1.0)
    if not 0.0 <= p1 <= 1.0:
        raise InfeasibleInstanceError(
            f"infeasible instance: matching mass {p1:.6g} is outside [0, 1]"
        )
    return p1


@dataclass(frozen=True)
class CounterexampleInstance:
    x0: tuple
    x1: tuple
    y0: float
    y1: float
    q: float
    table: tuple[float, float, float, float]
    aux_p1: Optional[float] = None
    x1_bias: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "x0", tuple(float(v) for v in np.atleast_1d(self.x0)))
        object.__setattr__(self, "x1", tuple(float(v) for v in np.atleast_1d(self.x1)))
        object.__setattr__(self, "table", tuple(float(v) for v in self.table))
        if len(self.table) != 4:
            raise ConfigurationError("table needs exactly four biases")
        if self.y0 == self.y1:
            raise ConfigurationError("y0 and y1 must differ")
        if self.x0 == self.x1:
            raise ConfigurationError("x0 and x1 must differ")
        if self.aux_p1 is None:
            object.__setattr__(self, "aux_p1", build_auxiliary(self.table, self.q))
        elif not 0.0 <= self.aux_p1 <= 1.0:
            raise InfeasibleInstanceError(f"aux_p1 = {self.aux_p1} is outside [0, 1]")

    def with_aux(self, aux_p1: float) -> "CounterexampleInstance":
        """Copy with an explicitly chosen (possibly mismatched) auxiliary mass."""
        return dataclasses.replace(self, aux_p1=aux_p1)

    @property
    def target_prob(self) -> float:
        """P{agent sends ONE | query x0} under the original law."""
        a00, a11, _, _ = self.table
        return self.q * a00 + (1.0 - self.q) * a11

    @property
    def aux_prob(self) -> float:
        """P{agent sends ONE | query x0} under the label-swapped law."""
        _, _, a01, a10 = self.table
        return (1.0 - self.aux_p1) * a01 + self.aux_p1 * a10

    @property
    def original(self) -> DiscreteAtoms:
        return DiscreteAtoms.build(
            [(self.x0, self.q, [(self.y0, 1.0)]), (self.x1, 1.0 - self.q, [(self.y1, 1.0)])]
        )

    @property
    def swapped(self) -> DiscreteAtoms:
        return DiscreteAtoms.build(
            [(self.x0, 1.0 - self.aux_p1, [(self.y1, 1.0)]), (self.x1, self.aux_p1, [(self.y0, 1.0)])]
        )

    @property
    def rule(self) -> DecisionRuleSpec:
        """The table rule; queries at ``x1`` get the uninformative ``x1_bias``."""
        a00, a11, a01, a10 = self.table
        x0, x1, y0, y1 = self.x0, self.x1, self.y0, self.y1
        entries = {
            (x0, x0, y0): a00, (x0, x1, y1): a11, (x0, x0, y1): a01, (x0, x1, y0): a10,
        }
        for xt in (x0, x1):
            for yt in (y0, y1):
                entries[(x1, xt, yt)] = self.x1_bias
        return DecisionRuleSpec.custom_table(entries)

    @property
    def query_masses(self) -> tuple[float, float]:
        """Mass of ``x0`` under the original and the swapped law."""
        return self.q, 1.0 - self.aux_p1

    @property
    def irreducibility(self) -> float:
        """Lower bound on the larger of the two mass-weighted risk gaps at ``x0``.

        Both laws induce the same prediction law V at x0, and for any V,
        max(E(V - y0)^2, E(V - y1)^2) >= (y0 - y1)^2 / 4 (midpoint bound).
        """
        return (self.y0 - self.y1) ** 2 * min(self.query_masses) / 4.0

    def to_dict(self) -> dict:
        return {
            "x0": list(self.x0), "x1": list(self.x1), "y0": self.y0, "y1": self.y1,
            "q": self.q, "table": list(self.table), "x1_bias": self.x1_bias,
        }

    @classmethod
    def from_dict(cls, spec: dict) -> "CounterexampleInstance":
        if spec.get("shipped"):
            return shipped_instance()
        try:
            return cls(
                x0=spec["x0"], x1=spec["x1"], y0=float(spec["y0"]), y1=float(spec["y1"]),
                q=float(spec["q"]), table=tuple(spec["table"]),
                x1_bias=float(spec.get("x1_bias", 0.5)),
            )
        except (KeyError, TypeError) as exc:
            raise ConfigurationError(f"malformed counterexample block: {exc}") from exc


def shipped_instance() -> CounterexampleInstance:
    return CounterexampleInstance(x0=(0.0,), x1=(1.0,), y0=0.0, y1=1.0, q=0.5, table=(0.9, 0.2, 0.6, 0.3))


def verify_match(
    instance: CounterexampleInstance,
    n: int = 1_000_000,
    exactness: str = "exact",
    seed: int = 0,
) -> float:
    """|P{ONE | x0} under the original law - the same under the swapped law|.

    ``exact`` uses mixture arithmetic; ``monte_carlo`` simulates ``n`` agents on
    each side (training pair plus coin) and compares the empirical frequencies.
    """
    if exactness == "exact":
        return abs(instance.target_prob - instance.aux_prob)
    if exactness != "monte_carlo":
        raise ConfigurationError(f"unknown exactness mode {exactness!r}")
    rule = instance.rule
    freqs = []
    for side, dist in enumerate((instance.original, instance.swapped)):
        train = dist.sample(n, (seed, MATCH, side, 0))
        ens = Ensemble(
            ModelKind.REGRESS_NO_ABSTENTION, train, rule=rule,
            transfer=MeanTransfer("mean", lambda m: m, 1.0),
        )
        ones, _ = ens.vote_counts(instance.x0, keyed_rng(seed, MATCH, side, 1))
        freqs.append(ones / n)
    return abs(freqs[0] - freqs[1])


def transfer_family(instance: CounterexampleInstance) -> list[MeanTransfer]:
    """Mean-based rules satisfying permutation invariance and the Lipschitz bound.

    Includes the constant predictions that are optimal at ``x0`` for each law
    separately (the bit mean concentrates, so the best transfer fitted to one law
    is its target), their midpoint, the full-vote linear rule and an affine rule
    passing through ``y0`` at the matched bit probability.
    """
    y0, y1 = instance.y0, instance.y1
    c = max(abs(y0), abs(y1))
    t = instance.target_prob
    slope = 2.0 * abs(y1 - y0)
    return [
        constant_transfer(y0, "oracle_P"),
        constant_transfer(y1, "oracle_Pprime"),
        constant_transfer(0.5 * (y0 + y1), "midpoint"),
        dataclasses.replace(linear_transfer(c), name="linear"),
        MeanTransfer("affine_fit_P", lambda m: y0 + slope * (m - t), slope),
    ]


@dataclass(frozen=True)
class GapRow:
    rule: str
    n: int
    gap_P: float
    gap_Pprime: float

    @property
    def max_gap(self) -> float:
        return max(self.gap_P, self.gap_Pprime)


def inconsistency_report(
    instance: CounterexampleInstance,
    transfers: Optional[Sequence[MeanTransfer]] = None,
    n_list: Sequence[int] = (100, 1000, 10000),
    trials: int = 200,
    seed: int = 0,
) -> list[GapRow]:
    """Mass-weighted squared-error gap at ``x0`` for each rule and ensemble size.

    For each law and trial a fresh training set is drawn and one query at ``x0``
    is answered; every rule is applied to the same bit mean. Since labels are
    deterministic the minimal risk is 0, so the gap at ``x0`` is
    ``P{X = x0} * E(prediction - eta(x0))^2``.
    """
    if transfers is None:
        transfers = transfer_family(instance)
    if trials < 1:
        raise ConfigurationError("trials must be at least 1")
    rule = instance.rule
    laws = (instance.original, instance.swapped)
    targets = (instance.y0, instance.y1)
    masses = instance.query_masses
    rows = []
    for n in n_list:
        errs = np.zeros((len(transfers), 2))
        for side, dist in enumerate(laws):
            for t in range(trials):
                train = dist.sample(n, (seed, TRAIN, side, n, t))
                ens = Ensemble(ModelKind.REGRESS_NO_ABSTENTION, train, rule=rule, transfer=transfers[0])
                ones, _ = ens.vote_counts(instance.x0, keyed_rng(seed, COIN, side, n, t))
                m = ones / n
                for i, g in enumerate(transfers):
                    errs[i, side] += (g(m) - targets[side]) ** 2
        errs /= trials
        for i, g in enumerate(transfers):
            rows.append(GapRow(g.name, int(n), masses[0] * errs[i, 0], masses[1] * errs[i, 1]))
    return rows


def exact_gap(instance: CounterexampleInstance, transfer: MeanTransfer, n: int, side: int) -> float:
    """Closed-form gap at ``x0``: the bit count is Binomial(n, p) under either law."""
    p = instance.target_prob if side == 0 else instance.aux_prob
    k = np.arange(n + 1)
    pmf = stats.binom.pmf(k, n, p)
    target = instance.y0 if side == 0 else instance.y1
    preds = np.array([transfer(v) for v in k / n], dtype=float)
    return float(instance.query_masses[side] * np.sum(pmf * (preds - target) ** 2))
