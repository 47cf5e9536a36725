"""Train-once / query-many simulation of an agent ensemble and its risk.

Randomness is keyed: the training set of trial ``t`` at size ``n`` comes from
stream ``(seed, TRAIN, n, t)``, its query pairs from ``(seed, QUERY, t)`` and
the coins flipped for query ``j`` from ``(seed, COIN, n, t, j)``. Query pairs do
not depend on ``n``, so every size in a sweep is scored on the same test points. Within a query
the voters' coins are consumed in the ensemble's sorted-index order. Results are
therefore identical for any thread count and any way of splitting ``n_list``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Any, Optional, Sequence

import numpy as np
from scipy import stats

from .agents import DecisionRuleSpec, RateSchedule, RuleKind, Theorem, delta_bar_many, distances
from .distributions import LabelSpace, SyntheticDistribution, TrainingSet, _as_points
from .errors import UsageError
from .fusion import (
    MeanTransfer,
    majority_pm_counts,
    majority_with_abstention_counts,
    regress_counts,
)
from .rng import COIN, MARGIN, QUERY, TRAIN, Stream, as_generator, keyed_rng


class ModelKind(str, Enum):
    CLASSIFY_WITH_ABSTENTION = "ClassifyWithAbstention"
    CLASSIFY_NO_ABSTENTION = "ClassifyNoAbstention"
    REGRESS_WITH_ABSTENTION = "RegressWithAbstention"
    REGRESS_NO_ABSTENTION = "RegressNoAbstention"

    @property
    def label_space(self) -> LabelSpace:
        return {
            ModelKind.CLASSIFY_WITH_ABSTENTION: LabelSpace.BINARY01,
            ModelKind.CLASSIFY_NO_ABSTENTION: LabelSpace.BINARYPM,
            ModelKind.REGRESS_WITH_ABSTENTION: LabelSpace.REAL,
            ModelKind.REGRESS_NO_ABSTENTION: LabelSpace.REAL,
        }[self]

    @property
    def theorem(self) -> Optional[Theorem]:
        """The consistency theorem whose rate conditions apply, if any."""
        return {
            ModelKind.CLASSIFY_WITH_ABSTENTION: Theorem.T1,
            ModelKind.CLASSIFY_NO_ABSTENTION: Theorem.T2,
            ModelKind.REGRESS_WITH_ABSTENTION: Theorem.T3,
        }.get(self)

    @property
    def is_classification(self) -> bool:
        return self.label_space.is_binary


def rule_for(model: ModelKind, schedule: RateSchedule, n: int) -> DecisionRuleSpec:
    model = ModelKind(model)
    r = schedule.radius(n)
    if model is ModelKind.CLASSIFY_WITH_ABSTENTION:
        return DecisionRuleSpec.classify_abstain(r)
    if model is ModelKind.CLASSIFY_NO_ABSTENTION:
        return DecisionRuleSpec.classify_coin(r)
    if model is ModelKind.REGRESS_WITH_ABSTENTION:
        return DecisionRuleSpec.regress_abstain_clip(r, schedule.clip(n))
    raise UsageError("the one-bit regression model needs an explicit CustomTable rule")


class Ensemble:
    """``n`` agents sharing one decision rule, each holding one training pair.

    In one dimension the agents are kept in a sorted index so that a query only
    touches the agents whose datum lies near the ball; in higher dimension every
    agent is scanned. With ``aggregate=True`` the guessing agents of the
    no-abstention classifier are summarized by one Binomial(n - k, 1/2) draw,
    which has exactly the law of their vote count.
    """

    def __init__(
        self,
        model: ModelKind | str,
        training: TrainingSet,
        schedule: Optional[RateSchedule] = None,
        *,
        rule: Optional[DecisionRuleSpec] = None,
        transfer: Optional[MeanTransfer] = None,
        aggregate: bool = True,
    ):
        self.model = ModelKind(model)
        self.training = training
        self.n = training.n
        self.aggregate = aggregate
        if rule is None:
            if schedule is None:
                raise UsageError("either a schedule or an explicit rule is required")
            rule = rule_for(self.model, schedule, self.n)
        self.rule = rule
        self.transfer = transfer
        if self.model is ModelKind.REGRESS_NO_ABSTENTION:
            if rule.kind.abstains:
                raise UsageError("the one-bit regression model needs a rule without abstention")
            if transfer is None:
                raise UsageError("the one-bit regression model needs a mean transfer")
        elif rule.kind is RuleKind.CUSTOM_TABLE:
            raise UsageError(f"{self.model.value} uses its own radius rule, not a table")
        self._check_labels()

        xs, ys = training.xs, training.ys
        self._sorted = xs.shape[1] == 1 and rule.kind is not RuleKind.CUSTOM_TABLE
        if self._sorted:
            order = np.argsort(xs[:, 0], kind="stable")
            self._x = xs[order, 0]
            self._y = ys[order]
        else:
            self._x = xs
            self._y = ys
        if rule.kind is RuleKind.REGRESS_ABSTAIN_CLIP:
            c = rule.clip
            self._bias = np.where(np.abs(self._y) <= c, self._y / (2.0 * c) + 0.5, 0.5)
        self._table_cache: dict[tuple, np.ndarray] = {}

    def _check_labels(self):
        ys = self.training.ys
        space = self.model.label_space
        if space is LabelSpace.BINARY01 and not np.all((ys == 0) | (ys == 1)):
            raise UsageError("ClassifyWithAbstention needs labels in {0, 1}")
        if space is LabelSpace.BINARYPM and not np.all((ys == -1) | (ys == 1)):
            raise UsageError("ClassifyNoAbstention needs labels in {-1, +1}")

    @property
    def needs_coins(self) -> bool:
        # model I agents send their label with certainty
        return self.model is not ModelKind.CLASSIFY_WITH_ABSTENTION

    def ball(self, x: Any) -> tuple[np.ndarray, np.ndarray]:
        """Labels of the agents whose datum lies in the closed ball at ``x``,
        plus the matching slice of per-agent biases (or indices)."""
        r = self.rule.radius
        if self._sorted:
            q = float(np.asarray(x, dtype=float).reshape(-1)[0])
            slack = 1e-9 * (abs(q) + r) + 1e-300
            lo = np.searchsorted(self._x, q - r - slack, side="left")
            hi = np.searchsorted(self._x, q + r + slack, side="right")
            mask = np.abs(self._x[lo:hi] - q) <= r
            idx = np.arange(lo, hi)[mask]
        else:
            idx = np.flatnonzero(distances(x, self._x) <= r)
        return idx, self._y[idx]

    def vote_counts(self, x: Any, rng: Optional[np.random.Generator] = None) -> tuple[int, int]:
        """(ONE count, ZERO count) received for query ``x``; abstainers excluded."""
        kind = self.rule.kind
        if kind is RuleKind.CUSTOM_TABLE:
            return self._table_votes(x, rng)
        idx, labels = self.ball(x)
        k = idx.shape[0]
        if kind is RuleKind.CLASSIFY_ABSTAIN:
            ones = int(np.count_nonzero(labels == 1))
            return ones, k - ones
        if kind is RuleKind.CLASSIFY_COIN:
            informed = int(np.count_nonzero(labels == 1))
            guessers = self.n - k
            if self.aggregate:
                guessed = int(rng.binomial(guessers, 0.5)) if guessers else 0
            else:
                guessed = int(np.count_nonzero(rng.random(guessers) < 0.5))
            ones = informed + guessed
            return ones, self.n - ones
        ones = int(np.count_nonzero(rng.random(k) < self._bias[idx]))
        return ones, k - ones

    def _table_votes(self, x, rng):
        key = tuple(np.atleast_1d(np.asarray(x, dtype=float)).tolist())
        biases = self._table_cache.get(key)
        if biases is None:
            biases = delta_bar_many(self.rule, x, self._x, self._y)
            self._table_cache[key] = biases
        ones = int(np.count_nonzero(rng.random(self.n) < biases))
        return ones, self.n - ones

    def predict(self, x: Any, rng: Optional[np.random.Generator] = None):
        if self.needs_coins and rng is None:
            raise UsageError("this model needs a random stream for the agents' coins")
        ones, zeros = self.vote_counts(x, rng)
        m = self.model
        if m is ModelKind.CLASSIFY_WITH_ABSTENTION:
            return majority_with_abstention_counts(ones, zeros)
        if m is ModelKind.CLASSIFY_NO_ABSTENTION:
            return majority_pm_counts(ones, zeros)
        if m is ModelKind.REGRESS_WITH_ABSTENTION:
            return regress_counts(ones, zeros, self.rule.clip)
        return float(self.transfer(ones / self.n))


def predict(
    model: ModelKind | str,
    training: TrainingSet,
    schedule: Optional[RateSchedule],
    x: Any,
    stream: Stream,
    *,
    rule: Optional[DecisionRuleSpec] = None,
    transfer: Optional[MeanTransfer] = None,
    aggregate: bool = True,
):
    """Broadcast ``x`` to the ensemble, collect responses and fuse them."""
    ens = Ensemble(model, training, schedule, rule=rule, transfer=transfer, aggregate=aggregate)
    return ens.predict(x, as_generator(stream))


@dataclass(frozen=True)
class RiskEstimate:
    n: int
    mean_risk: float
    std_error: float
    trials: int
    queries_per_trial: int
    bayes_risk: float
    seed: int = 0

    @property
    def gap(self) -> float:
        return self.mean_risk - self.bayes_risk


def _check_compatible(model: ModelKind, dist: SyntheticDistribution) -> None:
    if dist.label_space is not model.label_space:
        raise UsageError(
            f"{model.value} needs {model.label_space.value} labels, "
            f"distribution has {dist.label_space.value}"
        )


def trial_risk(
    model: ModelKind,
    dist: SyntheticDistribution,
    schedule: Optional[RateSchedule],
    n: int,
    trial: int,
    queries: int,
    seed: int,
    *,
    rule: Optional[DecisionRuleSpec] = None,
    transfer: Optional[MeanTransfer] = None,
    aggregate: bool = True,
) -> float:
    """Empirical risk of one trained ensemble on ``queries`` fresh (X, Y) pairs."""
    training = dist.sample(n, (seed, TRAIN, n, trial))
    test = dist.sample(queries, (seed, QUERY, trial))
    ens = Ensemble(model, training, schedule, rule=rule, transfer=transfer, aggregate=aggregate)
    preds = np.empty(queries)
    for j in range(queries):
        rng = keyed_rng(seed, COIN, n, trial, j) if ens.needs_coins else None
        preds[j] = ens.predict(test.xs[j], rng)
    if model.is_classification:
        return float(np.mean(preds != test.ys))
    return float(np.mean((preds - test.ys) ** 2))


def estimate_risk(
    model: ModelKind | str,
    dist: SyntheticDistribution,
    schedule: Optional[RateSchedule],
    n: int,
    trials: int = 20,
    queries: int = 500,
    seed: int = 0,
    *,
    rule: Optional[DecisionRuleSpec] = None,
    transfer: Optional[MeanTransfer] = None,
    aggregate: bool = True,
    threads: int = 1,
) -> RiskEstimate:
    """Monte Carlo estimate of E{L_n}: mean over trials of each trial's empirical
    risk, with the between-trial standard error."""
    model = ModelKind(model)
    _check_compatible(model, dist)
    if n < 1:
        raise UsageError(f"ensemble size must be at least 1, got {n}")
    if trials < 1 or queries < 1:
        raise UsageError("trials and queries must both be at least 1")

    def one(t: int) -> float:
        return trial_risk(
            model, dist, schedule, n, t, queries, seed,
            rule=rule, transfer=transfer, aggregate=aggregate,
        )

    if threads > 1 and trials > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            risks = np.array(list(pool.map(one, range(trials))))
    else:
        risks = np.array([one(t) for t in range(trials)])
    se = float(risks.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    return RiskEstimate(
        n=n,
        mean_risk=float(risks.mean()),
        std_error=se,
        trials=trials,
        queries_per_trial=queries,
        bayes_risk=float(dist.bayes_risk()),
        seed=seed,
    )


def convergence_sweep(
    model: ModelKind | str,
    dist: SyntheticDistribution,
    schedule: Optional[RateSchedule],
    n_list: Sequence[int],
    trials: int = 20,
    queries: int = 500,
    seed: int = 0,
    **kwargs,
) -> list[RiskEstimate]:
    n_list = [int(n) for n in n_list]
    if not n_list or any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise UsageError("n_list must be non-empty and strictly increasing")
    return [estimate_risk(model, dist, schedule, n, trials, queries, seed, **kwargs) for n in n_list]


# ---------------------------------------------------------------------------
# margin diagnostics for the no-abstention classifier


@dataclass(frozen=True)
class MarginStats:
    """Monte Carlo and closed-form mean/variance of the margin eta(x) * delta.

    ``eta_n`` is E{eta(X') | X' in ball}, ``ball_mass`` the ball's probability and
    ``eta_bar_n`` the probability that an agent whose datum sits at ``x`` sends ONE.
    """

    x: Any
    n: int
    m_n: float
    sigma2_n: float
    m_n_se: float
    sigma2_n_se: float
    m_n_closed: float
    sigma2_n_closed: float
    eta_n: float
    ball_mass: float
    eta_bar_n: float
    samples: int

    def m_within(self, k: float = 4.0) -> bool:
        return abs(self.m_n - self.m_n_closed) <= k * self.m_n_se

    def sigma2_within(self, k: float = 4.0) -> bool:
        return abs(self.sigma2_n - self.sigma2_n_closed) <= k * self.sigma2_n_se


def _two_point_moments(eta: float, plus: int, total: int) -> tuple[float, float, float, float]:
    """Sample mean/variance and their standard errors for values in {-eta, +eta}."""
    p = plus / total
    mean = eta * (2 * p - 1)
    q = p * (1 - p)
    var_pop = 4 * eta * eta * q
    m4 = 16 * eta**4 * q * (1 - 3 * q)
    var = var_pop * total / (total - 1) if total > 1 else 0.0
    se_mean = math.sqrt(var / total)
    se_var = math.sqrt(max(m4 - var_pop * var_pop, 0.0) / total)
    return mean, var, se_mean, se_var


def margin_stats(
    dist: SyntheticDistribution,
    schedule: RateSchedule,
    x: Any,
    n: int,
    mc_samples: int,
    seed: int,
    *,
    aggregate: bool = False,
) -> MarginStats:
    """Estimate m_n(x) = E{eta(X) delta | X = x} and sigma_n^2(x) by simulating
    ``mc_samples`` independent agents, next to their closed forms."""
    if dist.label_space is not LabelSpace.BINARYPM:
        raise UsageError("margin statistics are defined for the {-1, +1} encoding")
    if mc_samples < 2:
        raise UsageError("mc_samples must be at least 2")
    pts, _ = _as_points(x, dist.dim)
    q = pts[0]
    r = schedule.radius(n)
    eta_x = float(dist.regression_fn(q if dist.dim > 1 else q[0]))

    train = dist.sample(mc_samples, (seed, MARGIN, n, 0))
    coins = keyed_rng(seed, MARGIN, n, 1)
    inside = distances(q, train.xs) <= r
    k = int(inside.sum())
    informed_plus = int(np.count_nonzero(train.ys[inside] == 1))
    if aggregate:
        guessed_plus = int(coins.binomial(mc_samples - k, 0.5)) if mc_samples > k else 0
        m, s2, m_se, s2_se = _two_point_moments(eta_x, informed_plus + guessed_plus, mc_samples)
    else:
        delta = np.where(inside, train.ys, np.where(coins.random(mc_samples) < 0.5, 1.0, -1.0))
        v = eta_x * delta
        m = float(v.mean())
        s2 = float(v.var(ddof=1))
        c = v - m
        m_se = math.sqrt(s2 / mc_samples)
        s2_se = math.sqrt(max(float(np.mean(c**4)) - float(np.mean(c**2)) ** 2, 0.0) / mc_samples)

    mass = dist.ball_mass(q if dist.dim > 1 else q[0], r)
    eta_n = dist.ball_mean_eta(q if dist.dim > 1 else q[0], r) if mass > 0 else 0.0
    mean_delta = eta_n * mass
    return MarginStats(
        x=x,
        n=n,
        m_n=m,
        sigma2_n=s2,
        m_n_se=m_se,
        sigma2_n_se=s2_se,
        m_n_closed=eta_x * mean_delta,
        sigma2_n_closed=eta_x * eta_x * (1.0 - mean_delta * mean_delta),
        eta_n=eta_n,
        ball_mass=mass,
        eta_bar_n=0.5 * (1.0 + eta_x),
        samples=mc_samples,
    )


# ---------------------------------------------------------------------------


def binomial_reciprocal_check(n: int, p: float) -> tuple[float, float, bool]:
    """Exact E{(1/B) 1{B > 0}} for B ~ Binomial(n, p) against 2 / ((n + 1) p)."""
    if n < 1:
        raise UsageError(f"n must be >= 1, got {n}")
    if not 0.0 < p <= 1.0:
        raise UsageError(f"p must lie in (0, 1], got {p}")
    k = np.arange(1, n + 1)
    lhs = float(np.sum(stats.binom.pmf(k, n, p) / k))
    rhs = 2.0 / ((n + 1) * p)
    return lhs, rhs, lhs <= rhs
