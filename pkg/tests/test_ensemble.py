import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from distlearn import distributions as dd
from distlearn.agents import DecisionRuleSpec, RateSchedule
from distlearn.counterexample import shipped_instance
from distlearn.distributions import TrainingSet
from distlearn.ensemble import (
    Ensemble,
    ModelKind,
    binomial_reciprocal_check,
    convergence_sweep,
    estimate_risk,
    margin_stats,
    predict,
)
from distlearn.errors import UsageError
from distlearn.fusion import constant_transfer
from distlearn.rng import keyed_rng
from oracles import plugin_label

M1, M2, M3, M4 = ModelKind


@st.composite
def kernel_instances(draw):
    d = draw(st.sampled_from([1, 2]))
    n = draw(st.integers(1, 40))
    if draw(st.booleans()):
        # integer grid with integer radius: many points sit exactly on the sphere
        coord = st.integers(-4, 4).map(float)
        r = float(draw(st.integers(1, 3)))
    else:
        coord = st.floats(-1, 1, allow_nan=False)
        r = draw(st.floats(1e-4, 1.5))
    xs = [tuple(draw(coord) for _ in range(d)) for _ in range(n)]
    ys = [draw(st.sampled_from([0.0, 1.0])) for _ in range(n)]
    q = tuple(draw(coord) for _ in range(d))
    return xs, ys, q, r


class TestModelI:
    @given(kernel_instances())
    @settings(max_examples=200, deadline=None)
    def test_equals_naive_kernel_plugin(self, inst):
        xs, ys, q, r = inst
        ts = TrainingSet(np.array(xs, dtype=float), np.array(ys))
        ens = Ensemble(M1, ts, rule=DecisionRuleSpec.classify_abstain(r))
        query = q[0] if len(q) == 1 else q
        assert ens.predict(query) == plugin_label(xs, ys, q, r)

    def test_far_query_gives_zero(self):
        ts = TrainingSet(np.array([[0.0], [0.1]]), np.array([1.0, 1.0]))
        assert predict(M1, ts, RateSchedule(0.05, 0.0), 5.0, 0) == 0

    def test_single_agent_risk_matches_grid_oracle(self):
        dist = dd.shipped("classification_1d")
        r = 0.2
        m = 2000
        x = (np.arange(m) + 0.5) / m
        eta = dist.regression_fn(x)
        inside = np.abs(x[:, None] - x[None, :]) <= r
        cross = eta[None, :] * (1 - eta[:, None]) + (1 - eta[None, :]) * eta[:, None]
        oracle = float(np.mean(np.where(inside, cross, eta[:, None])))
        est = estimate_risk(M1, dist, RateSchedule(r, 0.0), 1, trials=3000, queries=20, seed=5)
        assert abs(est.mean_risk - oracle) <= 4 * est.std_error + 2e-3


class TestModelII:
    def test_all_informed_is_plain_majority(self):
        ts = TrainingSet(np.array([[0.0], [0.1], [0.2]]), np.array([1.0, -1.0, 1.0]))
        ens = Ensemble(M2, ts, RateSchedule(1.0, 0.0))
        assert all(ens.predict(0.1, keyed_rng(0, j)) == 1 for j in range(20))

    @pytest.mark.parametrize("aggregate", [True, False])
    def test_guessers_are_fair_coins(self, aggregate):
        n = 200
        xs = np.linspace(0, 1, n).reshape(-1, 1)
        ys = np.ones(n)
        ens = Ensemble(M2, TrainingSet(xs, ys), RateSchedule(0.1, 0.0), aggregate=aggregate)
        k = int(np.count_nonzero(np.abs(xs[:, 0] - 0.5) <= 0.1))
        draws = np.array([ens.vote_counts(0.5, keyed_rng(1, j))[0] for j in range(3000)])
        expected = k + (n - k) / 2
        se = math.sqrt((n - k) / 4 / draws.size)
        assert abs(draws.mean() - expected) <= 4 * se
        assert abs(draws.var(ddof=1) - (n - k) / 4) <= 0.1 * (n - k) / 4

    def test_needs_coins(self):
        ts = TrainingSet(np.array([[0.0]]), np.array([1.0]))
        with pytest.raises(UsageError):
            Ensemble(M2, ts, RateSchedule(0.1, 0.0)).predict(0.0)

    def test_rejects_01_labels(self):
        ts = TrainingSet(np.array([[0.0]]), np.array([0.0]))
        with pytest.raises(UsageError):
            Ensemble(M2, ts, RateSchedule(0.1, 0.0))


class TestModelIII:
    def test_empty_voters_risk_matches_quadrature(self):
        # a single agent with a vanishing ball almost never votes, so the
        # prediction is -c and the risk is E(c + eta(X))^2 + noise variance
        dist = dd.shipped("regression_1d")
        c = 0.7
        ref, _ = integrate.quad(
            lambda t: (c + float(dist.regression_fn(t))) ** 2, 0, 1, points=[0.3, 0.6]
        )
        ref += 0.04
        est = estimate_risk(M3, dist, RateSchedule(1e-9, 0.0, c, 0.0), 1, trials=200, queries=500, seed=2)
        assert abs(est.mean_risk - ref) <= 4 * est.std_error

    def test_prediction_is_unbiased_inside_clip(self):
        n = 400
        ts = TrainingSet(np.zeros((n, 1)), np.full(n, 0.3))
        ens = Ensemble(M3, ts, RateSchedule(0.1, 0.0, 1.0, 0.0))
        preds = np.array([ens.predict(0.0, keyed_rng(4, j)) for j in range(2000)])
        assert np.all(np.abs(preds) <= 1.0)
        assert abs(preds.mean() - 0.3) <= 4 * preds.std(ddof=1) / math.sqrt(preds.size)


class TestModelIV:
    def test_requires_rule_and_transfer(self):
        inst = shipped_instance()
        ts = inst.original.sample(10, 0)
        with pytest.raises(UsageError):
            Ensemble(M4, ts, RateSchedule(0.5, 0.25))
        with pytest.raises(UsageError):
            Ensemble(M4, ts, rule=inst.rule)

    def test_constant_transfer_risk_is_exact(self):
        inst = shipped_instance()
        est = estimate_risk(
            M4, inst.original, None, 50, trials=5, queries=40, seed=1,
            rule=inst.rule, transfer=constant_transfer(0.5),
        )
        assert est.mean_risk == pytest.approx(0.25, abs=1e-15)
        assert est.gap == pytest.approx(0.25, abs=1e-15)


class TestRiskEstimation:
    def test_thread_count_does_not_change_results(self):
        dist = dd.shipped("classification_1d_pm")
        s = RateSchedule(0.5, 0.25)
        a = estimate_risk(M2, dist, s, 300, trials=6, queries=50, seed=9, threads=1)
        b = estimate_risk(M2, dist, s, 300, trials=6, queries=50, seed=9, threads=4)
        assert a == b

    def test_sweep_rows_follow_n_list(self):
        dist = dd.shipped("classification_1d")
        rows = convergence_sweep(M1, dist, RateSchedule(0.5, 0.25), [10, 40], trials=3, queries=20)
        assert [r.n for r in rows] == [10, 40]
        assert all(r.bayes_risk == dist.bayes_risk() for r in rows)

    @pytest.mark.parametrize("bad", [[], [10, 10], [100, 10]])
    def test_sweep_rejects_bad_n_list(self, bad):
        with pytest.raises(UsageError):
            convergence_sweep(M1, dd.shipped("classification_1d"), RateSchedule(0.5, 0.25), bad)

    def test_label_space_mismatch(self):
        with pytest.raises(UsageError):
            estimate_risk(M1, dd.shipped("classification_1d_pm"), RateSchedule(0.5, 0.25), 10)

    def test_trials_must_be_positive(self):
        with pytest.raises(UsageError):
            estimate_risk(M1, dd.shipped("classification_1d"), RateSchedule(0.5, 0.25), 10, trials=0)


class TestMarginStats:
    @pytest.mark.parametrize("aggregate", [False, True])
    def test_within_four_standard_errors(self, aggregate):
        dist = dd.shipped("two_atom_pm")
        stats = margin_stats(dist, RateSchedule(0.5, 0.25), 0.0, 4, 50_000, seed=3, aggregate=aggregate)
        assert stats.m_within() and stats.sigma2_within()

    def test_needs_pm_encoding(self):
        with pytest.raises(UsageError):
            margin_stats(dd.shipped("classification_1d"), RateSchedule(0.5, 0.25), 0.5, 4, 100, 0)


class TestBinomialReciprocal:
    @pytest.mark.parametrize("n", [1, 2, 7, 25])
    @pytest.mark.parametrize("p", [Fraction(1, 20), Fraction(1, 3), Fraction(1)])
    def test_exact_fraction_oracle(self, n, p):
        exact = sum(
            Fraction(math.comb(n, k)) * p**k * (1 - p) ** (n - k) / k for k in range(1, n + 1)
        )
        lhs, rhs, ok = binomial_reciprocal_check(n, float(p))
        assert lhs == pytest.approx(float(exact), rel=1e-12)
        assert rhs == pytest.approx(float(Fraction(2) / ((n + 1) * p)), rel=1e-15)
        assert ok

    def test_rejects_bad_p(self):
        with pytest.raises(UsageError):
            binomial_reciprocal_check(5, 0.0)
