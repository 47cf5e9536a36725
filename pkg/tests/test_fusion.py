import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from distlearn.errors import ConfigurationError, ProtocolError
from distlearn.fusion import (
    FusionInput,
    MeanTransfer,
    constant_transfer,
    fuse_classify_abstain,
    fuse_classify_coin,
    fuse_mean_lipschitz,
    fuse_regress_abstain,
    linear_transfer,
)

A, Z, O = -1, 0, 1
votes = st.lists(st.sampled_from([A, Z, O]), max_size=60)
bits = st.lists(st.sampled_from([Z, O]), min_size=1, max_size=60)


def _count(responses, code):
    return sum(1 for r in responses if r == code)


class TestClassifyAbstain:
    def test_empty_voter_set_gives_zero(self):
        assert fuse_classify_abstain([]) == 0
        assert fuse_classify_abstain([A, A, A]) == 0

    def test_tie_goes_to_one(self):
        assert fuse_classify_abstain([O, Z, A]) == 1

    @given(votes)
    def test_against_count_oracle(self, r):
        ones, voters = _count(r, O), _count(r, O) + _count(r, Z)
        want = 1 if voters and ones >= voters / 2 else 0
        assert fuse_classify_abstain(r) == want

    @given(votes, st.randoms())
    def test_permutation_invariant(self, r, rnd):
        s = list(r)
        rnd.shuffle(s)
        assert fuse_classify_abstain(s) == fuse_classify_abstain(r)


class TestClassifyCoin:
    def test_tie_goes_to_minus_one(self):
        assert fuse_classify_coin([O, Z]) == -1
        assert fuse_classify_coin([O, O, Z]) == 1

    def test_abstention_is_protocol_error(self):
        with pytest.raises(ProtocolError):
            fuse_classify_coin([O, A])

    @given(bits)
    def test_against_count_oracle(self, r):
        assert fuse_classify_coin(r) == (1 if _count(r, O) > _count(r, Z) else -1)


class TestRegressAbstain:
    @given(votes, st.floats(1e-3, 1e3))
    def test_range(self, r, c):
        v = fuse_regress_abstain(r, c)
        assert -c <= v <= c

    def test_empty_voter_set_gives_minus_c(self):
        assert fuse_regress_abstain([], 2.5) == -2.5
        assert fuse_regress_abstain([A, A], 2.5) == -2.5

    def test_extremes_and_mean(self):
        assert fuse_regress_abstain([O, O, A], 3.0) == 3.0
        assert fuse_regress_abstain([Z, A], 3.0) == -3.0
        # 3 ones out of 4 voters: 2c(3/4 - 1/2)
        assert fuse_regress_abstain([O, O, O, Z, A], 2.0) == pytest.approx(1.0)

    def test_rejects_bad_c(self):
        with pytest.raises(ConfigurationError):
            fuse_regress_abstain([O], 0.0)


class TestMeanTransfer:
    def test_linear_values(self):
        g = linear_transfer(2.0)
        assert fuse_mean_lipschitz([O, O, O, Z], g) == pytest.approx(1.0)
        assert g.lipschitz == 4.0

    @given(st.floats(0, 1), st.floats(0, 1), st.floats(0.1, 10))
    def test_linear_is_lipschitz(self, a, b, c):
        g = linear_transfer(c)
        assert abs(g(a) - g(b)) <= g.lipschitz * abs(a - b) + 1e-12

    @given(bits, bits)
    def test_lipschitz_in_hamming_distance(self, r, s):
        n = min(len(r), len(s))
        r, s = r[:n], s[:n]
        g = linear_transfer(1.5)
        hamming = sum(a != b for a, b in zip(r, s)) / n
        assert abs(fuse_mean_lipschitz(r, g) - fuse_mean_lipschitz(s, g)) <= g.lipschitz * hamming + 1e-12

    def test_constant(self):
        g = constant_transfer(0.25)
        assert fuse_mean_lipschitz([O, Z, Z], g) == 0.25
        assert g.lipschitz == 0.0

    def test_rejects_abstention_and_empty(self):
        g = MeanTransfer("id", lambda m: m, 1.0)
        with pytest.raises(ProtocolError):
            fuse_mean_lipschitz([O, A], g)
        with pytest.raises(ProtocolError):
            fuse_mean_lipschitz([], g)


class TestFusionInput:
    def test_counts(self):
        fi = FusionInput.of([O, Z, A, O])
        assert (fi.n, fi.ones, fi.zeros, fi.abstentions) == (4, 2, 1, 1)
        np.testing.assert_array_equal(fi.voters, [0, 1, 3])

    def test_rejects_unknown_code(self):
        with pytest.raises(ProtocolError):
            FusionInput.of([0, 2])
