"""Fusion-center rules.

All rules depend on the responses only through the counts of ONE and ZERO
votes, so they are permutation invariant by construction. The ``*_counts``
helpers are the count-level cores used by the simulation loop; the public
``fuse_*`` functions wrap them for explicit response vectors.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Union

import numpy as np

from .agents import Response
from .errors import ConfigurationError, ProtocolError


@dataclass(frozen=True)
class FusionInput:
    """The ``n`` responses received for one query, as int8 codes."""

    responses: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.responses, dtype=np.int8).reshape(-1)
        if np.any((arr < Response.ABSTAIN) | (arr > Response.ONE)):
            raise ProtocolError("responses must be ABSTAIN, ZERO or ONE")
        object.__setattr__(self, "responses", arr)

    @classmethod
    def of(cls, responses: Union["FusionInput", Iterable]) -> "FusionInput":
        if isinstance(responses, FusionInput):
            return responses
        return cls(np.array([int(r) for r in responses], dtype=np.int8))

    @property
    def n(self) -> int:
        return self.responses.shape[0]

    @property
    def voters(self) -> np.ndarray:
        return np.flatnonzero(self.responses != Response.ABSTAIN)

    @property
    def ones(self) -> int:
        return int(np.count_nonzero(self.responses == Response.ONE))

    @property
    def zeros(self) -> int:
        return int(np.count_nonzero(self.responses == Response.ZERO))

    @property
    def abstentions(self) -> int:
        return int(np.count_nonzero(self.responses == Response.ABSTAIN))


def majority_with_abstention_counts(ones: int, zeros: int) -> int:
    # 1 iff ones >= |I_V| / 2; with no voters 0/0 := 0 < 1/2, so the label is 0
    voters = ones + zeros
    if voters == 0:
        return 0
    return 1 if 2 * ones >= voters else 0


def majority_pm_counts(ones: int, zeros: int) -> int:
    """+1 iff strictly more ONE than ZERO votes; ties go to -1."""
    return 1 if ones > zeros else -1


def regress_counts(ones: int, zeros: int, c: float) -> float:
    voters = ones + zeros
    if voters == 0:
        return -c
    return 2.0 * c * (ones / voters - 0.5)


def fuse_classify_abstain(responses) -> int:
    fi = FusionInput.of(responses)
    return majority_with_abstention_counts(fi.ones, fi.zeros)


def fuse_classify_coin(responses) -> int:
    fi = FusionInput.of(responses)
    if fi.abstentions:
        raise ProtocolError(f"{fi.abstentions} abstentions received by a one-bit majority rule")
    return majority_pm_counts(fi.ones, fi.zeros)


def fuse_regress_abstain(responses, c: float) -> float:
    """Shift and scale the average vote of the non-abstaining agents onto [-c, c].

    An empty voter set yields ``-c`` (the 0/0 = 0 convention applied to the
    average vote).
    """
    if not c > 0:
        raise ConfigurationError(f"clip level must be positive, got {c}")
    fi = FusionInput.of(responses)
    return regress_counts(fi.ones, fi.zeros, c)


@dataclass(frozen=True)
class MeanTransfer:
    """A fusion rule ``g(mean bit)`` with declared Lipschitz constant for ``g``.

    Depending on the bits only through their mean makes the rule permutation
    invariant, and a ``C``-Lipschitz ``g`` makes it ``C``-Lipschitz in the
    average Hamming distance.
    """

    name: str
    fn: Callable[[float], float]
    lipschitz: float

    def __call__(self, mean_bit):
        return self.fn(mean_bit)


def fuse_mean_lipschitz(responses, transfer: MeanTransfer) -> float:
    fi = FusionInput.of(responses)
    if fi.abstentions:
        raise ProtocolError("abstentions are not allowed in the one-bit regression model")
    if fi.n == 0:
        raise ProtocolError("no responses to fuse")
    return float(transfer(fi.ones / fi.n))


def linear_transfer(c: float) -> MeanTransfer:
    """``g(m) = 2c(m - 1/2)``, the full-vote analogue of the abstention rule."""
    return MeanTransfer(f"linear_c{c:g}", lambda m: 2.0 * c * (m - 0.5), 2.0 * c)


def constant_transfer(value: float, name: str | None = None) -> MeanTransfer:
    return MeanTransfer(name or f"constant_{value:g}", lambda m: value + 0.0 * m, 0.0)
