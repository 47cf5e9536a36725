"""Synthetic joint laws of (X, Y) with exact access to the regression function.

Three families are provided, all chosen so that the minimal risk is computable:

* :class:`DiscreteAtoms` -- finitely many atoms in R^d, each with its own label law.
* :class:`PiecewiseLinearEta1D` -- uniform X on ``[a, b]`` and binary labels whose
  conditional mean is piecewise linear.
* :class:`RegressionAdditiveNoise1D` -- uniform X on ``[a, b]``, ``Y = eta(X) + noise``.

Distributions are immutable. Sampling takes an explicit stream so that a training
set is a pure function of its key.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Sequence

import numpy as np
from scipy import integrate

from .errors import ConfigurationError, UsageError
from .rng import Stream, as_generator

_SUM_TOL = 1e-12
_QUAD_TOL = 1e-12


class LabelSpace(str, Enum):
    BINARY01 = "Binary01"
    BINARYPM = "BinaryPM"
    REAL = "Real"

    @property
    def is_binary(self) -> bool:
        return self is not LabelSpace.REAL

    @property
    def labels(self) -> tuple[float, float]:
        """(negative, positive) labels of a binary space."""
        if self is LabelSpace.BINARY01:
            return (0.0, 1.0)
        if self is LabelSpace.BINARYPM:
            return (-1.0, 1.0)
        raise UsageError("real-valued label space has no binary labels")


def _as_points(x: Any, d: int) -> tuple[np.ndarray, bool]:
    """Coerce ``x`` to an ``(m, d)`` array; the flag says whether it was one point."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        if d != 1:
            raise UsageError(f"scalar query given for a {d}-dimensional distribution")
        return arr.reshape(1, 1), True
    if arr.ndim == 1:
        if d == 1:
            return arr.reshape(-1, 1), False
        if arr.shape[0] != d:
            raise UsageError(f"point has dimension {arr.shape[0]}, expected {d}")
        return arr.reshape(1, d), True
    if arr.ndim == 2 and arr.shape[1] == d:
        return arr, False
    raise UsageError(f"cannot interpret array of shape {arr.shape} as {d}-dimensional points")


@dataclass(frozen=True)
class LabeledExample:
    x: np.ndarray
    y: float


@dataclass(frozen=True)
class TrainingSet:
    """``n`` i.i.d. labeled examples, stored column-wise.

    ``xs`` has shape ``(n, d)`` and ``ys`` shape ``(n,)``.
    """

    xs: np.ndarray
    ys: np.ndarray
    seed_key: tuple | None = None

    def __post_init__(self):
        if self.xs.ndim != 2 or self.ys.shape != (self.xs.shape[0],):
            raise ConfigurationError("training arrays have inconsistent shapes")

    @property
    def n(self) -> int:
        return self.ys.shape[0]

    @property
    def dim(self) -> int:
        return self.xs.shape[1]

    @property
    def examples(self) -> list[LabeledExample]:
        return [LabeledExample(self.xs[i].copy(), float(self.ys[i])) for i in range(self.n)]

    def __len__(self) -> int:
        return self.n

    @classmethod
    def from_examples(cls, examples: Sequence[tuple[Any, float]]) -> "TrainingSet":
        xs = np.array([np.atleast_1d(np.asarray(x, dtype=float)) for x, _ in examples])
        ys = np.array([float(y) for _, y in examples])
        return cls(xs.reshape(len(examples), -1), ys)


class PiecewiseLinear:
    """A piecewise-linear function given by knots with non-decreasing abscissae.

    Two knots may share an abscissa to encode a jump; the function is
    right-continuous there.
    """

    def __init__(self, knots: Sequence[tuple[float, float]]):
        if len(knots) < 2:
            raise ConfigurationError("need at least two knots")
        xs = np.array([float(k[0]) for k in knots])
        ys = np.array([float(k[1]) for k in knots])
        if np.any(np.diff(xs) < 0):
            raise ConfigurationError("knot abscissae must be non-decreasing")
        if np.any((xs[2:] == xs[:-2])):
            raise ConfigurationError("at most two knots may share an abscissa")
        if xs[-1] <= xs[0]:
            raise ConfigurationError("knots must span a non-empty interval")
        self.xs = xs
        self.ys = ys

    def __call__(self, x: Any) -> np.ndarray:
        x = np.clip(np.asarray(x, dtype=float), self.xs[0], self.xs[-1])
        idx = np.searchsorted(self.xs, x, side="right") - 1
        idx = np.clip(idx, 0, len(self.xs) - 2)
        x0, x1 = self.xs[idx], self.xs[idx + 1]
        y0, y1 = self.ys[idx], self.ys[idx + 1]
        width = x1 - x0
        with np.errstate(invalid="ignore", divide="ignore"):
            t = np.where(width > 0, (x - x0) / np.where(width > 0, width, 1.0), 1.0)
        return y0 + t * (y1 - y0)

    def segments(self):
        """Yield ``(x0, x1, y0, y1)`` for each segment of positive width."""
        for i in range(len(self.xs) - 1):
            if self.xs[i + 1] > self.xs[i]:
                yield self.xs[i], self.xs[i + 1], self.ys[i], self.ys[i + 1]

    def integral(self, lo: float, hi: float) -> float:
        """Exact integral over ``[lo, hi]`` (trapezoid rule on the refined knots)."""
        if hi <= lo:
            return 0.0
        total = 0.0
        for x0, x1, y0, y1 in self.segments():
            a, b = max(lo, x0), min(hi, x1)
            if b <= a:
                continue
            ya = y0 + (a - x0) / (x1 - x0) * (y1 - y0)
            yb = y0 + (b - x0) / (x1 - x0) * (y1 - y0)
            total += 0.5 * (ya + yb) * (b - a)
        return total

    def to_list(self) -> list[list[float]]:
        return [[float(a), float(b)] for a, b in zip(self.xs, self.ys)]


@dataclass(frozen=True)
class NoiseLaw:
    """Zero-mean additive noise: ``gaussian`` (variance), ``uniform`` (half-width)
    or ``two_point`` (magnitude)."""

    kind: str
    param: float

    def __post_init__(self):
        if self.kind not in ("gaussian", "uniform", "two_point"):
            raise ConfigurationError(f"unknown noise kind {self.kind!r}")
        if not (self.param >= 0 and math.isfinite(self.param)):
            raise ConfigurationError("noise parameter must be finite and non-negative")

    @property
    def variance(self) -> float:
        if self.kind == "gaussian":
            return self.param
        if self.kind == "uniform":
            return self.param**2 / 3.0
        return self.param**2

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.kind == "gaussian":
            return rng.normal(0.0, math.sqrt(self.param), size)
        if self.kind == "uniform":
            return rng.uniform(-self.param, self.param, size)
        return np.where(rng.random(size) < 0.5, -self.param, self.param)


class SyntheticDistribution:
    """Interface shared by the shipped families."""

    family: str
    label_space: LabelSpace
    dim: int

    def sample(self, n: int, stream: Stream) -> TrainingSet:
        if n < 1:
            raise UsageError(f"n must be at least 1, got {n}")
        rng = as_generator(stream)
        xs, ys = self._draw(n, rng)
        key = stream if isinstance(stream, tuple) else None
        return TrainingSet(xs, ys, key)

    def _draw(self, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def regression_fn(self, x: Any):
        pts, single = _as_points(x, self.dim)
        out = self._eta(pts)
        return float(out[0]) if single else out

    def _eta(self, pts: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def positive_prob(self, x: Any):
        """P{Y = positive label | X = x} for binary label spaces."""
        eta = self.regression_fn(x)
        if self.label_space is LabelSpace.BINARY01:
            return eta
        if self.label_space is LabelSpace.BINARYPM:
            return 0.5 * (1.0 + eta)
        raise UsageError("positive_prob needs a binary label space")

    def bayes_classifier(self, x: Any):
        if not self.label_space.is_binary:
            raise UsageError("bayes_classifier needs a binary label space")
        neg, pos = self.label_space.labels
        threshold = 0.5 if self.label_space is LabelSpace.BINARY01 else 0.0
        eta = self.regression_fn(x)
        out = np.where(np.asarray(eta) >= threshold, pos, neg)
        return float(out) if out.ndim == 0 else out

    def bayes_risk(self) -> float:
        raise NotImplementedError

    def ball_mass(self, x: Any, r: float) -> float:
        """P{X in closed ball of radius r around x}."""
        raise NotImplementedError

    def ball_mean_eta(self, x: Any, r: float) -> float:
        """E{eta(X) | X in ball}; 0 when the ball carries no mass."""
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


def _check_label(y: float, space: LabelSpace) -> None:
    if space is LabelSpace.BINARY01 and y not in (0.0, 1.0):
        raise ConfigurationError(f"label {y} is not in {{0, 1}}")
    if space is LabelSpace.BINARYPM and y not in (-1.0, 1.0):
        raise ConfigurationError(f"label {y} is not in {{-1, +1}}")


@dataclass(frozen=True)
class Atom:
    x: tuple[float, ...]
    mass: float
    label_law: tuple[tuple[float, float], ...]

    @property
    def mean(self) -> float:
        return sum(y * p for y, p in self.label_law)

    @property
    def variance(self) -> float:
        m = self.mean
        return sum(p * (y - m) ** 2 for y, p in self.label_law)

    def prob(self, label: float) -> float:
        return sum(p for y, p in self.label_law if y == label)


@dataclass(frozen=True)
class DiscreteAtoms(SyntheticDistribution):
    atoms: tuple[Atom, ...]
    label_space: LabelSpace = LabelSpace.REAL
    family: str = field(default="DiscreteAtoms", init=False)

    def __post_init__(self):
        if not self.atoms:
            raise ConfigurationError("DiscreteAtoms needs at least one atom")
        dims = {len(a.x) for a in self.atoms}
        if len(dims) != 1:
            raise ConfigurationError("all atoms must share one dimension")
        masses = [a.mass for a in self.atoms]
        if any(m < 0 for m in masses) or abs(sum(masses) - 1.0) > _SUM_TOL:
            raise ConfigurationError(f"atom masses must be non-negative and sum to 1, got {sum(masses)!r}")
        for a in self.atoms:
            probs = [p for _, p in a.label_law]
            if not probs or any(p < 0 for p in probs) or abs(sum(probs) - 1.0) > _SUM_TOL:
                raise ConfigurationError(f"label law at {a.x} must be a probability vector")
            for y, _ in a.label_law:
                _check_label(y, self.label_space)

    @classmethod
    def build(cls, atoms, label_space=LabelSpace.REAL) -> "DiscreteAtoms":
        """Build from plain ``(x, mass, [(y, p), ...])`` triples."""
        built = tuple(
            Atom(
                tuple(float(v) for v in np.atleast_1d(x)),
                float(mass),
                tuple((float(y), float(p)) for y, p in law),
            )
            for x, mass, law in atoms
        )
        return cls(built, LabelSpace(label_space))

    @property
    def dim(self) -> int:
        return len(self.atoms[0].x)

    @property
    def points(self) -> np.ndarray:
        return np.array([a.x for a in self.atoms], dtype=float)

    def _nearest(self, pts: np.ndarray) -> np.ndarray:
        d2 = ((pts[:, None, :] - self.points[None, :, :]) ** 2).sum(axis=2)
        return np.argmin(d2, axis=1)

    def _eta(self, pts):
        means = np.array([a.mean for a in self.atoms])
        return means[self._nearest(pts)]

    def _draw(self, n, rng):
        masses = np.array([a.mass for a in self.atoms])
        cdf = np.cumsum(masses)
        cdf[-1] = 1.0
        idx = np.searchsorted(cdf, rng.random(n), side="right")
        u = rng.random(n)
        ys = np.empty(n)
        for k, atom in enumerate(self.atoms):
            sel = idx == k
            if not sel.any():
                continue
            labels = np.array([y for y, _ in atom.label_law])
            lcdf = np.cumsum([p for _, p in atom.label_law])
            lcdf[-1] = 1.0
            ys[sel] = labels[np.searchsorted(lcdf, u[sel], side="right")]
        return self.points[idx], ys

    def bayes_risk(self) -> float:
        if self.label_space.is_binary:
            neg, pos = self.label_space.labels
            return float(sum(a.mass * min(a.prob(pos), a.prob(neg)) for a in self.atoms))
        return float(sum(a.mass * a.variance for a in self.atoms))

    def _in_ball(self, x, r) -> np.ndarray:
        pts, _ = _as_points(x, self.dim)
        dist = np.sqrt(((self.points - pts[0]) ** 2).sum(axis=1))
        return dist <= r

    def ball_mass(self, x, r):
        inside = self._in_ball(x, r)
        return float(sum(a.mass for a, ok in zip(self.atoms, inside) if ok))

    def ball_mean_eta(self, x, r):
        inside = self._in_ball(x, r)
        mass = sum(a.mass for a, ok in zip(self.atoms, inside) if ok)
        if mass == 0:
            return 0.0
        return float(sum(a.mass * a.mean for a, ok in zip(self.atoms, inside) if ok) / mass)

    def to_dict(self):
        return {
            "family": self.family,
            "label_space": self.label_space.value,
            "atoms": [
                {"x": list(a.x), "mass": a.mass, "labels": [list(t) for t in a.label_law]}
                for a in self.atoms
            ],
        }


class _Uniform1D(SyntheticDistribution):
    support: tuple[float, float]
    eta: PiecewiseLinear

    dim = 1

    def _check_support(self):
        a, b = self.support
        if not b > a:
            raise ConfigurationError("support must be an interval [a, b] with a < b")
        if self.eta.xs[0] != a or self.eta.xs[-1] != b:
            raise ConfigurationError("eta knots must start at a and end at b")

    def _eta(self, pts):
        return self.eta(pts[:, 0])

    def _clamped_interval(self, x, r) -> tuple[float, float]:
        pts, _ = _as_points(x, 1)
        c = float(pts[0, 0])
        a, b = self.support
        return max(a, c - r), min(b, c + r)

    def ball_mass(self, x, r):
        lo, hi = self._clamped_interval(x, r)
        a, b = self.support
        return max(0.0, hi - lo) / (b - a)

    def ball_mean_eta(self, x, r):
        lo, hi = self._clamped_interval(x, r)
        if hi <= lo:
            return float(self.eta(np.clip(lo, *self.support)))
        return self.eta.integral(lo, hi) / (hi - lo)

    def _draw_x(self, n, rng):
        a, b = self.support
        return a + (b - a) * rng.random(n)


@dataclass(frozen=True)
class PiecewiseLinearEta1D(_Uniform1D):
    """Binary labels with uniform X on ``support`` and piecewise-linear eta.

    ``eta`` is the regression function in the label encoding: P{Y=1|x} for
    ``Binary01`` and P{Y=+1|x} - P{Y=-1|x} for ``BinaryPM``.
    """

    support: tuple[float, float]
    eta: PiecewiseLinear
    label_space: LabelSpace = LabelSpace.BINARY01
    family: str = field(default="PiecewiseLinearEta1D", init=False)

    def __post_init__(self):
        if not self.label_space.is_binary:
            raise ConfigurationError("PiecewiseLinearEta1D needs a binary label space")
        self._check_support()
        lo, hi = (0.0, 1.0) if self.label_space is LabelSpace.BINARY01 else (-1.0, 1.0)
        if np.any(self.eta.ys < lo) or np.any(self.eta.ys > hi):
            raise ConfigurationError(f"eta knots must lie in [{lo}, {hi}]")

    @classmethod
    def build(cls, support, knots, label_space="Binary01") -> "PiecewiseLinearEta1D":
        return cls(tuple(float(s) for s in support), PiecewiseLinear(knots), LabelSpace(label_space))

    def recode(self, label_space: LabelSpace | str) -> "PiecewiseLinearEta1D":
        """The same law with labels re-encoded (0 <-> -1, 1 <-> +1)."""
        target = LabelSpace(label_space)
        if target is self.label_space:
            return self
        ys = self.eta.ys
        ys = 2.0 * ys - 1.0 if target is LabelSpace.BINARYPM else 0.5 * (ys + 1.0)
        return PiecewiseLinearEta1D(self.support, PiecewiseLinear(list(zip(self.eta.xs, ys))), target)

    def _draw(self, n, rng):
        x = self._draw_x(n, rng)
        u = rng.random(n)
        neg, pos = self.label_space.labels
        p = self.positive_prob(x)
        return x.reshape(-1, 1), np.where(u < p, pos, neg)

    def bayes_risk(self) -> float:
        a, b = self.support
        pos = (lambda e: e) if self.label_space is LabelSpace.BINARY01 else (lambda e: 0.5 * (1 + e))
        total = 0.0
        for x0, x1, y0, y1 in self.eta.segments():
            p0, p1 = pos(y0), pos(y1)
            cuts = [x0, x1]
            if (p0 - 0.5) * (p1 - 0.5) < 0:
                cuts.insert(1, x0 + (0.5 - p0) / (p1 - p0) * (x1 - x0))

            def integrand(x, x0=x0, x1=x1, p0=p0, p1=p1):
                p = p0 + (x - x0) / (x1 - x0) * (p1 - p0)
                return min(p, 1.0 - p)

            for lo, hi in zip(cuts[:-1], cuts[1:]):
                val, _ = integrate.quad(integrand, lo, hi, epsabs=_QUAD_TOL, epsrel=_QUAD_TOL)
                total += val
        return total / (b - a)

    def to_dict(self):
        return {
            "family": self.family,
            "label_space": self.label_space.value,
            "support": list(self.support),
            "eta_knots": self.eta.to_list(),
        }


@dataclass(frozen=True)
class RegressionAdditiveNoise1D(_Uniform1D):
    support: tuple[float, float]
    eta: PiecewiseLinear
    noise: NoiseLaw
    label_space: LabelSpace = field(default=LabelSpace.REAL, init=False)
    family: str = field(default="RegressionAdditiveNoise1D", init=False)

    def __post_init__(self):
        self._check_support()

    @classmethod
    def build(cls, support, knots, noise: tuple[str, float]) -> "RegressionAdditiveNoise1D":
        return cls(tuple(float(s) for s in support), PiecewiseLinear(knots), NoiseLaw(*noise))

    def _draw(self, n, rng):
        x = self._draw_x(n, rng)
        return x.reshape(-1, 1), self.eta(x) + self.noise.sample(rng, n)

    def bayes_risk(self) -> float:
        return self.noise.variance

    def to_dict(self):
        return {
            "family": self.family,
            "label_space": self.label_space.value,
            "support": list(self.support),
            "eta_knots": self.eta.to_list(),
            "noise": {"kind": self.noise.kind, "param": self.noise.param},
        }


def from_dict(spec: dict) -> SyntheticDistribution:
    """Build a distribution from its manifest representation.

    ``{"shipped": name}`` refers to one of :data:`SHIPPED`; otherwise ``family``
    selects the constructor.
    """
    if "shipped" in spec:
        return shipped(spec["shipped"])
    family = spec.get("family")
    try:
        if family == "DiscreteAtoms":
            atoms = [(a["x"], a["mass"], a["labels"]) for a in spec["atoms"]]
            return DiscreteAtoms.build(atoms, spec.get("label_space", "Real"))
        if family == "PiecewiseLinearEta1D":
            return PiecewiseLinearEta1D.build(
                spec["support"], spec["eta_knots"], spec.get("label_space", "Binary01")
            )
        if family == "RegressionAdditiveNoise1D":
            noise = spec["noise"]
            return RegressionAdditiveNoise1D.build(
                spec["support"], spec["eta_knots"], (noise["kind"], float(noise["param"]))
            )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigurationError):
            raise
        raise ConfigurationError(f"malformed {family} distribution: {exc}") from exc
    raise ConfigurationError(f"unknown distribution family {family!r}")


# Shipped examples. P{Y=1|x} for the classification law crosses 1/2 at least
# 0.07 away from any knot so that small balls carry no smoothing bias there.
_CLASSIFICATION_KNOTS = [
    (0.0, 0.05), (0.25, 0.05), (0.4, 0.9), (0.65, 0.9), (0.8, 0.15), (1.0, 0.15),
]
_REGRESSION_KNOTS = [(0.0, -0.5), (0.3, 0.5), (0.6, 0.0), (1.0, 0.4)]


def _shipped_table():
    return {
        "classification_1d": lambda: PiecewiseLinearEta1D.build(
            (0.0, 1.0), _CLASSIFICATION_KNOTS, "Binary01"
        ),
        "classification_1d_pm": lambda: PiecewiseLinearEta1D.build(
            (0.0, 1.0), _CLASSIFICATION_KNOTS, "Binary01"
        ).recode("BinaryPM"),
        "deterministic_1d": lambda: PiecewiseLinearEta1D.build(
            (0.0, 1.0), [(0.0, 0.0), (0.5, 0.0), (0.5, 1.0), (1.0, 1.0)], "Binary01"
        ),
        "regression_1d": lambda: RegressionAdditiveNoise1D.build(
            (0.0, 1.0), _REGRESSION_KNOTS, ("gaussian", 0.04)
        ),
        "two_atom_pm": lambda: DiscreteAtoms.build(
            [(0.0, 0.6, [(1.0, 0.85), (-1.0, 0.15)]), (0.3, 0.4, [(1.0, 0.3), (-1.0, 0.7)])],
            "BinaryPM",
        ),
    }


SHIPPED = tuple(_shipped_table())


def shipped(name: str) -> SyntheticDistribution:
    table = _shipped_table()
    if name not in table:
        raise ConfigurationError(f"unknown shipped distribution {name!r}; choose from {SHIPPED}")
    return table[name]()


# functional aliases


def sample_training(dist: SyntheticDistribution, n: int, stream: Stream) -> TrainingSet:
    return dist.sample(n, stream)


def regression_fn(dist: SyntheticDistribution, x):
    return dist.regression_fn(x)


def bayes_classifier(dist: SyntheticDistribution, x):
    return dist.bayes_classifier(x)


def bayes_risk(dist: SyntheticDistribution) -> float:
    return dist.bayes_risk()
