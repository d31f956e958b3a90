"""Initial conditions: per-location fractions and the initial infection-age law.

The initially infected at ``x`` have ages distributed as ``ages`` at every
location, so ``I(0, da, x) = I(0, x) * ages(da)``.  Fractions are multiplied by
the population density, which keeps ``S + I + R = B`` cell by cell.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import InfeasibleInitialCondition
from .kernel import cell_average

__all__ = [
    "ConstantProfile",
    "BumpProfile",
    "TwoBlockProfile",
    "AgeAtoms",
    "UniformAges",
    "TriangularAges",
    "InitialCondition",
    "largest_remainder",
]


@dataclass(frozen=True)
class ConstantProfile:
    value: float

    def __call__(self, x):
        return np.full(np.shape(x), float(self.value))


@dataclass(frozen=True)
class BumpProfile:
    """``base + height * exp(-((x - center) / width)^2)``."""

    center: float = 0.5
    width: float = 0.1
    height: float = 0.05
    base: float = 0.0

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return self.base + self.height * np.exp(-(((x - self.center) / self.width) ** 2))


@dataclass(frozen=True)
class TwoBlockProfile:
    split: float = 0.5
    left: float = 0.05
    right: float = 0.0

    def __call__(self, x):
        return np.where(np.asarray(x) < self.split, self.left, self.right)


# --------------------------------------------------------------------------
# initial infection ages


@dataclass(frozen=True)
class AgeAtoms:
    """Finitely many ages with probability weights (normalized on construction)."""

    ages: tuple = (0.0,)
    weights: tuple = (1.0,)

    def __post_init__(self):
        a = np.asarray(self.ages, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if a.shape != w.shape or a.size == 0 or np.any(a < 0) or np.any(w < 0) or w.sum() <= 0:
            raise InfeasibleInitialCondition("age atoms need nonnegative ages and weights")
        object.__setattr__(self, "ages", tuple(map(float, a)))
        object.__setattr__(self, "weights", tuple(map(float, w / w.sum())))

    has_density = False

    @property
    def a_max(self):
        return max(self.ages)

    def cdf(self, a):
        a = np.asarray(a, dtype=float)
        out = sum(w * (a >= x) for x, w in zip(self.ages, self.weights))
        return out + 0.0 * a

    def sample(self, rng, size=None):
        return rng.choice(np.asarray(self.ages), size=size, p=np.asarray(self.weights))


@dataclass(frozen=True)
class UniformAges:
    a_max: float

    has_density = True

    def pdf(self, a):
        a = np.asarray(a, dtype=float)
        return np.where((a >= 0) & (a <= self.a_max), 1.0 / self.a_max, 0.0)

    def cdf(self, a):
        return np.clip(np.asarray(a, dtype=float) / self.a_max, 0.0, 1.0)

    def sample(self, rng, size=None):
        return rng.uniform(0.0, self.a_max, size)


@dataclass(frozen=True)
class TriangularAges:
    """Decreasing density ``2 (1 - a / a_max) / a_max`` on ``[0, a_max]``."""

    a_max: float

    has_density = True

    def pdf(self, a):
        a = np.asarray(a, dtype=float)
        return np.where((a >= 0) & (a <= self.a_max), 2.0 * (1.0 - a / self.a_max) / self.a_max, 0.0)

    def cdf(self, a):
        x = np.clip(np.asarray(a, dtype=float) / self.a_max, 0.0, 1.0)
        return 1.0 - (1.0 - x) ** 2

    def sample(self, rng, size=None):
        return self.a_max * (1.0 - np.sqrt(rng.random(size)))


# --------------------------------------------------------------------------


def _zero(x):
    return np.zeros(np.shape(x))


@dataclass(frozen=True)
class InitialCondition:
    """Fractions of the local population infected and recovered at time 0."""

    infected: Callable
    ages: object = field(default_factory=AgeAtoms)
    recovered: Callable = _zero

    @property
    def a_bar(self):
        return float(self.ages.a_max)

    def fractions(self, K):
        """Cell averages ``(s, i, r)`` of the three fractions."""
        i = cell_average(self.infected, K)
        r = cell_average(self.recovered, K)
        if np.any(i < -1e-12) or np.any(r < -1e-12) or np.any(i + r > 1 + 1e-12):
            raise InfeasibleInitialCondition("fractions must be nonnegative with infected + recovered <= 1")
        i, r = np.clip(i, 0, 1), np.clip(r, 0, 1)
        return 1.0 - i - r, i, r

    def cell_values(self, B):
        """Scaled densities ``S(0), I(0), R(0)`` on cells with density ``B``."""
        s, i, r = self.fractions(len(B))
        return B * s, B * i, B * r

    def validate(self):
        if not np.isfinite(self.a_bar) or self.a_bar < 0:
            raise InfeasibleInitialCondition("initial ages need a finite bound a_bar")


def largest_remainder(weights, total):
    """Integers proportional to ``weights`` summing exactly to ``total``."""
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0) or w.sum() <= 0:
        if total == 0:
            return np.zeros(w.shape, dtype=np.int64)
        raise InfeasibleInitialCondition("weights must be nonnegative with positive sum")
    exact = w / w.sum() * total
    base = np.floor(exact).astype(np.int64)
    short = int(total - base.sum())
    if short:
        # stable sort so ties resolve by index
        order = np.argsort(-(exact - base), kind="stable")
        base[order[:short]] += 1
    return base
