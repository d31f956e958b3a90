"""Random infectivity functions of infection age.

An infected individual carries a random cadlag function ``lambda(age)`` that is
piecewise continuous on ``[zeta^{l-1}, zeta^l)`` for ``l = 1..kappa``, bounded by
``lambda_star`` and zero from the duration ``eta`` onwards.  Three law kinds are
provided:

* :class:`ConstantUntilDeath` -- ``c * 1{age < eta}``
* :class:`DeterministicShape` -- ``shape(age) * 1{age < eta}``
* :class:`PiecewiseRandom` -- ``kappa`` random pieces on random stages

Duration laws (:class:`Exponential`, :class:`Deterministic`, :class:`GammaDuration`,
:class:`WeibullDuration`) sample with numpy's ``Generator`` directly; scipy's
``rvs`` is too slow for per-individual draws inside the event loop.
"""
from __future__ import annotations

import csv
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import special

from .errors import EstimationBudgetExceeded, InfeasibleInitialCondition, NotApplicable

__all__ = [
    "Exponential",
    "Deterministic",
    "GammaDuration",
    "WeibullDuration",
    "Constant",
    "Linear",
    "FixedPiece",
    "UniformLevelPiece",
    "IndependentStages",
    "InfectivityPath",
    "ConstantUntilDeath",
    "DeterministicShape",
    "PiecewiseRandom",
    "MeanInfectivity",
    "sample_path",
    "sample_path_given_age",
    "mean_infectivity",
    "remaining_duration_survival",
]


# --------------------------------------------------------------------------
# duration laws


class _Duration:
    """Common interface for the law of the infected period ``eta``."""

    atoms: tuple = ()

    def cdf(self, t):
        raise NotImplementedError

    def sf(self, t):
        return 1.0 - self.cdf(t)

    def left_sf(self, t):
        """``F^c(t-)``; equals ``sf`` away from atoms."""
        return self.sf(t)

    def pdf(self, t):
        raise NotImplementedError

    def hazard(self, t):
        t = np.asarray(t, dtype=float)
        sf = self.sf(t)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(sf > 0, self.pdf(t) / np.where(sf > 0, sf, 1.0), 0.0)
        return out if out.ndim else float(out)

    def sample(self, rng, size=None):
        raise NotImplementedError

    @property
    def absolutely_continuous(self):
        return not self.atoms


@dataclass(frozen=True)
class Exponential(_Duration):
    rate: float

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError("rate must be positive")

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        out = np.where(t > 0, -np.expm1(-self.rate * np.maximum(t, 0.0)), 0.0)
        return out if out.ndim else float(out)

    def sf(self, t):
        t = np.asarray(t, dtype=float)
        out = np.exp(-self.rate * np.maximum(t, 0.0))
        return out if out.ndim else float(out)

    def pdf(self, t):
        t = np.asarray(t, dtype=float)
        out = np.where(t >= 0, self.rate * np.exp(-self.rate * np.maximum(t, 0.0)), 0.0)
        return out if out.ndim else float(out)

    def hazard(self, t):
        t = np.asarray(t, dtype=float)
        out = np.where(t >= 0, self.rate, 0.0)
        return out if out.ndim else float(out)

    def sample(self, rng, size=None):
        return rng.exponential(1.0 / self.rate, size)

    @property
    def mean(self):
        return 1.0 / self.rate

    @property
    def support_max(self):
        return np.inf


@dataclass(frozen=True)
class Deterministic(_Duration):
    """Every infected period equals ``value`` (a single atom of mass one)."""

    value: float

    def __post_init__(self):
        if not self.value > 0:
            raise ValueError("value must be positive")

    @property
    def atoms(self):
        return ((float(self.value), 1.0),)

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        out = (t >= self.value).astype(float)
        return out if out.ndim else float(out)

    def left_sf(self, t):
        t = np.asarray(t, dtype=float)
        out = (t <= self.value).astype(float)
        return out if out.ndim else float(out)

    def pdf(self, t):
        raise NotApplicable("deterministic durations have no density")

    def hazard(self, t):
        raise NotApplicable("deterministic durations have no hazard rate")

    def sample(self, rng, size=None):
        if size is None:
            return float(self.value)
        return np.full(size, float(self.value))

    @property
    def mean(self):
        return float(self.value)

    @property
    def support_max(self):
        return float(self.value)


@dataclass(frozen=True)
class GammaDuration(_Duration):
    shape: float
    scale: float

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        out = special.gammainc(self.shape, np.maximum(t, 0.0) / self.scale)
        return out if out.ndim else float(out)

    def sf(self, t):
        t = np.asarray(t, dtype=float)
        out = special.gammaincc(self.shape, np.maximum(t, 0.0) / self.scale)
        return out if out.ndim else float(out)

    def pdf(self, t):
        t = np.asarray(t, dtype=float)
        x = np.maximum(t, 0.0) / self.scale
        with np.errstate(divide="ignore"):
            logp = (self.shape - 1) * np.log(x) - x - special.gammaln(self.shape)
        out = np.where(t > 0, np.exp(logp) / self.scale, 0.0)
        return out if out.ndim else float(out)

    def sample(self, rng, size=None):
        return rng.gamma(self.shape, self.scale, size)

    @property
    def mean(self):
        return self.shape * self.scale

    @property
    def support_max(self):
        return np.inf


@dataclass(frozen=True)
class WeibullDuration(_Duration):
    shape: float
    scale: float

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        out = -np.expm1(-((np.maximum(t, 0.0) / self.scale) ** self.shape))
        return out if out.ndim else float(out)

    def sf(self, t):
        t = np.asarray(t, dtype=float)
        out = np.exp(-((np.maximum(t, 0.0) / self.scale) ** self.shape))
        return out if out.ndim else float(out)

    def pdf(self, t):
        t = np.asarray(t, dtype=float)
        x = np.maximum(t, 0.0) / self.scale
        out = np.where(t > 0, self.shape / self.scale * x ** (self.shape - 1) * np.exp(-(x**self.shape)), 0.0)
        return out if out.ndim else float(out)

    def sample(self, rng, size=None):
        return self.scale * rng.weibull(self.shape, size)

    @property
    def mean(self):
        return self.scale * special.gamma(1 + 1 / self.shape)

    @property
    def support_max(self):
        return np.inf


# --------------------------------------------------------------------------
# continuous pieces (also usable as deterministic shapes)


@dataclass(frozen=True)
class Constant:
    value: float

    @property
    def is_zero(self):
        return self.value == 0

    def __call__(self, t):
        if np.ndim(t):
            return np.full(np.shape(t), float(self.value))
        return float(self.value)


@dataclass(frozen=True)
class Linear:
    """``max(intercept + slope * age, 0)``."""

    intercept: float
    slope: float

    is_zero = False

    def __call__(self, t):
        return np.maximum(self.intercept + self.slope * np.asarray(t, dtype=float), 0.0) if np.ndim(t) else max(
            self.intercept + self.slope * t, 0.0
        )


@dataclass(frozen=True)
class FixedPiece:
    """Piece generator that always returns the same function."""

    piece: Callable

    def __call__(self, rng):
        return self.piece


@dataclass(frozen=True)
class UniformLevelPiece:
    """Random constant level drawn uniformly from ``[low, high]``."""

    low: float
    high: float

    def __call__(self, rng):
        return Constant(float(rng.uniform(self.low, self.high)))


@dataclass(frozen=True)
class IndependentStages:
    """Breakpoints ``zeta^l`` as partial sums of independent stage durations."""

    stages: tuple

    def __call__(self, rng):
        return np.cumsum([s.sample(rng) for s in self.stages])


# --------------------------------------------------------------------------
# paths


@dataclass(frozen=True)
class InfectivityPath:
    """One realization of the infectivity function.

    ``breakpoints`` holds ``zeta^0 = 0 <= ... <= zeta^kappa`` and ``pieces[l]`` is
    evaluated on ``[zeta^l, zeta^{l+1})``.  The path is right-continuous and is
    zero for negative ages and from ``eta`` onwards.
    """

    breakpoints: tuple
    pieces: tuple
    eta: float

    def __call__(self, t):
        if np.ndim(t):
            return self._evaluate_array(np.asarray(t, dtype=float))
        if t < 0 or t >= self.eta:
            return 0.0
        i = bisect_right(self.breakpoints, t) - 1
        if i >= len(self.pieces):
            return 0.0
        return float(self.pieces[i](t))

    def _evaluate_array(self, t):
        out = np.zeros(t.shape)
        idx = np.searchsorted(self.breakpoints, t, side="right") - 1
        live = (t >= 0) & (t < self.eta)
        for i, piece in enumerate(self.pieces):
            sel = live & (idx == i)
            if sel.any():
                out[sel] = piece(t[sel])
        return out

    @property
    def kappa(self):
        return len(self.pieces)


# --------------------------------------------------------------------------
# laws


@dataclass(frozen=True)
class ConstantUntilDeath:
    """``lambda(age) = c`` while infected; Markovian when the duration is exponential."""

    c: float
    duration: _Duration
    kind = "constant_until_death"

    def __post_init__(self):
        if not self.c >= 0:
            raise ValueError("c must be nonnegative")

    @property
    def lambda_star(self):
        return float(self.c) if self.c > 0 else 1.0

    @property
    def modulus(self):
        return _zero_modulus

    def sample_path(self, rng):
        eta = float(self.duration.sample(rng))
        return InfectivityPath((0.0, eta), (Constant(self.c),), eta)

    def mean(self, t):
        t = np.asarray(t, dtype=float)
        out = np.where(t >= 0, self.c * self.duration.sf(t), 0.0)
        return out if out.ndim else float(out)

    def variance(self, t):
        t = np.asarray(t, dtype=float)
        p = self.duration.sf(t)
        out = np.where(t >= 0, self.c**2 * p * (1 - p), 0.0)
        return out if out.ndim else float(out)

    def shape_at(self, t):
        return np.full(np.shape(t), float(self.c)) if np.ndim(t) else float(self.c)


@dataclass(frozen=True)
class DeterministicShape:
    """``lambda(age) = shape(age) * 1{age < eta}`` with a deterministic ``shape``.

    ``shape`` must be continuous, take values in ``[0, lambda_star]`` and be
    picklable if replications run in worker processes.
    """

    shape: Callable
    duration: _Duration
    lambda_star: float
    kind = "deterministic_shape"

    def __post_init__(self):
        if not self.lambda_star > 0:
            raise ValueError("lambda_star must be positive")

    @property
    def modulus(self):
        return None

    def sample_path(self, rng):
        eta = float(self.duration.sample(rng))
        return InfectivityPath((0.0, eta), (self.shape,), eta)

    def mean(self, t):
        t = np.asarray(t, dtype=float)
        out = np.where(t >= 0, np.asarray(self.shape(t)) * self.duration.sf(t), 0.0)
        return out if out.ndim else float(out)

    def variance(self, t):
        t = np.asarray(t, dtype=float)
        p = self.duration.sf(t)
        out = np.where(t >= 0, np.asarray(self.shape(t)) ** 2 * p * (1 - p), 0.0)
        return out if out.ndim else float(out)

    def shape_at(self, t):
        return self.shape(t)


@dataclass(frozen=True)
class PiecewiseRandom:
    """General law: ``kappa`` random continuous pieces on random stages.

    ``breakpoint_law(rng)`` returns ``zeta^1 <= ... <= zeta^kappa``; piece ``l`` is
    drawn by ``piece_generators[l](rng)``.  The duration ``eta`` is the right end of
    the last stage whose piece is not flagged ``is_zero``.
    """

    piece_generators: tuple
    breakpoint_law: Callable
    lambda_star: float
    modulus: Callable | None = None
    kind = "piecewise_random"

    def __post_init__(self):
        if not self.lambda_star > 0:
            raise ValueError("lambda_star must be positive")
        if len(self.piece_generators) < 1:
            raise ValueError("need at least one piece")

    @property
    def kappa(self):
        return len(self.piece_generators)

    def sample_path(self, rng):
        zeta = np.asarray(self.breakpoint_law(rng), dtype=float)
        if zeta.shape != (self.kappa,) or np.any(np.diff(zeta) < 0) or zeta[0] < 0:
            raise ValueError("breakpoint law must return kappa nondecreasing nonnegative times")
        pieces = tuple(g(rng) for g in self.piece_generators)
        eta = 0.0
        for l in range(self.kappa - 1, -1, -1):
            if not getattr(pieces[l], "is_zero", False):
                eta = float(zeta[l])
                break
        return InfectivityPath((0.0, *map(float, zeta)), pieces, eta)


def _zero_modulus(d):
    return 0.0 * np.asarray(d)


def sample_path(law, rng) -> InfectivityPath:
    return law.sample_path(rng)


def sample_path_given_age(law, age, rng, max_attempts=10**6) -> InfectivityPath:
    """Draw a path conditionally on ``eta > age`` by rejection.

    The remaining duration ``eta - age`` then has survival ``F^c(t+age)/F^c(age)``.
    """
    for _ in range(max_attempts):
        path = law.sample_path(rng)
        if path.eta > age:
            return path
    raise InfeasibleInitialCondition(f"no path with eta > {age} after {max_attempts} draws")


# --------------------------------------------------------------------------
# deterministic summaries


@dataclass(frozen=True)
class MeanInfectivity:
    """``lambda_bar``, ``v``, ``F`` and its survival functions for one law.

    All callables accept scalars or arrays.  ``Gc`` is the left-continuous survival
    ``F^c(t-)``.  ``hazard`` is only set when ``F`` has a density.  For Monte Carlo
    estimates ``grid`` and ``lambda_bar_se`` hold the estimation grid and the
    standard errors there.
    """

    lambda_bar: Callable
    variance: Callable
    F: Callable
    Fc: Callable
    Gc: Callable
    lambda_star: float
    nu_atoms: tuple = ()
    hazard: Callable | None = None
    shape: Callable | None = None
    analytic: bool = True
    grid: np.ndarray | None = field(default=None, repr=False)
    lambda_bar_se: np.ndarray | None = field(default=None, repr=False)
    n_samples: int = 0

    @property
    def absolutely_continuous(self):
        return not self.nu_atoms and self.hazard is not None

    def reproduction_number(self, upper=None, n=20001):
        """``R0 = int_0^inf lambda_bar``; integrates up to ``upper`` on a trapezoid grid."""
        if upper is None:
            upper = _effective_support(self)
        t = np.linspace(0.0, upper, n)
        return float(np.trapezoid(self.lambda_bar(t), t))

    def to_csv(self, path, grid):
        grid = np.asarray(grid, dtype=float)
        rows = zip(grid, self.lambda_bar(grid), self.variance(grid), self.F(grid))
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "lambda_bar", "variance", "F"])
            for r in rows:
                w.writerow([repr(float(v)) for v in r])


def _effective_support(m):
    if m.grid is not None:
        return float(m.grid[-1])
    # first t where survival is negligible
    t = 1.0
    while m.Fc(t) > 1e-14 and t < 1e6:
        t *= 2
    return t


class _EmpiricalCdf:
    def __init__(self, sample):
        self.sorted = np.sort(np.asarray(sample, dtype=float))

    def __call__(self, t):
        out = np.searchsorted(self.sorted, t, side="right") / self.sorted.size
        return out if np.ndim(out) else float(out)


class _EmpiricalSf(_EmpiricalCdf):
    def __call__(self, t):
        return 1.0 - super().__call__(t)


class _EmpiricalLeftSf(_EmpiricalCdf):
    def __call__(self, t):
        out = 1.0 - np.searchsorted(self.sorted, t, side="left") / self.sorted.size
        return out if np.ndim(out) else float(out)


class _GridInterpolant:
    def __init__(self, grid, values):
        self.grid = np.asarray(grid, dtype=float)
        self.values = np.asarray(values, dtype=float)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = np.where(t >= 0, np.interp(t, self.grid, self.values), 0.0)
        return out if out.ndim else float(out)


def _analytic(law) -> MeanInfectivity:
    d = law.duration
    hazard = None if d.atoms else d.hazard
    return MeanInfectivity(
        lambda_bar=law.mean,
        variance=law.variance,
        F=d.cdf,
        Fc=d.sf,
        Gc=d.left_sf,
        lambda_star=law.lambda_star,
        nu_atoms=tuple(d.atoms),
        hazard=hazard,
        shape=law.shape_at,
        analytic=True,
    )


def _mc_moments(law, grid, n, rng):
    total = np.zeros(grid.size)
    total_sq = np.zeros(grid.size)
    etas = np.empty(n)
    for i in range(n):
        path = law.sample_path(rng)
        vals = path(grid)
        total += vals
        total_sq += vals * vals
        etas[i] = path.eta
    mean = total / n
    var = np.maximum(total_sq / n - mean**2, 0.0)
    return mean, var, etas


def mean_infectivity(
    law,
    grid=None,
    *,
    rng=None,
    n_samples=None,
    sample_cap=100_000,
    se_target=None,
) -> MeanInfectivity:
    """Deterministic summaries of ``law``.

    Closed forms are returned for :class:`ConstantUntilDeath` and
    :class:`DeterministicShape`.  Other laws are estimated on ``grid`` by Monte
    Carlo with common random numbers: every sampled path is evaluated at every
    grid point.  With ``se_target`` a pilot run sizes the sample; if the required
    size exceeds ``sample_cap`` :class:`EstimationBudgetExceeded` is raised.
    """
    if isinstance(law, (ConstantUntilDeath, DeterministicShape)):
        return _analytic(law)
    if grid is None:
        raise ValueError("a time grid is required for Monte Carlo estimation")
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing with positive resolution")
    rng = np.random.default_rng(rng)

    if se_target is None:
        n = int(n_samples or sample_cap)
    else:
        pilot = min(1000, sample_cap)
        _, var, _ = _mc_moments(law, grid, pilot, np.random.default_rng(rng.integers(2**63)))
        needed = int(np.ceil(var.max() / se_target**2)) if var.max() > 0 else pilot
        if needed > sample_cap:
            raise EstimationBudgetExceeded(
                f"standard error {se_target} needs ~{needed} samples, cap is {sample_cap}"
            )
        n = max(needed, pilot)
    mean, var, etas = _mc_moments(law, grid, n, rng)
    se = np.sqrt(var / n)
    if se_target is not None and se.max() > se_target * 1.05:
        raise EstimationBudgetExceeded(f"reached standard error {se.max():.3g} > {se_target}")
    return MeanInfectivity(
        lambda_bar=_GridInterpolant(grid, mean),
        variance=_GridInterpolant(grid, var),
        F=_EmpiricalCdf(etas),
        Fc=_EmpiricalSf(etas),
        Gc=_EmpiricalLeftSf(etas),
        lambda_star=law.lambda_star,
        analytic=False,
        grid=grid,
        lambda_bar_se=se,
        n_samples=n,
    )


def remaining_duration_survival(m: MeanInfectivity, age, t):
    """``P(eta^0 > t | age) = F^c(t + age) / F^c(age)``, zero where ``F^c(age) = 0``."""
    age = np.asarray(age, dtype=float)
    t = np.asarray(t, dtype=float)
    den = np.asarray(m.Fc(age), dtype=float)
    num = np.asarray(m.Fc(t + age), dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
    return out if out.ndim else float(out)
