"""Interaction kernels on ``[0, 1]^2`` and population densities on ``[0, 1]``.

A kernel ``beta(x, y)`` is the infection pressure exerted on location ``x`` by
infectivity at ``y``; it need not be symmetric and may blow up on the diagonal.
:func:`discretize` turns a kernel and a density into cell averages on the uniform
partition of ``[0, 1]`` into ``K`` cells.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import special

from .errors import DimensionMismatch, KernelBoundViolation

__all__ = [
    "ConstantKernel",
    "SeparableKernel",
    "GaussianKernel",
    "SingularKernel",
    "FunctionKernel",
    "ConstantDensity",
    "TwoBlockDensity",
    "DiscreteKernel",
    "discretize",
    "interaction_integral",
    "cell_edges",
    "cell_average",
    "discretization_defect",
]


def cell_edges(K):
    return np.linspace(0.0, 1.0, K + 1)


def cell_average(func, K, points=4):
    """Gauss-Legendre cell averages of a function of one variable."""
    nodes, weights = np.polynomial.legendre.leggauss(points)
    edges = cell_edges(K)
    a, b = edges[:-1, None], edges[1:, None]
    x = 0.5 * (a + b) + 0.5 * (b - a) * nodes[None, :]
    vals = np.asarray(func(x), dtype=float) * np.ones_like(x)
    return 0.5 * vals @ weights


def _difference_cell_averages(G, K):
    """Cell averages of ``f(x - y)`` from a second antiderivative ``G`` of ``f``.

    Over ``[a, b] x [c, d]`` the integral is
    ``G(b - c) - G(a - c) - G(b - d) + G(a - d)``.
    """
    e = cell_edges(K)
    a, b = e[:-1, None], e[1:, None]
    c, d = e[None, :-1], e[None, 1:]
    total = G(b - c) - G(a - c) - G(b - d) + G(a - d)
    # nonnegative integrands; far from the diagonal the difference cancels to rounding noise
    return np.maximum(total, 0.0) * K * K


@dataclass(frozen=True)
class ConstantKernel:
    b: float

    def __call__(self, x, y):
        return self.b * np.ones(np.broadcast(np.asarray(x), np.asarray(y)).shape)

    @property
    def C_beta(self):
        return float(self.b)

    def cell_averages(self, K):
        return np.full((K, K), float(self.b))


@dataclass(frozen=True)
class SeparableKernel:
    """``offset + scale * x * y``."""

    scale: float = 1.0
    offset: float = 0.0

    def __call__(self, x, y):
        return self.offset + self.scale * np.asarray(x) * np.asarray(y)

    @property
    def C_beta(self):
        return float(self.offset + 0.5 * max(self.scale, 0.0))

    def cell_averages(self, K):
        xm = (np.arange(K) + 0.5) / K
        return self.offset + self.scale * np.outer(xm, xm)


@dataclass(frozen=True)
class GaussianKernel:
    """``amplitude * exp(-(x - y)^2 / sigma^2)``."""

    amplitude: float
    sigma: float

    def __call__(self, x, y):
        d = np.asarray(x) - np.asarray(y)
        return self.amplitude * np.exp(-(d**2) / self.sigma**2)

    @property
    def C_beta(self):
        # row integral is maximal at x = 1/2
        s = self.sigma
        return float(self.amplitude * s * np.sqrt(np.pi) * special.erf(0.5 / s))

    def cell_averages(self, K):
        s = self.sigma

        def G(u):
            return 0.5 * s * np.sqrt(np.pi) * u * special.erf(u / s) + 0.5 * s * s * np.exp(-(u**2) / s**2)

        return self.amplitude * _difference_cell_averages(G, K)


@dataclass(frozen=True)
class SingularKernel:
    """``c / sqrt(|x - y|)``, integrable but unbounded on the diagonal."""

    c: float

    def __call__(self, x, y):
        d = np.abs(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))
        with np.errstate(divide="ignore"):
            return self.c / np.sqrt(d)

    @property
    def C_beta(self):
        # int_0^1 |x-y|^{-1/2} dy = 2(sqrt(x) + sqrt(1-x)), maximal at x = 1/2
        return float(2.0 * np.sqrt(2.0) * self.c)

    def cell_averages(self, K):
        return self.c * _difference_cell_averages(lambda u: (4.0 / 3.0) * np.abs(u) ** 1.5, K)


@dataclass(frozen=True)
class FunctionKernel:
    """Arbitrary bounded kernel; discretized by tensor Gauss-Legendre quadrature."""

    func: Callable
    C_beta: float

    def __call__(self, x, y):
        return self.func(x, y)


@dataclass(frozen=True)
class ConstantDensity:
    def __call__(self, x):
        return np.ones(np.shape(x))

    @property
    def bounds(self):
        return 1.0, 1.0

    def cell_averages(self, K):
        return np.ones(K)


@dataclass(frozen=True)
class TwoBlockDensity:
    """``low`` on ``[0, split)`` and the normalizing level on ``[split, 1]``."""

    split: float = 0.5
    low: float = 0.5

    def __post_init__(self):
        if not 0 < self.split < 1:
            raise ValueError("split must lie in (0, 1)")
        if not 0 < self.low or self.split * self.low >= 1:
            raise ValueError("low must be positive with split * low < 1")

    @property
    def high(self):
        return (1.0 - self.split * self.low) / (1.0 - self.split)

    def __call__(self, x):
        return np.where(np.asarray(x) < self.split, self.low, self.high)

    @property
    def bounds(self):
        return min(self.low, self.high), max(self.low, self.high)

    def cell_averages(self, K):
        e = cell_edges(K)
        left = np.clip(self.split - e[:-1], 0.0, 1.0 / K)
        return K * (left * self.low + (1.0 / K - left) * self.high)


@dataclass(frozen=True)
class DiscreteKernel:
    """Cell-averaged kernel ``beta_{k,k'}`` and density ``B_k`` on ``K`` cells."""

    beta_matrix: np.ndarray
    B_vec: np.ndarray
    C_beta: float

    @property
    def K(self):
        return self.beta_matrix.shape[0]

    @property
    def cell_width(self):
        return 1.0 / self.K

    @property
    def edges(self):
        return cell_edges(self.K)

    @property
    def centers(self):
        return (np.arange(self.K) + 0.5) / self.K

    @property
    def c_B(self):
        return float(self.B_vec.min())

    @property
    def C_B(self):
        return float(self.B_vec.max())

    @property
    def row_bound(self):
        return float(self.beta_matrix.sum(axis=1).max() / self.K)

    @property
    def col_bound(self):
        return float(self.beta_matrix.sum(axis=0).max() / self.K)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "B"] + [f"beta_{j}" for j in range(self.K)])
            for k in range(self.K):
                w.writerow([k, repr(float(self.B_vec[k]))] + [repr(float(v)) for v in self.beta_matrix[k]])


def discretize(kernel, density, K, *, quad_points=1, rtol=1e-9) -> DiscreteKernel:
    """Cell averages of ``kernel`` and ``density`` on ``K`` equal cells.

    Catalog kernels are averaged exactly; :class:`FunctionKernel` uses a
    ``quad_points``-point Gauss-Legendre rule per direction (1 = midpoint).  The
    density is rescaled so ``mean(B_k) == 1`` exactly.
    """
    if K < 1:
        raise ValueError("K must be at least 1")
    if hasattr(kernel, "cell_averages"):
        beta = np.asarray(kernel.cell_averages(K), dtype=float)
    else:
        nodes, weights = np.polynomial.legendre.leggauss(quad_points)
        e = cell_edges(K)
        mid, half = 0.5 * (e[:-1] + e[1:]), 0.5 / K
        xs = mid[:, None] + half * nodes[None, :]
        vals = np.asarray(kernel(xs[:, None, :, None], xs[None, :, None, :]), dtype=float)
        beta = 0.25 * np.einsum("klpq,p,q->kl", vals, weights, weights)
    if np.any(beta < 0) or not np.all(np.isfinite(beta)):
        raise KernelBoundViolation("kernel cell averages must be finite and nonnegative")

    if hasattr(density, "cell_averages"):
        B = np.asarray(density.cell_averages(K), dtype=float)
    else:
        B = cell_average(density, K)
    if np.any(B <= 0):
        raise ValueError("population density must be positive")
    B = B / B.mean()

    dk = DiscreteKernel(beta, B, float(kernel.C_beta))
    limit = dk.C_beta * (1 + rtol) + rtol
    if dk.row_bound > limit or dk.col_bound > limit:
        raise KernelBoundViolation(
            f"discrete bound {max(dk.row_bound, dk.col_bound):.6g} exceeds C_beta={dk.C_beta:.6g}"
        )
    return dk


def interaction_integral(dk: DiscreteKernel, values):
    """``(1/K) sum_{k'} beta_{k,k'} values_{k'}`` along the first axis."""
    values = np.asarray(values, dtype=float)
    if values.shape[0] != dk.K:
        raise DimensionMismatch(f"expected {dk.K} cells, got {values.shape[0]}")
    return np.tensordot(dk.beta_matrix, values, axes=(1, 0)) / dk.K


def _piecewise_refine(values, K, M):
    """Values of a K-cell step function on M cells (M a multiple of K)."""
    return np.repeat(values, M // K, axis=0)


def discretization_defect(kernel, K, phi, M=None):
    """L1 norm of ``int (beta^K(., y) - beta(., y)) phi(y) dy``.

    The continuum kernel is represented by its exact cell averages on a partition
    ``M`` times finer (default ``M = 64 K``); ``phi`` is averaged on the fine cells.
    """
    M = M or 64 * K
    if M % K:
        raise ValueError("M must be a multiple of K")
    fine = np.asarray(kernel.cell_averages(M), dtype=float)
    coarse = _piecewise_refine(_piecewise_refine(kernel.cell_averages(K), K, M).T, K, M).T
    phi_fine = cell_average(phi, M)
    diff = (coarse - fine) @ phi_fine / M
    return float(np.abs(diff).mean())
