"""Age-density formulation: boundary flux plus transport along characteristics.

When the initial ages have a density the infected density ``i(t, a, x)``
solves ``(d/dt + d/da) i = -mu(a) i`` with influx ``i(t, 0, x) = u(t, x)``.
Along characteristics::

    i(t, a) = Gc(a) / Gc(a - t) * i(0, a - t)   for a >= t
    i(t, a) = Gc(a) * u(t - a)                   for a <  t

``u`` solves a closed Volterra equation with the susceptibles eliminated.  For
a duration law with atoms the right-continuous survival ``Fc`` replaces ``Gc``
and ``i`` vanishes past the atoms.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractionFailure, NegativeBoundary, NotApplicable
from .kernel import interaction_integral
from .limit_solver import initial_infectivity

__all__ = ["DensityField", "solve_boundary", "pde_residual", "reconstruct_totals"]


@dataclass
class DensityField:
    """``density[m, j, k]`` at time ``m h``, age ``j h`` and cell ``k``."""

    h: float
    t: np.ndarray
    ages: np.ndarray
    density: np.ndarray
    boundary: np.ndarray
    S: np.ndarray
    B: np.ndarray
    initial_density: np.ndarray
    atomic: bool
    meta: dict = field(default_factory=dict)

    def cumulative(self):
        """``int_0^a i(t, a') da'`` on the grid, by the cumulative trapezoid rule."""
        d = self.density
        out = np.zeros_like(d)
        out[:, 1:] = np.cumsum(0.5 * self.h * (d[:, 1:] + d[:, :-1]), axis=1)
        return out

    def heatmap(self, m):
        """``(ages, cells)`` matrix of the density at time index ``m``."""
        return self.density[m]

    def to_csv(self, path, header=None, time_stride=1, age_stride=1):
        with open(path, "w", newline="") as fh:
            if header:
                fh.write(header)
            w = csv.writer(fh)
            w.writerow(["t", "age", "k", "density"])
            for m in range(0, self.t.size, time_stride):
                for j in range(0, self.ages.size, age_stride):
                    for k in range(self.B.size):
                        w.writerow([repr(float(self.t[m])), repr(float(self.ages[j])), k, repr(float(self.density[m, j, k]))])

    def boundary_to_csv(self, path, header=None):
        with open(path, "w", newline="") as fh:
            if header:
                fh.write(header)
            w = csv.writer(fh)
            w.writerow(["t", "k", "u", "S"])
            for m in range(self.t.size):
                for k in range(self.B.size):
                    w.writerow([repr(float(self.t[m])), k, repr(float(self.boundary[m, k])), repr(float(self.S[m, k]))])


def solve_boundary(dk, m, initial, T, h, *, picard_tol=1e-12, max_iter=200, age_conditioned=True) -> DensityField:
    """Solve for the boundary flux ``u`` and fill the density by characteristics.

    Initial ages must have a density; point masses are outside this formulation.
    """
    ages_law = initial.ages
    if not getattr(ages_law, "has_density", False):
        raise NotApplicable("the density formulation needs initial ages with a density")
    q = dk.C_beta * m.lambda_star * dk.C_B * h / dk.c_B
    if not q < 0.5:
        raise ContractionFailure(f"step h={h} too large: contraction constant {q:.3g} >= 1/2")
    M = int(round(T / h))
    if M < 1 or abs(M * h - T) > 1e-9 * max(1.0, T):
        raise ValueError(f"T={T} must be a positive multiple of h={h}")
    J0 = int(np.ceil(ages_law.a_max / h - 1e-9))
    J = M + J0
    t = np.arange(M + 1) * h
    ages = np.arange(J + 1) * h
    B = dk.B_vec
    S0, I0, _ = initial.cell_values(B)
    K = B.size

    i0 = np.asarray(ages_law.pdf(ages), dtype=float)[:, None] * I0[None, :]
    i0[J0 + 1 :] = 0.0

    # g(t_m): infectivity of the initially infected, integrated over their ages
    wa = np.full(J0 + 1, h)
    wa[0] = wa[-1] = 0.5 * h
    if J0 == 0:
        wa[:] = 0.0
    lam_shift = initial_infectivity(m, ages[None, : J0 + 1], t[:, None], age_conditioned)
    g = (lam_shift * wa) @ i0[: J0 + 1]
    lam = np.asarray(m.lambda_bar(t), dtype=float)

    u = np.empty((M + 1, K))
    S = np.empty((M + 1, K))
    S[0] = S0
    u[0] = S0 / B * interaction_integral(dk, g[0])
    acc = 0.5 * u[0]  # running trapezoid sum of u without the current node
    lam_u = np.empty((M + 1, K))
    lam_u[0] = 0.5 * u[0]
    for n in range(1, M + 1):
        past = h * (lam[n:0:-1] @ lam_u[:n])
        x = u[n - 1].copy()
        for _ in range(max_iter):
            s = S0 - h * (acc + 0.5 * x)
            y = s / B * interaction_integral(dk, g[n] + past + 0.5 * h * lam[0] * x)
            delta = np.max(np.abs(y - x))
            x = y
            if delta <= picard_tol * max(1.0, float(np.max(np.abs(y)))):
                break
        else:
            raise ContractionFailure(f"boundary fixed point not reached at step {n}")
        if x.min() < -1e-12:
            raise NegativeBoundary(f"negative boundary flux at t={t[n]}")
        u[n] = x
        S[n] = S0 - h * (acc + 0.5 * x)
        acc = acc + x
        lam_u[n] = x

    atomic = bool(m.nu_atoms)
    surv = np.asarray((m.Fc if atomic else m.Gc)(ages), dtype=float)
    dens = np.empty((M + 1, J + 1, K))
    for n in range(M + 1):
        base = surv[: J + 1 - n]
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(base > 0, surv[n:] / np.where(base > 0, base, 1.0), 0.0)
        dens[n, n:] = ratio[:, None] * i0[: J + 1 - n]
        if n:
            dens[n, :n] = surv[:n, None] * u[n:0:-1]
    meta = {
        "atomic_duration_law": atomic,
        "survival": "right_continuous" if atomic else "left_continuous",
        "age_conditioned": bool(age_conditioned),
    }
    return DensityField(h, t, ages, dens, u, S, B.copy(), i0, atomic, meta)


def pde_residual(field: DensityField, m) -> float:
    """Max backward-characteristic residual of ``(d/dt + d/da) i + mu i``.

    Only defined when the duration law has a hazard rate.
    """
    if m.hazard is None or m.nu_atoms:
        raise NotApplicable("residual needs a duration law with a hazard rate")
    d = field.density
    mu = np.asarray(m.hazard(field.ages[1:]), dtype=float)
    r = (d[1:, 1:] - d[:-1, :-1]) / field.h + mu[None, :, None] * d[1:, 1:]
    return float(np.abs(r).max())


def reconstruct_totals(field: DensityField, m):
    """Total infected ``I(t)`` and force of infection ``Fr(t)`` from the density.

    With a deterministic infectivity shape ``Fr = int shape(a) i(t, a) da``.
    Otherwise the density is weighted by ``lambda_bar(a) / Gc(a)``, or by
    ``Gc(a - t) / Gc(a) * lambda_bar(a)`` (``Gc = 1`` at negative ages) when
    the initial infectivity was not conditioned on age.
    """
    h, ages, d = field.h, field.ages, field.density
    w = np.full(ages.size, h)
    w[0] = w[-1] = 0.5 * h
    I = np.einsum("j,mjk->mk", w, d)
    conditioned = field.meta.get("age_conditioned", True)
    if m.shape is not None and conditioned:
        F = np.einsum("j,mjk->mk", w * np.asarray(m.shape(ages), dtype=float), d)
        return I, F
    gc = np.asarray(m.Gc(ages), dtype=float)
    lam = np.asarray(m.lambda_bar(ages), dtype=float)
    F = np.empty_like(I)
    for n in range(field.t.size):
        shifted = np.ones_like(gc)
        if not conditioned:
            shifted[n:] = gc[: ages.size - n]
        with np.errstate(divide="ignore", invalid="ignore"):
            weight = np.where(gc > 0, shifted / np.where(gc > 0, gc, 1.0) * lam, 0.0)
        F[n] = (w * weight) @ d[n]
    return I, F
