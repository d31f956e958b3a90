"""Deterministic large-population limit as time-space Volterra equations.

Unknowns on the cells ``k`` of a :class:`~spatial_age_epi.kernel.DiscreteKernel`
and the uniform time grid ``t_m = m h``::

    S(t)  = S(0) - int_0^t U(s) ds
    Fr(t) = Fr0(t) + int_0^t lambda_bar(t - s) U(s) ds
    U(t)  = S(t) / B * (1/K) beta @ Fr(t)

with ``Fr0(t) = int lambda_bar(a + t) / Fc(a) I(0, da)``, the mean infectivity of
an individual already infected for ``a`` (``age_conditioned=False`` drops the
``1 / Fc(a)`` factor).  Convolutions use the trapezoid
rule on the shared time/age step ``h`` so ``t - s`` always falls on a node; the
implicit value at ``t_m`` is resolved by fixed-point iteration.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .errors import ConstraintViolation, ContractionFailure, NegativeField, NonConvergence
from .infectivity import MeanInfectivity, remaining_duration_survival
from .kernel import DiscreteKernel, cell_edges, interaction_integral

__all__ = [
    "AgeQuadrature",
    "LimitFields",
    "solve_sf",
    "derived_fields",
    "solve",
    "solve_sis",
    "sis_equilibrium",
    "reproduction_number",
    "restriction_matrix",
    "check_step",
    "initial_infectivity",
]


class AgeQuadrature:
    """Integration against the normalized initial age law.

    Atoms are integrated exactly.  A density is integrated by the trapezoid rule
    on the nodes ``j h`` covering ``[0, a_max]``.
    """

    def __init__(self, ages, h):
        self.h = h
        if getattr(ages, "has_density", False):
            J0 = int(np.ceil(ages.a_max / h - 1e-9))
            self.nodes = np.arange(J0 + 1) * h
            self.density = np.asarray(ages.pdf(self.nodes), dtype=float)
            w = np.full(J0 + 1, h)
            w[0] = w[-1] = 0.5 * h
            if J0 == 0:
                w[:] = 0.0
            self.weights = w * self.density
            self.atomic = False
        else:
            order = np.argsort(ages.ages, kind="stable")
            self.nodes = np.asarray(ages.ages, dtype=float)[order]
            self.weights = np.asarray(ages.weights, dtype=float)[order]
            self.density = None
            self.atomic = True

    @property
    def a_max(self):
        return float(self.nodes[-1])

    def integrate(self, values):
        """``values`` has the node axis last."""
        return np.asarray(values) @ self.weights

    def cumulative(self, values, uppers):
        """Integrals of ``values`` over ``[0, upper]`` for each entry of ``uppers``.

        For densities ``uppers`` must lie on the node grid.
        """
        uppers = np.asarray(uppers, dtype=float)
        if self.atomic:
            cs = np.concatenate([[0.0], np.cumsum(values * self.weights)])
            return cs[np.searchsorted(self.nodes, uppers + 1e-12, side="right")]
        f = values * self.density
        cs = np.concatenate([[0.0], np.cumsum(0.5 * self.h * (f[1:] + f[:-1]))])
        idx = np.clip(np.rint(uppers / self.h).astype(int), 0, self.nodes.size - 1)
        return cs[idx]


@dataclass
class LimitFields:
    """Gridded limit fields; ``cum[i, j, k]`` is stored at ``cum_t_index[i]`` and ``cum_age_index[j]``."""

    h: float
    t: np.ndarray
    B: np.ndarray
    S0: np.ndarray
    I0: np.ndarray
    R0: np.ndarray
    a_bar: float
    S: np.ndarray
    F: np.ndarray
    U: np.ndarray
    F0: np.ndarray
    survivors0: np.ndarray
    model: str = "SIR"
    I: np.ndarray | None = None
    R: np.ndarray | None = None
    cum: np.ndarray | None = None
    cum_t_index: np.ndarray | None = None
    cum_age_index: np.ndarray | None = None
    picard_iterations: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def K(self):
        return self.B.size

    @property
    def M(self):
        return self.t.size - 1

    @property
    def ages(self):
        """Full age grid ``j h`` up to ``T + a_bar``."""
        J = self.M + int(np.ceil(self.a_bar / self.h - 1e-9))
        return np.arange(J + 1) * self.h

    def conservation_error(self):
        total = self.S + self.I + (self.R if self.R is not None else 0.0)
        return float(np.abs(total.mean(axis=1) - 1.0).max())

    def a_priori_bound(self, lambda_star, C_beta):
        """Upper bound on the force of infection over ``[0, T]``."""
        C_B, c_B = float(self.B.max()), float(self.B.min())
        return lambda_star * C_B * np.exp(C_beta / c_B * lambda_star * C_B * self.t[-1])

    def validate(self, lambda_star=None, C_beta=None, tol=1e-10):
        if self.S.min() < -tol or self.F.min() < -tol or self.U.min() < -tol:
            raise NegativeField("negative limit field")
        if self.model == "SIR" and np.any(np.diff(self.S, axis=0) > tol):
            raise NegativeField("susceptible density increased")
        if self.S.max() > self.B.max() + tol:
            raise NegativeField("susceptible density exceeds population density")
        if lambda_star is not None and C_beta is not None:
            if self.F.max() > self.a_priori_bound(lambda_star, C_beta) * (1 + 1e-9):
                raise NegativeField("force of infection exceeds its a-priori bound")

    def restrict(self, K_coarse):
        """Cell averages of every time-space field on ``K_coarse`` equal cells."""
        W = restriction_matrix(self.K, K_coarse)
        out = {name: getattr(self, name) @ W.T for name in ("S", "F", "U", "I", "R") if getattr(self, name) is not None}
        if self.cum is not None:
            out["cum"] = self.cum @ W.T
        return out

    def to_csv(self, path, header=None, time_stride=1):
        names = [n for n in ("S", "F", "U", "I", "R") if getattr(self, n) is not None]
        with open(path, "w", newline="") as fh:
            if header:
                fh.write(header)
            w = csv.writer(fh)
            w.writerow(["t", "k", "field", "value"])
            for m in range(0, self.M + 1, time_stride):
                for k in range(self.K):
                    for n in names:
                        w.writerow([repr(float(self.t[m])), k, n, repr(float(getattr(self, n)[m, k]))])

    def cum_to_csv(self, path, header=None):
        if self.cum is None:
            raise ValueError("cumulative age field not computed")
        ages = self.ages
        with open(path, "w", newline="") as fh:
            if header:
                fh.write(header)
            w = csv.writer(fh)
            w.writerow(["t", "age", "k", "value"])
            for i, m in enumerate(self.cum_t_index):
                for j, a in enumerate(self.cum_age_index):
                    for k in range(self.K):
                        w.writerow([repr(float(self.t[m])), repr(float(ages[a])), k, repr(float(self.cum[i, j, k]))])

    def save_npz(self, path):
        arrays = {
            n: v
            for n, v in vars(self).items()
            if isinstance(v, np.ndarray)
        }
        np.savez(path, h=self.h, a_bar=self.a_bar, model=self.model, **arrays)


def restriction_matrix(K_fine, K_coarse):
    """``W[c, f]`` so that ``W @ v`` cell-averages a K_fine step function onto K_coarse cells."""
    ef, ec = cell_edges(K_fine), cell_edges(K_coarse)
    lo = np.maximum(ec[:-1, None], ef[None, :-1])
    hi = np.minimum(ec[1:, None], ef[None, 1:])
    return np.clip(hi - lo, 0.0, None) * K_coarse


def check_step(dk: DiscreteKernel, m: MeanInfectivity, h):
    """Raise :class:`ContractionFailure` unless ``C_beta lambda* C_B h / c_B < 1/2``."""
    q = dk.C_beta * m.lambda_star * dk.C_B * h / dk.c_B
    if not q < 0.5:
        raise ContractionFailure(f"step h={h} too large: contraction constant {q:.3g} >= 1/2")
    return q


def _time_grid(T, h):
    M = int(round(T / h))
    if M < 1 or abs(M * h - T) > 1e-9 * max(1.0, T):
        raise ValueError(f"T={T} must be a positive multiple of h={h}")
    return M, np.arange(M + 1) * h


def initial_infectivity(m, ages, t, age_conditioned=True):
    """Mean infectivity at time ``t`` of an individual infected for ``ages`` at time 0.

    Paths vanish after ``eta``, so conditioning on ``eta > age`` only divides by
    ``Fc(age)`` (zero where ``Fc(age) = 0``).
    """
    ages = np.asarray(ages, dtype=float)
    lam = np.asarray(m.lambda_bar(ages + t), dtype=float)
    if not age_conditioned:
        return lam
    fc = np.asarray(m.Fc(ages), dtype=float) * np.ones_like(lam)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(fc > 0, lam / np.where(fc > 0, fc, 1.0), 0.0)


def _initial_terms(m, quad, I0, t, age_conditioned=True):
    """``Fr0[m, k]`` and the surviving initial infected ``survivors0[m, k]``."""
    lam = initial_infectivity(m, quad.nodes[None, :], t[:, None], age_conditioned)
    ratio = remaining_duration_survival(m, quad.nodes[None, :], t[:, None])
    F0 = quad.integrate(lam)[:, None] * I0[None, :]
    surv = quad.integrate(ratio)[:, None] * I0[None, :]
    return F0, surv


def _march(dk, m, initial, T, h, model, picard_tol, max_iter, age_conditioned=True):
    check_step(dk, m, h)
    initial.validate()
    M, t = _time_grid(T, h)
    K = dk.K
    B = dk.B_vec
    S0, I0, R0 = initial.cell_values(B)
    if model == "SIS" and np.any(R0 > 0):
        raise ConstraintViolation("SIS model needs zero initial recovered")
    quad = AgeQuadrature(initial.ages, h)
    F0, surv0 = _initial_terms(m, quad, I0, t, age_conditioned)
    lam = np.asarray(m.lambda_bar(t), dtype=float)
    Fc = np.asarray(m.Fc(t), dtype=float)

    S = np.empty((M + 1, K))
    F = np.empty((M + 1, K))
    U = np.empty((M + 1, K))
    I = np.empty((M + 1, K)) if model == "SIS" else None
    wU = np.empty((M + 1, K))  # trapezoid-weighted past values
    # cumU is h * (U_0 / 2 + U_1 + ... + U_{n-1})

    S[0] = S0
    F[0] = F0[0]
    U[0] = S0 / B * interaction_integral(dk, F[0])
    if model == "SIS":
        I[0] = I0
    wU[0] = 0.5 * U[0]
    cumU = h * wU[0]
    iters = 0
    for n in range(1, M + 1):
        conv_lam = h * (lam[n:0:-1] @ wU[:n])
        if model == "SIS":
            conv_Fc = h * (Fc[n:0:-1] @ wU[:n])
        u = U[n - 1].copy()
        for it in range(max_iter):
            if model == "SIS":
                In = surv0[n] + conv_Fc + 0.5 * h * Fc[0] * u
                Sn = B - In
            else:
                Sn = S0 - cumU - 0.5 * h * u
            Fn = F0[n] + conv_lam + 0.5 * h * lam[0] * u
            u_new = Sn / B * interaction_integral(dk, Fn)
            done = np.max(np.abs(u_new - u)) <= picard_tol * max(1.0, float(np.max(np.abs(u_new))))
            u = u_new
            if done:
                break
        else:
            raise ContractionFailure(f"fixed point not reached at step {n}")
        iters += it + 1
        if model == "SIS":
            In = surv0[n] + conv_Fc + 0.5 * h * Fc[0] * u
            S[n] = B - In
            I[n] = In
        else:
            S[n] = S0 - cumU - 0.5 * h * u
        F[n] = F0[n] + conv_lam + 0.5 * h * lam[0] * u
        U[n] = u
        if S[n].min() < -1e-10 or F[n].min() < -1e-10:
            raise NegativeField(f"negative field at t={t[n]}")
        wU[n] = u
        cumU = cumU + h * u
    return LimitFields(
        h=h,
        t=t,
        B=B.copy(),
        S0=S0,
        I0=I0,
        R0=R0,
        a_bar=quad.a_max,
        S=S,
        F=F,
        U=U,
        F0=F0,
        survivors0=surv0,
        model=model,
        I=I,
        R=np.zeros_like(S) if model == "SIS" else None,
        picard_iterations=iters,
        meta={"age_conditioned": bool(age_conditioned)},
    )


def solve_sf(dk, m, initial, T, h, *, picard_tol=1e-12, max_iter=200, age_conditioned=True) -> LimitFields:
    """March the coupled susceptible / force-of-infection system (SIR)."""
    return _march(dk, m, initial, T, h, "SIR", picard_tol, max_iter, age_conditioned)


def _trapezoid_conv(kernel_vals, U, h):
    """``h * sum_i w_i kernel(t_n - t_i) U_i`` for every n (w = 1/2 at both ends)."""
    M = U.shape[0] - 1
    out = np.zeros_like(U)
    for n in range(1, M + 1):
        out[n] = h * (kernel_vals[n::-1] @ U[: n + 1] - 0.5 * (kernel_vals[n] * U[0] + kernel_vals[0] * U[n]))
    return out


def derived_fields(fields: LimitFields, m: MeanInfectivity, initial, *, time_index=None, age_index=None) -> LimitFields:
    """Fill ``I``, ``R`` and the cumulative age field ``cum``.

    ``cum(t, a)`` combines surviving initial infected with ``t + a0 <= a`` and
    the new infections in ``[(t - a)^+, t]`` still infected.  It is evaluated at
    ``time_index`` x ``age_index`` (default: every node) on the full grid.
    """
    h, t, K = fields.h, fields.t, fields.K
    M = fields.M
    Fc_t = np.asarray(m.Fc(t), dtype=float)
    F_t = np.asarray(m.F(t), dtype=float)
    if fields.model == "SIR":
        fields.I = fields.survivors0 + _trapezoid_conv(Fc_t, fields.U, h)
        fields.R = fields.R0[None, :] + (fields.I0[None, :] - fields.survivors0) + _trapezoid_conv(F_t, fields.U, h)

    quad = AgeQuadrature(initial.ages, h)
    ages = fields.ages
    time_index = np.arange(M + 1) if time_index is None else np.asarray(time_index, dtype=int)
    age_index = np.arange(ages.size) if age_index is None else np.asarray(age_index, dtype=int)
    cum = np.empty((time_index.size, age_index.size, K))
    for i, n in enumerate(time_index):
        # new infections: int_0^{min(a, t)} Fc(u) U(t - u) du
        g = Fc_t[: n + 1, None] * fields.U[n::-1]
        c2 = np.zeros((n + 1, K))
        if n:
            c2[1:] = np.cumsum(0.5 * h * (g[1:] + g[:-1]), axis=0)
        ratio = remaining_duration_survival(m, quad.nodes, t[n])
        # initial infected now have age t + a0, so only a0 <= a - t counts
        first = np.where(age_index >= n, quad.cumulative(ratio, np.maximum(age_index - n, 0) * h), 0.0)
        cum[i] = first[:, None] * fields.I0[None, :] + c2[np.minimum(age_index, n)]
    fields.cum = cum
    fields.cum_t_index = time_index
    fields.cum_age_index = age_index
    return fields


def solve(dk, m, initial, T, h, *, time_index=None, age_index=None, **kw) -> LimitFields:
    """:func:`solve_sf` followed by :func:`derived_fields`."""
    f = solve_sf(dk, m, initial, T, h, **kw)
    return derived_fields(f, m, initial, time_index=time_index, age_index=age_index)


def solve_sis(
    dk, m, initial, T, h, *, picard_tol=1e-12, max_iter=200, mass_tol=1e-8, derived=True, age_conditioned=True, **kw
) -> LimitFields:
    """SIS variant: recovered individuals return to the susceptible pool.

    Each cell is closed, so ``S = B - I`` with ``I`` from the survival
    convolution; the mass constraint ``mean(S + I) = 1`` is asserted.
    """
    f = _march(dk, m, initial, T, h, "SIS", picard_tol, max_iter, age_conditioned)
    dev = float(np.abs((f.S + f.I).mean(axis=1) - 1.0).max())
    if dev > mass_tol:
        raise ConstraintViolation(f"mass constraint violated by {dev:.3g}")
    if derived:
        derived_fields(f, m, initial, **kw)
    return f


def reproduction_number(m: MeanInfectivity) -> float:
    """``R0 = int_0^inf lambda_bar(t) dt``."""
    if not m.analytic:
        return m.reproduction_number()
    pts = [a for a, _ in m.nu_atoms]
    upper = max(pts) if pts else np.inf
    if np.isfinite(upper):
        val, _ = integrate.quad(m.lambda_bar, 0.0, upper, limit=400)
    else:
        val, _ = integrate.quad(m.lambda_bar, 0.0, np.inf, limit=400, epsabs=1e-13, epsrel=1e-12)
    return float(val)


def sis_equilibrium(dk: DiscreteKernel, m: MeanInfectivity, *, damping=1.0, tol=1e-14, max_iter=200_000, R0=None):
    """Endemic equilibrium ``I* = R0 (S*/B) (1/K) beta @ I*`` with ``S* = B - I*``.

    Rearranged as ``I = B R0 J / (B + R0 J)``, ``J = (1/K) beta @ I``, and iterated
    (optionally damped) from ``I = 0.01 B``.  Returns ``(I*, S*, R0)``; ``I* = 0``
    when the iteration collapses to the disease-free state.
    """
    R0 = reproduction_number(m) if R0 is None else R0
    if not np.isfinite(R0):
        raise NonConvergence("R0 is not finite")
    B = dk.B_vec
    I = 0.01 * B
    for _ in range(max_iter):
        J = interaction_integral(dk, I)
        target = B * R0 * J / (B + R0 * J)
        new = (1 - damping) * I + damping * target
        if np.max(np.abs(new - I)) <= tol:
            I = new
            break
        I = new
        if I.max() < 1e-12:
            I = np.zeros_like(I)
            break
    else:
        raise NonConvergence(f"equilibrium iteration did not converge in {max_iter} steps")
    if I.max() < 1e-10:
        I = np.zeros_like(I)
    return I, B - I, R0
