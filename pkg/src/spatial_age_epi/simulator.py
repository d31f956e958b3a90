"""Event-driven simulation of the individual-based model on K locations.

Susceptibles at location ``k`` are infected at rate

    Upsilon_k(t) = S_k / B_k * (1/K) * sum_k' beta_{k,k'} Fr_k'(t)

where ``Fr_k'`` is the summed current infectivity of the infected at ``k'``.
Infection times are the points of a Poisson random measure below ``Upsilon_k``,
generated by thinning.  Three methods are available:

``"superposition"`` (default)
    ``Upsilon`` is a sum of per-infected contributions, each bounded by
    ``lambda_star``; candidates are drawn at rate
    ``lambda_star * max_k' colavg_k' * I(t)`` and accepted with the exact
    contribution of one uniformly chosen infected individual.  Exact in law and
    O(1) work per candidate.
``"location_envelope"``
    Static envelope ``(1/K) sum_k' beta_{k,k'} lambda_star B_k'`` per location;
    every candidate evaluates ``Upsilon_k`` by summing all current infectivities.
    Exact, but only practical for small populations.
``"discretized"``
    ``Upsilon`` frozen on steps of length ``dt``; for cross-validation only.
"""
from __future__ import annotations

import heapq
import json
from math import log1p
from dataclasses import dataclass, field

import numpy as np

from .errors import EnvelopeViolation, InfeasibleInitialCondition, TimeOutOfRange
from .infectivity import ConstantUntilDeath, sample_path_given_age
from .initial import largest_remainder
from .kernel import DiscreteKernel, interaction_integral

__all__ = [
    "SimState",
    "Trajectory",
    "Observation",
    "init_state",
    "force_of_infection",
    "infection_rate",
    "run",
    "simulate",
]

INITIAL, INFECTION, RECOVERY = 0, 1, 2
EVENT_NAMES = {INITIAL: "initial", INFECTION: "infection", RECOVERY: "recovery"}


@dataclass
class SimState:
    """Mutable microscopic state of one replication."""

    dk: DiscreteKernel
    law: object
    model: str
    N: int
    B: np.ndarray
    S: np.ndarray
    R: np.ndarray
    I: np.ndarray
    A: np.ndarray
    S_init: np.ndarray
    R_init: np.ndarray
    t: float = 0.0
    loc: list = field(default_factory=list)
    tau: list = field(default_factory=list)
    eta: list = field(default_factory=list)
    rec: list = field(default_factory=list)
    paths: list = field(default_factory=list)
    initial: list = field(default_factory=list)
    active: list = field(default_factory=list)
    position: dict = field(default_factory=dict)
    heap: list = field(default_factory=list)
    events: list = field(default_factory=list)

    @property
    def K(self):
        return self.dk.K

    @property
    def scale(self):
        """``N / K``, the per-location population scale."""
        return self.N / self.K

    def add_infected(self, k, tau, path, event=INFECTION):
        j = len(self.loc)
        self.loc.append(k)
        self.tau.append(tau)
        self.eta.append(path.eta)
        self.rec.append(tau + path.eta)
        self.paths.append(path)
        self.initial.append(event == INITIAL)
        self.position[j] = len(self.active)
        self.active.append(j)
        self.I[k] += 1
        heapq.heappush(self.heap, (tau + path.eta, j))
        self.events.append((tau, event, k, j, path.eta))
        return j

    def recover(self, j, t):
        pos = self.position.pop(j)
        last = self.active.pop()
        if last != j:
            self.active[pos] = last
            self.position[last] = pos
        k = self.loc[j]
        self.I[k] -= 1
        if self.model == "SIS":
            self.S[k] += 1
        else:
            self.R[k] += 1
        self.events.append((t, RECOVERY, k, j, self.eta[j]))

    def check_invariants(self):
        if np.any(self.S + self.I + self.R != self.B):
            raise AssertionError("S + I + R != B")
        if np.any(self.S < 0):
            raise AssertionError("negative susceptible count")
        if self.model == "SIR" and np.any(self.A != self.S_init - self.S):
            raise AssertionError("A != S(0) - S")


def init_state(dk: DiscreteKernel, law, initial, N, rng, *, model="SIR") -> SimState:
    """Integer initial state for ``N`` individuals on the cells of ``dk``.

    Cell populations and the S/I/R split inside each cell use largest-remainder
    rounding, so totals are exact.  Each initially infected individual gets an
    age from ``initial.ages`` and a path drawn conditionally on ``eta > age``.
    """
    if model not in ("SIR", "SIS"):
        raise ValueError("model must be 'SIR' or 'SIS'")
    K = dk.K
    if N < K:
        raise InfeasibleInitialCondition(f"N={N} must be at least K={K}")
    initial.validate()
    rng = np.random.default_rng(rng)
    B = largest_remainder(dk.B_vec, N)
    s, i, r = initial.fractions(K)
    if model == "SIS" and np.any(r > 0):
        raise InfeasibleInitialCondition("SIS model needs zero initial recovered")
    S = np.empty(K, dtype=np.int64)
    I0 = np.empty(K, dtype=np.int64)
    R = np.empty(K, dtype=np.int64)
    for k in range(K):
        S[k], I0[k], R[k] = largest_remainder(np.array([s[k], i[k], r[k]]), int(B[k]))
    state = SimState(
        dk=dk,
        law=law,
        model=model,
        N=int(N),
        B=B,
        S=S,
        R=R,
        I=np.zeros(K, dtype=np.int64),
        A=np.zeros(K, dtype=np.int64),
        S_init=S.copy(),
        R_init=R.copy(),
    )
    for k in range(K):
        for _ in range(int(I0[k])):
            age = float(initial.ages.sample(rng))
            path = sample_path_given_age(law, age, rng)
            state.add_infected(k, 0.0 - age, path, event=INITIAL)
    return state


def force_of_infection(state: SimState, t=None):
    """Per-location sum of current infectivities (unscaled)."""
    t = state.t if t is None else t
    F = np.zeros(state.K)
    for j in state.active:
        F[state.loc[j]] += state.paths[j](t - state.tau[j])
    return F


def infection_rate(state: SimState, t=None):
    """``Upsilon_k = S_k / B_k * (1/K) sum_k' beta_{k,k'} Fr_k'``."""
    F = force_of_infection(state, t)
    frac = np.divide(state.S, state.B, out=np.zeros(state.K), where=state.B > 0)
    return frac * interaction_integral(state.dk, F)


class _Uniforms:
    """Buffered uniforms drawn from a numpy Generator, served as Python floats."""

    def __init__(self, rng, block=8192):
        self.rng = rng
        self.block = block
        self.buf = []
        self.pos = 0

    def refill(self):
        self.buf = self.rng.random(self.block).tolist()
        self.pos = 0


def run(state: SimState, horizon, rng, *, method="superposition", dt=None) -> "Trajectory":
    """Advance ``state`` to ``horizon`` and return the trajectory."""
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    rng = np.random.default_rng(rng)
    if method == "superposition":
        stats = _run_superposition(state, horizon, rng)
    elif method == "location_envelope":
        stats = _run_location_envelope(state, horizon, rng)
    elif method == "discretized":
        if not dt or dt <= 0:
            raise ValueError("discretized mode needs dt > 0")
        stats = _run_discretized(state, horizon, rng, dt)
    else:
        raise ValueError(f"unknown method {method!r}")
    state.t = horizon
    return Trajectory.from_state(state, horizon, method, stats)


def _recover_until(state, t_limit):
    heap = state.heap
    while heap and heap[0][0] <= t_limit:
        t_rec, j = heapq.heappop(heap)
        state.recover(j, t_rec)


def _run_superposition(state, horizon, rng):
    dk = state.dk
    K = dk.K
    beta = dk.beta_matrix
    colavg = beta.sum(axis=0) / K
    colmax = float(colavg.max())
    ratio = (colavg / colmax).tolist() if colmax > 0 else [0.0] * K
    colsum = beta.sum(axis=0)
    target_cdf = [np.cumsum(beta[:, c]) / colsum[c] if colsum[c] > 0 else None for c in range(K)]
    lam_star = float(state.law.lambda_star)
    B = state.B.tolist()
    S, loc, tau, paths, active = state.S, state.loc, state.tau, state.paths, state.active
    heap = state.heap
    law = state.law
    u = _Uniforms(rng)
    t = state.t
    n_cand = n_acc = 0
    searchsorted = np.searchsorted
    rate_unit = lam_star * colmax

    while True:
        n_inf = len(active)
        t_rec = heap[0][0] if heap else np.inf
        if n_inf and rate_unit > 0:
            if u.pos > len(u.buf) - 5:
                u.refill()
            e = -log1p(-u.buf[u.pos])
            u.pos += 1
            t_cand = t + e / (rate_unit * n_inf)
        else:
            t_cand = np.inf
        if t_rec <= t_cand:
            if t_rec > horizon:
                break
            _, j = heapq.heappop(heap)
            state.recover(j, t_rec)
            t = t_rec
            continue
        if t_cand > horizon:
            break
        t = t_cand
        n_cand += 1
        buf, p = u.buf, u.pos
        j = active[int(buf[p] * n_inf)]
        src = loc[j]
        if buf[p + 1] >= ratio[src]:
            u.pos = p + 2
            continue
        k = int(searchsorted(target_cdf[src], buf[p + 2], side="right"))
        if k >= K:
            k = K - 1
        u.pos = p + 4
        if S[k] == 0:
            continue
        accept = S[k] / B[k] * paths[j](t - tau[j]) / lam_star
        if accept > 1.0 + 1e-12:
            raise EnvelopeViolation(f"acceptance probability {accept} > 1")
        if buf[p + 3] < accept:
            n_acc += 1
            S[k] -= 1
            state.A[k] += 1
            state.add_infected(k, t, law.sample_path(rng))
    return {"candidates": n_cand, "accepted": n_acc}


def _run_location_envelope(state, horizon, rng):
    dk = state.dk
    K = dk.K
    lam_star = float(state.law.lambda_star)
    envelope = dk.beta_matrix @ (lam_star * state.B.astype(float)) / K
    total = float(envelope.sum())
    cdf = np.cumsum(envelope) / total if total > 0 else None
    t = state.t
    n_cand = n_acc = 0
    while True:
        t_cand = t + rng.exponential(1.0 / total) if total > 0 else np.inf
        if t_cand > horizon:
            _recover_until(state, horizon)
            break
        _recover_until(state, t_cand)
        t = t_cand
        n_cand += 1
        k = min(int(np.searchsorted(cdf, rng.random(), side="right")), K - 1)
        if state.S[k] == 0:
            rng.random()
            continue
        F = force_of_infection(state, t)
        rate = state.S[k] / state.B[k] * float(dk.beta_matrix[k] @ F) / K
        accept = rate / envelope[k]
        if accept > 1.0 + 1e-12:
            raise EnvelopeViolation(f"acceptance probability {accept} > 1")
        if rng.random() < accept:
            n_acc += 1
            state.S[k] -= 1
            state.A[k] += 1
            state.add_infected(k, t, state.law.sample_path(rng))
    return {"candidates": n_cand, "accepted": n_acc}


def _run_discretized(state, horizon, rng, dt):
    t = state.t
    n_steps = int(np.ceil((horizon - t) / dt - 1e-12))
    n_acc = 0
    for step in range(n_steps):
        t0 = t + step * dt
        t1 = min(t0 + dt, horizon)
        rates = infection_rate(state, t0)
        counts = np.minimum(rng.poisson(rates * (t1 - t0)), state.S)
        new = []
        for k in np.nonzero(counts)[0]:
            for s in rng.uniform(t0, t1, int(counts[k])):
                new.append((float(s), int(k)))
        new.sort()
        for s, k in new:
            _recover_until(state, s)
            if state.S[k] == 0:
                continue
            state.S[k] -= 1
            state.A[k] += 1
            state.add_infected(k, s, state.law.sample_path(rng))
            n_acc += 1
        _recover_until(state, t1)
    return {"candidates": n_acc, "accepted": n_acc}


# --------------------------------------------------------------------------
# trajectories and observables


@dataclass(frozen=True)
class Observation:
    """Scaled fields at one time: K-vectors and ``cum[age_index, k]``."""

    t: float
    S: np.ndarray
    I: np.ndarray
    R: np.ndarray
    F: np.ndarray
    A: np.ndarray
    cum: np.ndarray


@dataclass(frozen=True)
class Trajectory:
    """Complete record of one replication; any observable can be rebuilt from it."""

    K: int
    N: int
    model: str
    horizon: float
    method: str
    B: np.ndarray
    S_init: np.ndarray
    R_init: np.ndarray
    loc: np.ndarray
    tau: np.ndarray
    eta: np.ndarray
    rec: np.ndarray
    initial: np.ndarray
    paths: tuple
    law: object
    events: tuple
    stats: dict

    @classmethod
    def from_state(cls, state, horizon, method, stats):
        return cls(
            K=state.K,
            N=state.N,
            model=state.model,
            horizon=float(horizon),
            method=method,
            B=state.B.copy(),
            S_init=state.S_init.copy(),
            R_init=state.R_init.copy(),
            loc=np.asarray(state.loc, dtype=np.int64),
            tau=np.asarray(state.tau, dtype=float),
            eta=np.asarray(state.eta, dtype=float),
            rec=np.asarray(state.rec, dtype=float),
            initial=np.asarray(state.initial, dtype=bool),
            paths=tuple(state.paths),
            law=state.law,
            events=tuple(state.events),
            stats=dict(stats),
        )

    @property
    def scale(self):
        return self.N / self.K

    @property
    def acceptance_rate(self):
        c = self.stats.get("candidates", 0)
        return self.stats.get("accepted", 0) / c if c else float("nan")

    def observe(self, t, ages=(np.inf,)) -> Observation:
        """Scaled ``S, I, R, Fr, A`` and ``cum(t, age, .)`` at time ``t``.

        ``cum`` counts the initially infected still infected with
        ``t + initial age <= age`` plus those infected in ``((t - age)^+, t]``
        still infected, divided by ``N / K``.
        """
        if t < 0 or t > self.horizon:
            raise TimeOutOfRange(f"t={t} outside [0, {self.horizon}]")
        K = self.K
        ages = np.asarray(ages, dtype=float)
        new = ~self.initial
        live = (self.tau <= t) & (t < self.rec)
        I = np.bincount(self.loc[live], minlength=K)
        if self.model == "SIS":
            S = self.B - I
            R = self.R_init.copy()
        else:
            infected_by_t = new & (self.tau <= t)
            S = self.S_init - np.bincount(self.loc[infected_by_t], minlength=K)
            R = self.R_init + np.bincount(self.loc[self.rec <= t], minlength=K)
        A = np.bincount(self.loc[new & (self.tau <= t)], minlength=K)

        ids = np.nonzero(live)[0]
        age_now = t - self.tau[ids]
        if isinstance(self.law, ConstantUntilDeath):
            F = self.law.c * I.astype(float)
        else:
            F = np.zeros(K)
            vals = np.fromiter((self.paths[j](a) for j, a in zip(ids, age_now)), dtype=float, count=ids.size)
            np.add.at(F, self.loc[ids], vals)

        side_init = np.searchsorted(ages, age_now, side="left")
        side_new = np.searchsorted(ages, age_now, side="right")
        first = np.where(self.initial[ids], side_init, side_new)
        hist = np.bincount(first * K + self.loc[ids], minlength=(ages.size + 1) * K).reshape(ages.size + 1, K)
        cum = np.cumsum(hist, axis=0)[: ages.size]

        c = 1.0 / self.scale
        return Observation(float(t), S * c, I * c, R * c, F * c, A * c, cum * c)

    def observe_grid(self, times, ages=(np.inf,)):
        """Stack :meth:`observe` over ``times``; returns a dict of arrays."""
        obs = [self.observe(float(t), ages) for t in times]
        out = {name: np.stack([getattr(o, name) for o in obs]) for name in ("S", "I", "R", "F", "A", "cum")}
        out["t"] = np.asarray(times, dtype=float)
        out["ages"] = np.asarray(ages, dtype=float)
        return out

    def event_records(self):
        """Events in time order as dicts (time, type, location, id, eta)."""
        order = sorted(range(len(self.events)), key=lambda i: (self.events[i][0], i))
        for i in order:
            t, kind, k, j, eta = self.events[i]
            yield {"time": float(t), "type": EVENT_NAMES[kind], "location": int(k), "id": int(j), "eta": float(eta)}

    def write_event_log(self, path):
        with open(path, "w") as fh:
            for rec in self.event_records():
                fh.write(json.dumps(rec) + "\n")


def simulate(dk, law, initial, N, horizon, seed, *, model="SIR", method="superposition", dt=None) -> Trajectory:
    """Initialize and run one replication from a seed or ``SeedSequence``."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    init_seed, run_seed = ss.spawn(2)
    state = init_state(dk, law, initial, N, np.random.default_rng(init_seed), model=model)
    return run(state, horizon, np.random.default_rng(run_seed), method=method, dt=dt)
