"""Monte Carlo convergence studies of the stochastic model towards its limit.

For each rung ``(N, K, replications)`` of a ladder, independent replications
are simulated and compared with the limit, which is solved once on the finest
partition and cell-averaged onto coarser ones.  Errors are sup over the
observation grid of the spatial L1 distance ``(1/K) sum_k |a_k - b_k|``.
"""
from __future__ import annotations

import csv
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DimensionMismatch
from .limit_solver import restriction_matrix, solve, solve_sis
from .simulator import simulate

__all__ = ["Rung", "RungResult", "ConvergenceReport", "l1_space_distance", "default_K", "ladder", "convergence_study"]

FIELDS = ("S", "I", "R", "F", "cum")


def l1_space_distance(a, b):
    """``(1/K) sum_k |a_k - b_k|`` along the last axis."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DimensionMismatch(f"shapes {a.shape} and {b.shape} differ")
    return np.abs(a - b).mean(axis=-1)


def default_K(N):
    return int(math.ceil(math.sqrt(N)))


@dataclass(frozen=True)
class Rung:
    N: int
    K: int
    replications: int


def ladder(Ns, replications=20, K=default_K):
    return [Rung(int(n), int(K(n)), int(replications)) for n in Ns]


@dataclass
class RungResult:
    N: int
    K: int
    replications: int
    errors: dict
    mean: dict
    max: dict
    se: dict
    acceptance_rate: float
    seed_entropy: list


@dataclass
class ConvergenceReport:
    scenario: str
    master_seed: int
    rungs: list
    limit_h: float
    timing: dict = field(default_factory=dict)

    def table(self):
        rows = []
        for r in self.rungs:
            row = {"N": r.N, "K": r.K, "replications": r.replications, "acceptance_rate": r.acceptance_rate}
            for f in FIELDS:
                row[f"{f}_mean"] = r.mean[f]
                row[f"{f}_max"] = r.max[f]
                row[f"{f}_se"] = r.se[f]
            rows.append(row)
        return rows

    def monotone(self, name):
        """True when the mean error strictly decreases along the ladder."""
        m = [r.mean[name] for r in self.rungs]
        return all(b < a for a, b in zip(m, m[1:]))

    def to_csv(self, path, header=None):
        rows = self.table()
        with open(path, "w", newline="") as fh:
            if header:
                fh.write(header)
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            for row in rows:
                w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})

    def to_dict(self):
        return {
            "scenario": self.scenario,
            "master_seed": self.master_seed,
            "limit_h": self.limit_h,
            "rungs": [asdict(r) for r in self.rungs],
        }

    def to_json(self, path, extra=None):
        d = self.to_dict()
        if extra:
            d["metadata"] = extra
        with open(path, "w") as fh:
            json.dump(d, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _replicate(args):
    """One replication; module level so worker processes can import it."""
    index, seed, dk, law, initial, N, T, model, method, times, ages, ref = args
    traj = simulate(dk, law, initial, N, T, seed, model=model, method=method)
    obs = traj.observe_grid(times, ages)
    err = {f: float(l1_space_distance(obs[f], ref[f]).max()) for f in FIELDS}
    return index, err, traj.acceptance_rate


def _limit_reference(scenario, K_fine):
    """Limit on the finest partition at the observation times and ages."""
    dk = scenario.discretize(K_fine)
    m = scenario.mean_infectivity()
    h = scenario.h
    times, ages = scenario.observation_times, scenario.observation_ages
    t_idx = np.rint(times / h).astype(int)
    a_idx = np.rint(ages / h).astype(int)
    if not (np.allclose(t_idx * h, times) and np.allclose(a_idx * h, ages)):
        raise ValueError("observation grid must lie on the solver grid")
    if scenario.model == "SIS":
        lim = solve_sis(dk, m, scenario.initial, scenario.T, h, time_index=t_idx, age_index=a_idx)
    else:
        lim = solve(dk, m, scenario.initial, scenario.T, h, time_index=t_idx, age_index=a_idx)
    ref = {"S": lim.S[t_idx], "I": lim.I[t_idx], "R": lim.R[t_idx], "F": lim.F[t_idx], "cum": lim.cum}
    return ref, lim


def _restrict(ref, K_fine, K):
    if K == K_fine:
        return ref
    W = restriction_matrix(K_fine, K)
    return {name: v @ W.T for name, v in ref.items()}


def convergence_study(scenario, rungs, master_seed, *, threads=1, method="superposition") -> ConvergenceReport:
    """Run every rung and summarize the L1 errors of S, I, R, Fr and the age field.

    Rungs are sorted by ``N``.  Replication ``r`` of rung ``i`` uses the seed
    ``SeedSequence([master_seed, i]).spawn(..)[r]``, so results do not depend on
    ``threads``.
    """
    rungs = sorted(rungs, key=lambda r: (r.N, r.K))
    for r in rungs:
        if r.N < 10 * r.K:
            raise ValueError(f"rung N={r.N}, K={r.K} has fewer than 10 individuals per cell")
    clock = {}
    t0 = time.perf_counter()
    K_fine = max(r.K for r in rungs)
    ref_fine, _ = _limit_reference(scenario, K_fine)
    clock["limit_seconds"] = time.perf_counter() - t0
    times, ages = scenario.observation_times, scenario.observation_ages
    results = []
    pool = ProcessPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        for i, rung in enumerate(rungs):
            t1 = time.perf_counter()
            ss = np.random.SeedSequence([master_seed, i])
            seeds = ss.spawn(rung.replications)
            dk = scenario.discretize(rung.K)
            ref = _restrict(ref_fine, K_fine, rung.K)
            jobs = [
                (r, seeds[r], dk, scenario.law, scenario.initial, rung.N, scenario.T, scenario.model, method, times, ages, ref)
                for r in range(rung.replications)
            ]
            out = list(pool.map(_replicate, jobs)) if pool else [_replicate(j) for j in jobs]
            out.sort(key=lambda x: x[0])
            errors = {f: [o[1][f] for o in out] for f in FIELDS}
            n = rung.replications
            # replications without any thinning candidate have no acceptance rate
            rates = [o[2] for o in out if np.isfinite(o[2])]
            results.append(
                RungResult(
                    N=rung.N,
                    K=rung.K,
                    replications=n,
                    errors=errors,
                    mean={f: float(np.mean(v)) for f, v in errors.items()},
                    max={f: float(np.max(v)) for f, v in errors.items()},
                    se={f: float(np.std(v, ddof=1) / np.sqrt(n)) if n > 1 else float("nan") for f, v in errors.items()},
                    acceptance_rate=float(np.mean(rates)) if rates else float("nan"),
                    seed_entropy=[int(master_seed), i],
                )
            )
            clock[f"rung_{i}_seconds"] = time.perf_counter() - t1
    finally:
        if pool:
            pool.shutdown()
    clock["total_seconds"] = time.perf_counter() - t0
    clock["threads"] = threads
    clock["cpu_count"] = os.cpu_count()
    return ConvergenceReport(scenario.name, int(master_seed), results, scenario.h, clock)
