"""Command line entry point: ``spatial-age-epi {simulate,solve,converge}``.

Every output file carries the run metadata (config hash, package versions,
seeds) in a leading ``#`` line or a ``metadata`` record.  Wall-clock timings go
to ``timing.json`` only, so all other outputs are byte-identical for a fixed
configuration and seed.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import load_config
from .errors import ConfigError, EpidemicModelError
from .harness import convergence_study
from .limit_solver import sis_equilibrium, solve, solve_sis
from .pde_solver import reconstruct_totals, solve_boundary
from .simulator import simulate

log = logging.getLogger("spatial_age_epi")

OUTPUT_ENV = "SPATIAL_AGE_EPI_OUTPUT"


def _metadata(cfg, command, extra=None):
    meta = {
        "command": command,
        "config_sha256": cfg.sha256,
        "seed": cfg.seed,
        "package": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }
    if extra:
        meta.update(extra)
    return meta


def _header(meta):
    return "# " + json.dumps(meta, sort_keys=True) + "\n"


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _output_dir(args, cfg):
    out = args.out or os.environ.get(OUTPUT_ENV) or cfg.output_dir
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _f(x):
    return repr(float(x))


def cmd_simulate(cfg, out):
    sc = cfg.scenario
    dk = sc.discretize(cfg.K)
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.replications)
    times, ages = sc.observation_times, sc.observation_ages
    meta = _metadata(cfg, "simulate", {"N": cfg.N, "K": cfg.K, "method": cfg.method, "replications": cfg.replications})
    telemetry = []
    with open(out / "observables.csv", "w", newline="") as fo, open(out / "age_field.csv", "w", newline="") as fa:
        fo.write(_header(meta))
        fa.write(_header(meta))
        wo, wa = csv.writer(fo), csv.writer(fa)
        wo.writerow(["replication", "t", "k", "S", "I", "R", "F", "A"])
        wa.writerow(["replication", "t", "age", "k", "value"])
        for r, ss in enumerate(seeds):
            traj = simulate(dk, sc.law, sc.initial, cfg.N, sc.T, ss, model=sc.model, method=cfg.method, dt=cfg.dt)
            with open(out / f"events_{r:03d}.jsonl", "w") as fe:
                fe.write(json.dumps({"metadata": {**meta, "replication": r, "spawn_key": list(ss.spawn_key)}}, sort_keys=True) + "\n")
                for rec in traj.event_records():
                    fe.write(json.dumps(rec) + "\n")
            obs = traj.observe_grid(times, ages)
            for i, t in enumerate(times):
                for k in range(cfg.K):
                    wo.writerow([r, _f(t), k] + [_f(obs[n][i, k]) for n in ("S", "I", "R", "F", "A")])
                    for j, a in enumerate(ages):
                        wa.writerow([r, _f(t), _f(a), k, _f(obs["cum"][i, j, k])])
            telemetry.append({
                "replication": r,
                "spawn_key": list(ss.spawn_key),
                "events": len(traj.events),
                "candidates": int(traj.stats.get("candidates", 0)),
                "accepted": int(traj.stats.get("accepted", 0)),
                "acceptance_rate": traj.acceptance_rate,
            })
            log.info("replication %d: %d events, acceptance %.3f", r, len(traj.events), traj.acceptance_rate)
    _write_json(out / "metadata.json", {**meta, "replications_detail": telemetry})


def _grid_indices(sc):
    h = sc.h
    return np.rint(sc.observation_times / h).astype(int), np.rint(sc.observation_ages / h).astype(int)


def cmd_solve(cfg, out):
    sc = cfg.scenario
    opts = dict(cfg.solve)
    method = opts.pop("method", "volterra")
    time_stride = opts.pop("time_stride", 1)
    age_stride = opts.pop("age_stride", 1)
    dk = sc.discretize(cfg.K)
    m = sc.mean_infectivity()
    meta = _metadata(cfg, f"solve {method}", {"K": cfg.K, "h": sc.h, "T": sc.T, "model": sc.model})
    summary = dict(meta)

    if method == "sis-equilibrium":
        I, S, R0 = sis_equilibrium(dk, m)
        with open(out / "equilibrium.csv", "w", newline="") as fh:
            fh.write(_header(meta))
            w = csv.writer(fh)
            w.writerow(["k", "x", "S", "I"])
            for k in range(dk.K):
                w.writerow([k, _f(dk.centers[k]), _f(S[k]), _f(I[k])])
        summary["R0"] = R0
        _write_json(out / "metadata.json", summary)
        return

    t_idx, a_idx = _grid_indices(sc)
    lim = None
    if method in ("volterra", "both"):
        if sc.model == "SIS":
            lim = solve_sis(dk, m, sc.initial, sc.T, sc.h, time_index=t_idx, age_index=a_idx, **opts)
        else:
            lim = solve(dk, m, sc.initial, sc.T, sc.h, time_index=t_idx, age_index=a_idx, **opts)
        lim.to_csv(out / "limit_fields.csv", header=_header(meta), time_stride=time_stride)
        lim.cum_to_csv(out / "age_field.csv", header=_header(meta))
        summary["conservation_error"] = lim.conservation_error()
        summary["picard_iterations"] = lim.picard_iterations
    if method in ("pde", "both"):
        pde = solve_boundary(dk, m, sc.initial, sc.T, sc.h, **opts)
        summary.update(pde.meta)
        pde.to_csv(out / "density.csv", header=_header(meta), time_stride=time_stride, age_stride=age_stride)
        pde.boundary_to_csv(out / "boundary.csv", header=_header(meta))
        if lim is not None:
            I, F = reconstruct_totals(pde, m)
            cum = pde.cumulative()
            disc = {
                "boundary_vs_infection_rate": float(np.abs(pde.boundary - lim.U).max()),
                "susceptible": float(np.abs(pde.S - lim.S).max()),
                "infected": float(np.abs(I - lim.I).max()),
                "force_of_infection": float(np.abs(F - lim.F).max()),
                "age_field": float(np.abs(cum[t_idx][:, a_idx] - lim.cum).max()),
            }
            _write_json(out / "discrepancy.json", {"metadata": meta, "max_abs_difference": disc})
    _write_json(out / "metadata.json", summary)


def cmd_converge(cfg, out):
    if not cfg.ladder:
        raise ConfigError("ladder", "converge needs at least one rung")
    report = convergence_study(cfg.scenario, cfg.ladder, cfg.seed, threads=cfg.threads, method=cfg.method)
    meta = _metadata(cfg, "converge", {"threads_do_not_affect_results": True})
    report.to_csv(out / "report.csv", header=_header(meta))
    report.to_json(out / "report.json", extra=meta)
    _write_json(out / "timing.json", report.timing)
    for r in report.rungs:
        log.info("N=%d K=%d: S %.4f I %.4f F %.4f age %.4f", r.N, r.K, r.mean["S"], r.mean["I"], r.mean["F"], r.mean["cum"])


COMMANDS = {"simulate": cmd_simulate, "solve": cmd_solve, "converge": cmd_converge}


def build_parser():
    p = argparse.ArgumentParser(prog="spatial-age-epi", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="YAML run configuration")
        s.add_argument("--seed", type=int, help="master seed (overrides the config)")
        s.add_argument("--out", help=f"output directory (overrides ${OUTPUT_ENV} and the config)")
        s.add_argument("--threads", type=int, help="worker processes for replications")
        s.add_argument("-v", "--verbose", action="store_true")
        if name == "solve":
            s.add_argument("--method", choices=["volterra", "pde", "both", "sis-equilibrium"])
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
            cfg.raw = {**cfg.raw, "seed": args.seed}
        if args.threads is not None:
            cfg.threads = args.threads
        if getattr(args, "method", None):
            cfg.solve["method"] = args.method
            cfg.raw = {**cfg.raw, "solve": {**(cfg.raw.get("solve") or {}), "method": args.method}}
        out = _output_dir(args, cfg)
        t0 = time.perf_counter()
        COMMANDS[args.command](cfg, out)
        if args.command != "converge":
            _write_json(out / "timing.json", {"seconds": time.perf_counter() - t0})
    except ConfigError as exc:
        print(f"configuration error in field '{exc.field}': {exc}", file=sys.stderr)
        return 2
    except EpidemicModelError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
