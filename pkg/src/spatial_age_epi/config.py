"""YAML run configuration with field-level validation."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np
import yaml

from . import infectivity as inf
from . import initial as ini
from . import kernel as ker
from .errors import ConfigError
from .harness import Rung, default_K
from .scenarios import SCENARIOS, Scenario

__all__ = ["RunConfig", "load_config", "parse_config", "config_hash"]

DURATIONS = {
    "exponential": inf.Exponential,
    "deterministic": inf.Deterministic,
    "gamma": inf.GammaDuration,
    "weibull": inf.WeibullDuration,
}
KERNELS = {
    "constant": ker.ConstantKernel,
    "separable": ker.SeparableKernel,
    "gaussian": ker.GaussianKernel,
    "singular": ker.SingularKernel,
}
DENSITIES = {"constant": ker.ConstantDensity, "two_block": ker.TwoBlockDensity}
PROFILES = {"constant": ini.ConstantProfile, "bump": ini.BumpProfile, "two_block": ini.TwoBlockProfile}
AGES = {"atoms": ini.AgeAtoms, "uniform": ini.UniformAges, "triangular": ini.TriangularAges}
SHAPES = {"constant": inf.Constant, "linear": inf.Linear}

TOP_LEVEL = {
    "scenario", "model", "N", "K", "T", "h", "kernel", "density", "infectivity", "initial",
    "simulation", "observe", "solve", "ladder", "seed", "threads", "output_dir",
}


@dataclass
class RunConfig:
    scenario: Scenario
    N: int
    K: int
    seed: int
    threads: int
    output_dir: str
    replications: int = 1
    method: str = "superposition"
    dt: float | None = None
    solve: dict = field(default_factory=dict)
    ladder: list = field(default_factory=list)
    raw: dict = field(default_factory=dict)

    @property
    def sha256(self):
        return config_hash(self.raw)


def config_hash(raw):
    return hashlib.sha256(json.dumps(raw, sort_keys=True, default=str).encode()).hexdigest()


def _require_mapping(value, name):
    if not isinstance(value, dict):
        raise ConfigError(name, "expected a mapping")
    return value


def _number(value, name, *, positive=False, nonneg=False, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(name, f"expected a number, got {value!r}")
    if integer and int(value) != value:
        raise ConfigError(name, "expected an integer")
    if positive and not value > 0:
        raise ConfigError(name, "must be positive")
    if nonneg and not value >= 0:
        raise ConfigError(name, "must be nonnegative")
    return int(value) if integer else float(value)


def _build(spec, registry, name, **nested):
    """Instantiate ``registry[spec['type']]`` with the remaining keys as arguments."""
    spec = dict(_require_mapping(spec, name))
    kind = spec.pop("type", None)
    if kind not in registry:
        raise ConfigError(f"{name}.type", f"expected one of {sorted(registry)}, got {kind!r}")
    cls = registry[kind]
    params = {f.name: f for f in dataclasses.fields(cls)}
    for key in spec:
        if key not in params:
            raise ConfigError(f"{name}.{key}", f"unknown parameter for {kind}")
    args = {}
    for key, value in spec.items():
        if key in nested:
            args[key] = nested[key](value, f"{name}.{key}")
        elif isinstance(value, list):
            args[key] = tuple(_number(v, f"{name}.{key}") for v in value)
        else:
            args[key] = _number(value, f"{name}.{key}")
    missing = [
        k for k, f in params.items()
        if k not in args and f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING
    ]
    if missing:
        raise ConfigError(f"{name}.{missing[0]}", "missing required parameter")
    try:
        return cls(**args)
    except (ValueError, TypeError) as exc:
        raise ConfigError(name, str(exc)) from exc


def _duration(spec, name):
    return _build(spec, DURATIONS, name)


def _infectivity(spec, name):
    spec = dict(_require_mapping(spec, name))
    kind = spec.get("type")
    if kind == "constant_until_death":
        return _build(spec, {kind: inf.ConstantUntilDeath}, name, duration=_duration)
    if kind == "deterministic_shape":
        return _build(spec, {kind: inf.DeterministicShape}, name, duration=_duration, shape=lambda s, n: _build(s, SHAPES, n))
    if kind == "piecewise_random":
        allowed = {"type", "pieces", "stages", "lambda_star"}
        for key in spec:
            if key not in allowed:
                raise ConfigError(f"{name}.{key}", "unknown parameter for piecewise_random")
        pieces = spec.get("pieces")
        stages = spec.get("stages")
        if not isinstance(pieces, list) or not pieces:
            raise ConfigError(f"{name}.pieces", "expected a nonempty list")
        if not isinstance(stages, list) or len(stages) != len(pieces):
            raise ConfigError(f"{name}.stages", "expected one stage duration per piece")
        gens = []
        for i, p in enumerate(pieces):
            pn = f"{name}.pieces[{i}]"
            p = dict(_require_mapping(p, pn))
            if p.get("type") == "uniform_level":
                gens.append(_build(p, {"uniform_level": inf.UniformLevelPiece}, pn))
            else:
                gens.append(inf.FixedPiece(_build(p, SHAPES, pn)))
        law = inf.IndependentStages(tuple(_duration(s, f"{name}.stages[{i}]") for i, s in enumerate(stages)))
        lam = _number(spec.get("lambda_star"), f"{name}.lambda_star", positive=True)
        return inf.PiecewiseRandom(tuple(gens), law, lam)
    raise ConfigError(
        f"{name}.type", f"expected constant_until_death, deterministic_shape or piecewise_random, got {kind!r}"
    )


def _initial(spec, name):
    spec = dict(_require_mapping(spec, name))
    for key in spec:
        if key not in {"infected", "recovered", "ages"}:
            raise ConfigError(f"{name}.{key}", "unknown key")
    if "infected" not in spec:
        raise ConfigError(f"{name}.infected", "missing required profile")
    kw = {"infected": _build(spec["infected"], PROFILES, f"{name}.infected")}
    if "recovered" in spec:
        kw["recovered"] = _build(spec["recovered"], PROFILES, f"{name}.recovered")
    if "ages" in spec:
        kw["ages"] = _build(spec["ages"], AGES, f"{name}.ages")
    return ini.InitialCondition(**kw)


def _section(raw, key, allowed):
    sec = _require_mapping(raw.get(key, {}) or {}, key)
    for k in sec:
        if k not in allowed:
            raise ConfigError(f"{key}.{k}", "unknown key")
    return sec


def parse_config(raw) -> RunConfig:
    """Validate a configuration mapping; errors name the offending field."""
    raw = _require_mapping(raw, "<root>")
    for key in raw:
        if key not in TOP_LEVEL:
            raise ConfigError(key, "unknown key")

    if "scenario" in raw:
        name = raw["scenario"]
        if name not in SCENARIOS:
            raise ConfigError("scenario", f"expected one of {sorted(SCENARIOS)}, got {name!r}")
        sc = SCENARIOS[name]()
    else:
        for key in ("kernel", "infectivity", "initial", "T"):
            if key not in raw:
                raise ConfigError(key, "required when no scenario is named")
        sc = Scenario(name="custom", kernel=None, density=ker.ConstantDensity(), law=None, initial=None, T=1.0)

    if "kernel" in raw:
        sc.kernel = _build(raw["kernel"], KERNELS, "kernel")
    if "density" in raw:
        sc.density = _build(raw["density"], DENSITIES, "density")
    if "infectivity" in raw:
        sc.law = _infectivity(raw["infectivity"], "infectivity")
    if "initial" in raw:
        sc.initial = _initial(raw["initial"], "initial")
    if "T" in raw:
        sc.T = _number(raw["T"], "T", positive=True)
    if "h" in raw:
        sc.h = _number(raw["h"], "h", positive=True)
    if "model" in raw:
        if raw["model"] not in ("SIR", "SIS"):
            raise ConfigError("model", "expected SIR or SIS")
        sc.model = raw["model"]

    obs = _section(raw, "observe", {"dt", "age_dt"})
    if "dt" in obs:
        sc.obs_dt = _number(obs["dt"], "observe.dt", positive=True)
    if "age_dt" in obs:
        sc.age_dt = _number(obs["age_dt"], "observe.age_dt", positive=True)

    if isinstance(sc.law, inf.PiecewiseRandom) and sc.mc_grid is None:
        sc.mc_grid = np.arange(0.0, 4 * sc.T + sc.initial.a_bar + sc.h / 2, sc.h)

    N = _number(raw.get("N", 1000), "N", positive=True, integer=True)
    K = raw.get("K")
    K = default_K(N) if K is None else _number(K, "K", positive=True, integer=True)
    if N < K:
        raise ConfigError("K", "need N / K >= 1")

    sim = _section(raw, "simulation", {"method", "dt", "replications"})
    method = sim.get("method", "superposition")
    if method not in ("superposition", "location_envelope", "discretized"):
        raise ConfigError("simulation.method", "expected superposition, location_envelope or discretized")
    dt = sim.get("dt")
    if dt is not None:
        dt = _number(dt, "simulation.dt", positive=True)
    if method == "discretized" and dt is None:
        raise ConfigError("simulation.dt", "required by the discretized method")
    reps = _number(sim.get("replications", 1), "simulation.replications", positive=True, integer=True)

    solve = dict(_section(raw, "solve", {"method", "picard_tol", "max_iter", "age_conditioned", "time_stride", "age_stride"}))
    if solve.get("method", "volterra") not in ("volterra", "pde", "both", "sis-equilibrium"):
        raise ConfigError("solve.method", "expected volterra, pde, both or sis-equilibrium")
    for key in ("time_stride", "age_stride", "max_iter"):
        if key in solve:
            solve[key] = _number(solve[key], f"solve.{key}", positive=True, integer=True)
    if "picard_tol" in solve:
        solve["picard_tol"] = _number(solve["picard_tol"], "solve.picard_tol", positive=True)

    rungs = []
    lad = raw.get("ladder", [])
    if not isinstance(lad, list):
        raise ConfigError("ladder", "expected a list of rungs")
    for i, r in enumerate(lad):
        r = _require_mapping(r, f"ladder[{i}]")
        for key in r:
            if key not in ("N", "K", "replications"):
                raise ConfigError(f"ladder[{i}].{key}", "unknown key")
        n = _number(r.get("N"), f"ladder[{i}].N", positive=True, integer=True)
        k = r.get("K")
        k = default_K(n) if k is None else _number(k, f"ladder[{i}].K", positive=True, integer=True)
        rep = _number(r.get("replications", 20), f"ladder[{i}].replications", positive=True, integer=True)
        rungs.append(Rung(n, k, rep))

    seed = _number(raw.get("seed", 0), "seed", nonneg=True, integer=True)
    threads = _number(raw.get("threads", os.cpu_count() or 1), "threads", positive=True, integer=True)
    out = raw.get("output_dir", "output")
    if not isinstance(out, str):
        raise ConfigError("output_dir", "expected a path")
    return RunConfig(sc, N, K, seed, threads, out, reps, method, dt, solve, rungs, raw)


def load_config(path) -> RunConfig:
    with open(path) as fh:
        try:
            raw = yaml.safe_load(fh) or {}
        except yaml.YAMLError as exc:
            raise ConfigError("<file>", f"invalid YAML: {exc}") from exc
    return parse_config(raw)
