"""Run configuration files: parsing, defaults, validation and re-emission.

A config is a YAML (or JSON) mapping with one section per concern::

    run:      m, n, p, iterations, seed, stride, mode, learn_iters, audit, oracle_tol
    init:     x_scale, theta (random | reference | [vector]), theta_scale
    graph:    kind, edge_prob, static
    sets:     family (random_boxes | explicit), seed, center_scale, half_range, agents, theta
    problem:  family (random | explicit), seed, singular, q_scale, coupling, b_scale, agents
    learning: family (random | explicit), seed, rows, spread, C, d
    noise:    x {kind, sigma, half_width}, theta {...}, nu, nu_theta
    schedule: a1, a2, tau, scale_alpha, scale_gamma, offset

Every key is optional except that the ``explicit`` families need their data.
``emit`` writes a fully explicit config (generated matrices included) that
parses back to an equivalent run.
"""

from __future__ import annotations

import copy
from pathlib import Path

import numpy as np
import yaml

from .engine import GraphSettings, RunConfig, RunMode
from .errors import ConfigError, JointOptError
from .problem import (
    AgentObjective,
    LearningSpec,
    NoiseModel,
    ProblemSpec,
    random_box_family,
    random_learning,
    random_problem,
)
from .schedule import StepsizeSchedule
from .sets import Ball, Box, FullSpace, SetFamily, Simplex

DEFAULTS = {
    "run": {"m": 2, "n": 2, "p": 2, "iterations": 1000, "seed": 0, "stride": 10,
            "mode": "misspecified_stochastic", "learn_iters": 0, "audit": False,
            "oracle_tol": 1e-8},
    "init": {"x_scale": 1.0, "theta": "random", "theta_scale": 1.0},
    "graph": {"kind": "random_connected", "edge_prob": 0.3, "static": False},
    "sets": {"family": "random_boxes", "seed": 0, "center_scale": 0.5,
             "half_range": [0.5, 1.5], "agents": None, "theta": {"type": "full"}},
    "problem": {"family": "random", "seed": 0, "singular": 0, "q_scale": 1.0,
                "coupling": 1.0, "b_scale": 1.0, "agents": None},
    "learning": {"family": "random", "seed": 0, "rows": None, "spread": [1.0, 1.4],
                 "C": None, "d": None},
    "noise": {"x": {"kind": "none", "sigma": 0.0, "half_width": 0.0},
              "theta": {"kind": "none", "sigma": 0.0, "half_width": 0.0},
              "nu": None, "nu_theta": None},
    "schedule": {"a1": 0.51, "a2": 0.9, "tau": 0.75, "scale_alpha": 1.0,
                 "scale_gamma": 1.0, "offset": 1},
}


def _merge(raw: dict) -> dict:
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a mapping of sections")
    out = copy.deepcopy(DEFAULTS)
    for section, values in raw.items():
        if section not in DEFAULTS:
            raise ConfigError(section, "unknown section")
        if values is None:
            continue
        if not isinstance(values, dict):
            raise ConfigError(section, "section must be a mapping")
        for key, value in values.items():
            if key not in DEFAULTS[section]:
                raise ConfigError(f"{section}.{key}", "unknown key")
            if section == "noise" and key in ("x", "theta"):
                if not isinstance(value, dict):
                    raise ConfigError(f"noise.{key}", "noise entry must be a mapping")
                for sub in value:
                    if sub not in DEFAULTS["noise"][key]:
                        raise ConfigError(f"noise.{key}.{sub}", "unknown key")
                out[section][key].update(value)
            else:
                out[section][key] = value
    return out


def _set_from(spec: dict, key: str, dim: int):
    if not isinstance(spec, dict) or "type" not in spec:
        raise ConfigError(key, "set entries need a 'type' field")
    kind = spec["type"]
    try:
        if kind == "box":
            return Box(spec["lower"], spec["upper"])
        if kind == "ball":
            return Ball(spec["center"], spec["radius"])
        if kind == "simplex":
            return Simplex(spec["scale"], spec.get("dim", dim))
        if kind == "full":
            return FullSpace(spec.get("dim", dim))
    except KeyError as exc:
        raise ConfigError(key, f"missing field {exc.args[0]!r}") from None
    except JointOptError as exc:
        raise ConfigError(key, str(exc)) from None
    raise ConfigError(key, f"unknown set type {kind!r}")


def _set_to(s) -> dict:
    if isinstance(s, Box):
        return {"type": "box", "lower": s.lower.tolist(), "upper": s.upper.tolist()}
    if isinstance(s, Ball):
        return {"type": "ball", "center": s.center.tolist(), "radius": s.radius}
    if isinstance(s, Simplex):
        return {"type": "simplex", "scale": s.scale, "dim": s.dim}
    return {"type": "full", "dim": s.dim}


def _noise_from(spec: dict, key: str) -> NoiseModel:
    try:
        return NoiseModel(spec["kind"], float(spec.get("sigma") or 0.0),
                          float(spec.get("half_width") or 0.0))
    except JointOptError as exc:
        raise ConfigError(key, str(exc)) from None


def _int(section: dict, name: str, key: str, minimum: int | None = None) -> int:
    value = section[name]
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(key, f"expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(key, f"must be at least {minimum}, got {value}")
    return value


def resolve(raw: dict) -> RunConfig:
    """Build and validate a ``RunConfig`` from a parsed mapping."""
    c = _merge(raw)
    run = c["run"]
    m = _int(run, "m", "run.m", 1)
    n = _int(run, "n", "run.n", 1)
    p = _int(run, "p", "run.p", 1)

    sets_cfg = c["sets"]
    try:
        if sets_cfg["family"] == "random_boxes":
            sets = random_box_family(m, n, _int(sets_cfg, "seed", "sets.seed"),
                                     float(sets_cfg["center_scale"]), tuple(sets_cfg["half_range"]))
        elif sets_cfg["family"] == "explicit":
            agents = sets_cfg["agents"]
            if not isinstance(agents, list) or len(agents) != m:
                raise ConfigError("sets.agents", f"expected a list of {m} set descriptions")
            sets = SetFamily([_set_from(a, f"sets.agents[{i}]", n) for i, a in enumerate(agents)])
        else:
            raise ConfigError("sets.family", f"unknown family {sets_cfg['family']!r}")
    except ConfigError:
        raise
    except JointOptError as exc:
        raise ConfigError("sets", str(exc)) from None
    theta_set = _set_from(sets_cfg["theta"], "sets.theta", p)
    if theta_set.dim != p:
        raise ConfigError("sets.theta", f"dimension {theta_set.dim} does not match p={p}")

    prob = c["problem"]
    if prob["family"] == "random":
        problem = random_problem(m, n, p, _int(prob, "seed", "problem.seed"),
                                 _int(prob, "singular", "problem.singular", 0),
                                 float(prob["q_scale"]), float(prob["coupling"]),
                                 float(prob["b_scale"]))
    elif prob["family"] == "explicit":
        agents = prob["agents"]
        if not isinstance(agents, list) or len(agents) != m:
            raise ConfigError("problem.agents", f"expected a list of {m} objectives")
        objs = []
        for i, a in enumerate(agents):
            key = f"problem.agents[{i}]"
            try:
                objs.append(AgentObjective(np.reshape(a["Q"], (n, n)), np.reshape(a["B"], (n, p)),
                                           np.reshape(a["b"], (n,))))
            except KeyError as exc:
                raise ConfigError(key, f"missing field {exc.args[0]!r}") from None
            except (ValueError, JointOptError) as exc:
                raise ConfigError(key, str(exc)) from None
        problem = ProblemSpec(objs)
    else:
        raise ConfigError("problem.family", f"unknown family {prob['family']!r}")

    lc = c["learning"]
    try:
        if lc["family"] == "random":
            learning = random_learning(p, _int(lc, "seed", "learning.seed"), lc["rows"],
                                       tuple(lc["spread"]), theta_set)
        elif lc["family"] == "explicit":
            if lc["C"] is None or lc["d"] is None:
                raise ConfigError("learning", "explicit learning family needs C and d")
            C = np.atleast_2d(np.asarray(lc["C"], dtype=float))
            if C.shape[1] != p:
                raise ConfigError("learning.C", f"C has {C.shape[1]} columns, expected p={p}")
            learning = LearningSpec(C, lc["d"], theta_set)
        else:
            raise ConfigError("learning.family", f"unknown family {lc['family']!r}")
    except ConfigError:
        raise
    except JointOptError as exc:
        raise ConfigError("learning.C", str(exc)) from None

    noise = c["noise"]
    sched = c["schedule"]
    schedule = StepsizeSchedule(float(sched["a1"]), float(sched["a2"]), float(sched["tau"]),
                                float(sched["scale_alpha"]), float(sched["scale_gamma"]),
                                _int(sched, "offset", "schedule.offset"))
    g = c["graph"]
    init = c["init"]
    theta_init = init["theta"]
    if not isinstance(theta_init, str):
        theta_init = np.asarray(theta_init, dtype=float)
    elif theta_init not in ("random", "reference"):
        raise ConfigError("init.theta", "expected 'random', 'reference' or a vector")

    cfg = RunConfig(
        problem=problem,
        sets=sets,
        learning=learning,
        schedule=schedule,
        graph=GraphSettings(str(g["kind"]), float(g["edge_prob"]), bool(g["static"])),
        x_noise=_noise_from(noise["x"], "noise.x"),
        theta_noise=_noise_from(noise["theta"], "noise.theta"),
        nu=None if noise["nu"] is None else float(noise["nu"]),
        nu_theta=None if noise["nu_theta"] is None else float(noise["nu_theta"]),
        iterations=_int(run, "iterations", "run.iterations", 0),
        seed=_int(run, "seed", "run.seed", 0),
        stride=_int(run, "stride", "run.stride", 1),
        mode=RunMode(str(run["mode"]), _int(run, "learn_iters", "run.learn_iters", 0)),
        audit=bool(run["audit"]),
        x_init_scale=float(init["x_scale"]),
        theta_init=theta_init,
        theta_init_scale=float(init["theta_scale"]),
        oracle_tol=float(run["oracle_tol"]),
        source=c,
    )
    cfg.validate()
    return cfg


def parse_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(str(path), "config file not found")
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(str(path), f"not valid YAML/JSON: {exc}") from None
    return resolve(raw)


def emit(cfg: RunConfig) -> dict:
    """Fully explicit mapping that ``resolve`` turns back into ``cfg``."""
    th = cfg.theta_init
    return {
        "run": {"m": cfg.m, "n": cfg.n, "p": cfg.p, "iterations": cfg.iterations,
                "seed": cfg.seed, "stride": cfg.stride, "mode": cfg.mode.kind,
                "learn_iters": cfg.mode.learn_iters, "audit": cfg.audit,
                "oracle_tol": cfg.oracle_tol},
        "init": {"x_scale": cfg.x_init_scale,
                 "theta": th if isinstance(th, str) else np.asarray(th).tolist(),
                 "theta_scale": cfg.theta_init_scale},
        "graph": {"kind": cfg.graph.kind, "edge_prob": cfg.graph.edge_prob,
                  "static": cfg.graph.static},
        "sets": {"family": "explicit", "agents": [_set_to(s) for s in cfg.sets.sets],
                 "theta": _set_to(cfg.learning.theta_set)},
        "problem": {"family": "explicit",
                    "agents": [{"Q": o.Q.tolist(), "B": o.B.tolist(), "b": o.b.tolist()}
                               for o in cfg.problem.objectives]},
        "learning": {"family": "explicit", "C": cfg.learning.C.tolist(),
                     "d": cfg.learning.d.tolist()},
        "noise": {"x": {"kind": cfg.x_noise.kind, "sigma": cfg.x_noise.sigma,
                        "half_width": cfg.x_noise.half_width},
                  "theta": {"kind": cfg.theta_noise.kind, "sigma": cfg.theta_noise.sigma,
                            "half_width": cfg.theta_noise.half_width},
                  "nu": cfg.nu, "nu_theta": cfg.nu_theta},
        "schedule": {"a1": cfg.schedule.a1, "a2": cfg.schedule.a2, "tau": cfg.schedule.tau,
                     "scale_alpha": cfg.schedule.scale_alpha,
                     "scale_gamma": cfg.schedule.scale_gamma, "offset": cfg.schedule.offset},
    }


def dump(cfg: RunConfig, path) -> None:
    Path(path).write_text(yaml.safe_dump(emit(cfg), sort_keys=False))
