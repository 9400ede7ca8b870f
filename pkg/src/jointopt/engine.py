"""Synchronous simulation of the distributed averaging / projected-gradient /
learning scheme.

Every iteration ``k`` each agent ``i``

1. averages its neighbours' decisions with the epoch-``k`` mixing matrix,
   ``v_i = sum_j W[i, j] x_j``;
2. takes a projected noisy gradient step from ``v_i`` using its current
   parameter estimate ``theta_i``;
3. takes a projected noisy gradient step on the learning metric for
   ``theta_i``.

All agents read epoch-``k`` values only. The per-agent state lives in
``(m, n)`` and ``(m, p)`` arrays so one round is a handful of vectorised
operations.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from . import audit
from .errors import ConfigError, JointOptError, RunError
from .graph import KINDS, TopologySequence
from .metrics import IterationRecord, make_record
from .problem import (
    LearningSpec,
    NoiseModel,
    ProblemSpec,
    Reference,
    compute_constants,
    solve_reference,
)
from .schedule import StepsizeSchedule, validate as validate_schedule
from .sets import FullSpace, SetFamily, lemma_interior_or_none

MODES = ("misspecified_stochastic", "deterministic", "correctly_specified",
         "sequential_baseline")

# seed-sequence tags; graph draws use tag 0
X_NOISE, THETA_NOISE, X_INIT, THETA_INIT = 1, 2, 3, 4
NOISE_CHUNK = 1024

FEAS_TOL = 1e-10


@dataclass(frozen=True)
class RunMode:
    kind: str = "misspecified_stochastic"
    learn_iters: int = 0

    def __post_init__(self):
        if self.kind not in MODES:
            raise ConfigError("run.mode", f"unknown mode {self.kind!r}; expected one of {MODES}")
        if self.kind == "sequential_baseline" and self.learn_iters < 1:
            raise ConfigError("run.learn_iters", "sequential baseline needs learn_iters >= 1")


@dataclass(frozen=True)
class GraphSettings:
    kind: str = "random_connected"
    edge_prob: float = 0.3
    static: bool = False


@dataclass(eq=False)
class RunConfig:
    problem: ProblemSpec
    sets: SetFamily
    learning: LearningSpec
    schedule: StepsizeSchedule = StepsizeSchedule()
    graph: GraphSettings = GraphSettings()
    x_noise: NoiseModel = NoiseModel()
    theta_noise: NoiseModel = NoiseModel()
    nu: float | None = None
    nu_theta: float | None = None
    iterations: int = 1000
    seed: int = 0
    stride: int = 10
    mode: RunMode = RunMode()
    audit: bool = False
    x_init_scale: float = 1.0
    theta_init: object = "random"
    theta_init_scale: float = 1.0
    oracle_tol: float = 1e-8
    source: dict | None = field(default=None, repr=False)

    @property
    def m(self) -> int:
        return self.problem.m

    @property
    def n(self) -> int:
        return self.problem.n

    @property
    def p(self) -> int:
        return self.problem.p

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def validate(self) -> None:
        """Raise ``ConfigError`` naming the first violated requirement."""
        if len(self.sets) != self.m:
            raise ConfigError("sets", f"{len(self.sets)} agent sets for {self.m} agents")
        if self.sets.dim != self.n:
            raise ConfigError("sets", f"set dimension {self.sets.dim} does not match n={self.n}")
        if self.learning.p != self.p:
            raise ConfigError("learning", f"parameter dimension {self.learning.p} does not match p={self.p}")
        for i, s in enumerate(self.sets.sets):
            if not s.compact:
                raise ConfigError(f"sets.agents[{i}]",
                                  "agent sets must be convex and compact (Assumption 3(a))")
        report = validate_schedule(self.schedule)
        if report:
            raise ConfigError("schedule", "; ".join(report))
        if self.graph.kind not in KINDS:
            raise ConfigError("graph.kind", f"unknown topology kind {self.graph.kind!r}")
        if not 0.0 <= self.graph.edge_prob <= 1.0:
            raise ConfigError("graph.edge_prob", "edge probability must lie in [0, 1]")
        for key, model, dim, bound in (("noise.x", self.x_noise, self.n, self.nu),
                                       ("noise.theta", self.theta_noise, self.p, self.nu_theta)):
            if bound is not None and model.second_moment(dim) > bound ** 2 * (1 + 1e-12):
                raise ConfigError(key, f"second moment {model.second_moment(dim):.6g} exceeds "
                                       f"configured bound {bound ** 2:.6g} (Assumption 2(b))")
        if self.iterations < 0:
            raise ConfigError("run.iterations", "iteration budget must be nonnegative")
        if self.stride < 1:
            raise ConfigError("run.stride", "trace stride must be at least 1")
        if self.mode.kind == "sequential_baseline" and not self.mode.learn_iters < self.iterations:
            raise ConfigError("run.learn_iters", "learn_iters must be smaller than the iteration budget")
        if not (isinstance(self.theta_init, str) and self.theta_init in ("random", "reference")):
            th = np.asarray(self.theta_init, dtype=float).reshape(-1)
            if th.size != self.p:
                raise ConfigError("init.theta", f"initial theta has length {th.size}, expected {self.p}")


@dataclass
class SwarmState:
    k: int
    x: np.ndarray
    theta: np.ndarray
    v: np.ndarray | None = None


@dataclass
class RunTrace:
    records: list
    summary: dict
    final_state: SwarmState | None = None
    reference: Reference | None = None

    @property
    def final(self) -> IterationRecord:
        return self.records[-1]


def align(state: SwarmState, w) -> np.ndarray:
    """Row ``i``: the ``W[i]``-weighted average of the epoch-``k`` iterates."""
    W = getattr(w, "entries", w)
    return W @ state.x


class NoiseStreams:
    """Independent per-agent noise substreams, drawn in buffered chunks."""

    def __init__(self, model: NoiseModel, m: int, dim: int, seed: int, purpose: int):
        self.model = model
        self.m = m
        self.dim = dim
        self.active = not model.is_zero
        self._gens = [np.random.default_rng([purpose, seed, i]) for i in range(m)]
        self._buf = None
        self._pos = NOISE_CHUNK

    def next(self) -> np.ndarray:
        if self._pos == NOISE_CHUNK:
            self._buf = np.stack([self.model.sample(g, (NOISE_CHUNK, self.dim))
                                  for g in self._gens])
            self._pos = 0
        out = self._buf[:, self._pos]
        self._pos += 1
        return out


class Engine:
    """One run: owns the topology sequence, noise streams and reference solution."""

    def __init__(self, config: RunConfig, reference: Reference | None = None):
        config.validate()
        self.config = config
        self.reference = reference or solve_reference(
            config.problem, config.sets, config.learning, config.oracle_tol)
        cfg = config
        self.mode = cfg.mode.kind
        self.topologies = TopologySequence(cfg.graph.kind, cfg.m, cfg.seed,
                                           cfg.graph.edge_prob, cfg.graph.static)
        noisy = self.mode != "deterministic"
        self.x_noise = NoiseStreams(cfg.x_noise, cfg.m, cfg.n, cfg.seed, X_NOISE)
        self.theta_noise = NoiseStreams(cfg.theta_noise, cfg.m, cfg.p, cfg.seed, THETA_NOISE)
        self._x_noisy = noisy and self.x_noise.active
        self._theta_noisy = noisy and self.theta_noise.active
        self._theta_free = isinstance(cfg.learning.theta_set, FullSpace)
        self._theta_star_rows = np.tile(self.reference.theta_star, (cfg.m, 1))
        self._theta_hat = None
        self.constants = compute_constants(cfg.problem, cfg.sets, cfg.learning, cfg.x_noise,
                                           cfg.theta_noise, self.reference.theta_star)
        self._interior = lemma_interior_or_none(cfg.sets) if cfg.audit else None

    def initial_state(self) -> SwarmState:
        cfg = self.config
        x = np.empty((cfg.m, cfg.n))
        theta = np.empty((cfg.m, cfg.p))
        tset = cfg.learning.theta_set
        for i in range(cfg.m):
            g = np.random.default_rng([X_INIT, cfg.seed, i])
            x[i] = cfg.sets[i].project(cfg.x_init_scale * g.standard_normal(cfg.n))
        if self.mode == "correctly_specified" or (
                isinstance(cfg.theta_init, str) and cfg.theta_init == "reference"):
            theta[:] = self._theta_star_rows
        elif isinstance(cfg.theta_init, str):
            for i in range(cfg.m):
                g = np.random.default_rng([THETA_INIT, cfg.seed, i])
                theta[i] = tset.project(cfg.theta_init_scale * g.standard_normal(cfg.p))
        else:
            theta[:] = tset.project(np.asarray(cfg.theta_init, dtype=float).reshape(-1))
        return SwarmState(0, x, theta)

    def _learning_step(self, k: int, theta: np.ndarray) -> np.ndarray:
        learning = self.config.learning
        g = theta @ learning.gram - learning.ctd
        if self._theta_noisy:
            g += self.theta_noise.next()
        out = theta - self.config.schedule.gamma(k) * g
        if not self._theta_free:
            out = np.stack([learning.theta_set.project(t) for t in out])
        return out

    def _decision_step(self, k: int, x: np.ndarray, theta_rows: np.ndarray):
        cfg = self.config
        v = self.topologies.weights(k) @ x
        g = cfg.problem.grads(v, theta_rows)
        if self._x_noisy:
            g += self.x_noise.next()
        return cfg.sets.project_each(v - cfg.schedule.alpha(k) * g), v

    def step(self, state: SwarmState) -> SwarmState:
        """Advance one synchronous round from epoch ``k`` to ``k + 1``."""
        k = state.k
        mode = self.mode
        if mode == "correctly_specified":
            x, v = self._decision_step(k, state.x, self._theta_star_rows)
            theta = state.theta
        elif mode == "sequential_baseline":
            learn = self.config.mode.learn_iters
            if k < learn:
                x, v = state.x, None
                theta = self._learning_step(k, state.theta)
                if k + 1 == learn:
                    self._theta_hat = theta.mean(axis=0)
                    theta = np.tile(self._theta_hat, (self.config.m, 1))
            else:
                x, v = self._decision_step(k, state.x, state.theta)
                theta = state.theta
        else:
            x, v = self._decision_step(k, state.x, state.theta)
            theta = self._learning_step(k, state.theta)
        return SwarmState(k + 1, x, theta, v)

    def _audit(self, state: SwarmState, prev: SwarmState | None, rec_z, counts: dict) -> str:
        cfg = self.config
        ref = self.reference
        out = []

        def mark(name, ok):
            if ok is None:
                out.append(f"{name}=skip")
                return
            counts.setdefault(name, [0, 0])
            counts[name][0] += 1
            if not ok:
                counts[name][1] += 1
            out.append(f"{name}={'ok' if ok else 'FAIL'}")

        W = self.topologies.weights(state.k)
        resid = audit.averaging_identity_residual(W, state.x, ref.x_star)
        scale = 1.0 + float(((state.x - ref.x_star) ** 2).sum())
        mark("L1", resid <= 1e-10 * scale)

        theta_moves = self.mode in ("misspecified_stochastic", "deterministic") or (
            self.mode == "sequential_baseline" and prev is not None
            and prev.k < cfg.mode.learn_iters - 1)
        noiseless = self.mode == "deterministic" or not self.theta_noise.active
        if prev is not None and theta_moves and noiseless:
            g = cfg.schedule.gamma(prev.k)
            if g <= self.constants.kappa / self.constants.R_theta ** 2:
                lhs, rhs = audit.theta_descent(prev.theta, state.theta, ref.theta_star, g,
                                               self.constants.kappa, self.constants.R_theta)
                mark("L3", lhs <= rhs + 1e-12)
            else:
                mark("L3", None)
        else:
            mark("L3", None)

        if self._interior is not None:
            lhs, rhs = audit.intersection_bound(state.x, rec_z, self.constants.D, self._interior[1])
            mark("L5", lhs <= rhs + 1e-12)
        else:
            mark("L5", None)

        after, before = audit.averaging_contracts(state.x, W @ state.x)
        mark("AC", after <= before + 1e-12)

        feasible = cfg.sets.contains_each(state.x, FEAS_TOL) and all(
            cfg.learning.theta_set.contains(t, FEAS_TOL) for t in state.theta)
        mark("FEAS", feasible)
        return ";".join(out)

    def _record(self, state, prev, counts) -> IterationRecord:
        cfg = self.config
        rec = make_record(state.k, cfg.schedule.alpha(state.k), cfg.schedule.gamma(state.k),
                          state.x, state.theta, cfg.problem, cfg.sets, self.reference)
        if cfg.audit:
            flags = self._audit(state, prev, rec.z, counts)
            rec.audit_flags = f"{flags};{rec.audit_flags}" if rec.audit_flags else flags
        return rec

    def run(self) -> RunTrace:
        cfg = self.config
        K, stride = cfg.iterations, cfg.stride
        counts: dict = {}
        state = self.initial_state()
        records = []
        prev = None
        try:
            records.append(self._record(state, None, counts))
            step = self.step
            for k in range(K):
                prev = state
                state = step(state)
                if state.k % stride == 0 or state.k == K:
                    records.append(self._record(state, prev, counts))
        except JointOptError as exc:
            partial = RunTrace(records, self._summary(records, counts), state, self.reference)
            raise RunError(state.k, exc, partial) from exc
        return RunTrace(records, self._summary(records, counts), state, self.reference)

    def _summary(self, records, counts) -> dict:
        out = {
            "mode": self.mode,
            "iterations": self.config.iterations,
            "seed": self.config.seed,
            "aggregate_singular": bool(self.reference.singular),
            "audit": {name: {"checks": c, "violations": v} for name, (c, v) in counts.items()},
        }
        if records:
            last = records[-1]
            out.update(
                final_k=last.k,
                final_consensus_gap=last.consensus_gap,
                final_theta_error=last.theta_error,
                final_opt_gap=last.opt_gap,
                final_x_error=last.x_error,
                final_lyapunov=last.lyapunov,
            )
        if self._theta_hat is not None:
            out["theta_hat_error"] = float(np.linalg.norm(self._theta_hat - self.reference.theta_star))
        return out


def run(config: RunConfig, reference: Reference | None = None) -> RunTrace:
    return Engine(config, reference).run()


def run_sequential_baseline(config: RunConfig, learn_iters: int | None = None,
                            reference: Reference | None = None) -> RunTrace:
    """Learn-then-optimise: ``learn_iters`` learning-only rounds, then the
    decision scheme with the averaged estimate frozen."""
    n_learn = learn_iters if learn_iters is not None else config.mode.learn_iters
    cfg = config.replace(mode=RunMode("sequential_baseline", n_learn))
    return Engine(cfg, reference).run()
