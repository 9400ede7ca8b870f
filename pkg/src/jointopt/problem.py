"""Quadratic agent objectives, the learning metric, gradient oracles and constants.

Agent ``i`` holds ``f_i(x, theta) = 0.5 x'Q_i x + (B_i theta + b_i)'x`` with
``Q_i`` positive semidefinite. The shared learning metric is
``h(theta) = 0.5 ||C theta - d||^2`` over a closed convex set ``Theta``.
Gradient noise is additive and zero mean.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidArgument, NotStronglyConvex, OracleFailure
from .sets import Box, Ball, FullSpace, SetFamily, Simplex, project_intersection

PSD_FLOOR = -1e-10
# beyond this many coordinates box vertices are not enumerated
MAX_VERTEX_DIM = 12


@dataclass(frozen=True, eq=False)
class AgentObjective:
    Q: np.ndarray
    B: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        b = np.asarray(self.b, dtype=float).reshape(-1)
        n = b.size
        if Q.shape != (n, n) or B.shape[0] != n:
            raise InvalidArgument(f"objective shapes disagree: Q {Q.shape}, B {B.shape}, b {b.shape}")
        if not np.allclose(Q, Q.T, atol=1e-12):
            raise InvalidArgument("Q must be symmetric")
        if np.linalg.eigvalsh(Q).min() < PSD_FLOOR:
            raise InvalidArgument("Q must be positive semidefinite (convexity in x, Assumption 4)")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "b", b)

    @property
    def n(self) -> int:
        return self.b.size

    @property
    def p(self) -> int:
        return self.B.shape[1]

    def value(self, x, theta) -> float:
        return float(0.5 * x @ self.Q @ x + (self.B @ theta + self.b) @ x)

    def grad(self, x, theta) -> np.ndarray:
        return self.Q @ x + self.B @ theta + self.b


class ProblemSpec:
    """The ``m`` agent objectives, plus stacked copies for vectorised updates."""

    def __init__(self, objectives: Sequence[AgentObjective]):
        objectives = tuple(objectives)
        if not objectives:
            raise InvalidArgument("problem needs at least one agent")
        shapes = {(o.n, o.p) for o in objectives}
        if len(shapes) != 1:
            raise InvalidArgument(f"agent objectives have mixed dimensions {sorted(shapes)}")
        self.objectives = objectives
        self.n, self.p = shapes.pop()
        self.Q = np.stack([o.Q for o in objectives])
        self.B = np.stack([o.B for o in objectives])
        self.b = np.stack([o.b for o in objectives])

    @property
    def m(self) -> int:
        return len(self.objectives)

    def value(self, x, theta) -> float:
        """Aggregate objective at a common point."""
        return sum(o.value(x, theta) for o in self.objectives)

    def grad(self, x, theta) -> np.ndarray:
        return self.Q.sum(axis=0) @ x + self.B.sum(axis=0) @ theta + self.b.sum(axis=0)

    def grads(self, xs: np.ndarray, thetas: np.ndarray) -> np.ndarray:
        """Row ``i``: gradient of ``f_i`` at ``(xs[i], thetas[i])``."""
        g = np.matmul(self.Q, xs[:, :, None])[:, :, 0]
        g += np.matmul(self.B, thetas[:, :, None])[:, :, 0]
        g += self.b
        return g

    def aggregate_hessian(self) -> np.ndarray:
        return self.Q.sum(axis=0)

    def is_strongly_convex(self, rtol: float = 1e-10) -> bool:
        ev = np.linalg.eigvalsh(self.aggregate_hessian())
        return bool(ev[0] > rtol * max(ev[-1], 1.0))


@dataclass(frozen=True, eq=False)
class LearningSpec:
    C: np.ndarray
    d: np.ndarray
    theta_set: object = None

    def __post_init__(self):
        C = np.atleast_2d(np.asarray(self.C, dtype=float))
        d = np.asarray(self.d, dtype=float).reshape(-1)
        if C.shape[0] != d.size:
            raise InvalidArgument(f"learning shapes disagree: C {C.shape}, d {d.shape}")
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "d", d)
        if self.theta_set is None:
            object.__setattr__(self, "theta_set", FullSpace(C.shape[1]))
        if self.theta_set.dim != C.shape[1]:
            raise InvalidArgument("Theta dimension does not match C")
        ev = np.linalg.eigvalsh(C.T @ C)
        if ev[0] <= 1e-12 * max(ev[-1], 1.0):
            raise NotStronglyConvex(
                "C is rank deficient; learning metric is not strongly convex (Assumption 5)")
        object.__setattr__(self, "_gram", C.T @ C)
        object.__setattr__(self, "_ctd", C.T @ d)
        object.__setattr__(self, "_ev", ev)

    @property
    def p(self) -> int:
        return self.C.shape[1]

    @property
    def kappa(self) -> float:
        return float(self._ev[0])

    @property
    def R_theta(self) -> float:
        return float(self._ev[-1])

    @property
    def gram(self) -> np.ndarray:
        return self._gram

    @property
    def ctd(self) -> np.ndarray:
        return self._ctd

    def value(self, theta) -> float:
        r = self.C @ theta - self.d
        return float(0.5 * r @ r)

    def grad(self, theta) -> np.ndarray:
        return self.C.T @ (self.C @ theta - self.d)


@dataclass(frozen=True)
class NoiseModel:
    """Additive zero-mean gradient noise, independent per coordinate."""

    kind: str = "none"
    sigma: float = 0.0
    half_width: float = 0.0

    def __post_init__(self):
        if self.kind not in ("none", "gaussian", "uniform"):
            raise InvalidArgument(f"unknown noise kind {self.kind!r}")
        if self.sigma < 0 or self.half_width < 0:
            raise InvalidArgument("noise scale must be nonnegative")

    @classmethod
    def gaussian(cls, sigma: float) -> "NoiseModel":
        return cls("gaussian", sigma=sigma)

    @classmethod
    def uniform(cls, half_width: float) -> "NoiseModel":
        return cls("uniform", half_width=half_width)

    @property
    def is_zero(self) -> bool:
        return (self.kind == "none" or (self.kind == "gaussian" and self.sigma == 0)
                or (self.kind == "uniform" and self.half_width == 0))

    def second_moment(self, dim: int) -> float:
        """``E||w||^2`` for a ``dim``-dimensional draw."""
        if self.kind == "gaussian":
            return dim * self.sigma ** 2
        if self.kind == "uniform":
            return dim * self.half_width ** 2 / 3.0
        return 0.0

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        if self.kind == "gaussian":
            return rng.normal(0.0, self.sigma, size)
        if self.kind == "uniform":
            return rng.uniform(-self.half_width, self.half_width, size)
        return np.zeros(size)


def _check(vec, size: int, what: str) -> np.ndarray:
    vec = np.asarray(vec, dtype=float).reshape(-1)
    if vec.size != size:
        raise InvalidArgument(f"{what} has length {vec.size}, expected {size}")
    return vec


def grad_x(obj: AgentObjective, x, theta) -> np.ndarray:
    return obj.grad(_check(x, obj.n, "x"), _check(theta, obj.p, "theta"))


def sample_grad_x(obj: AgentObjective, x, theta, noise: NoiseModel,
                  rng: np.random.Generator) -> np.ndarray:
    g = grad_x(obj, x, theta)
    if noise.kind == "none":
        return g
    return g + noise.sample(rng, g.size)


def grad_h(spec: LearningSpec, theta) -> np.ndarray:
    return spec.grad(_check(theta, spec.p, "theta"))


def sample_grad_h(spec: LearningSpec, theta, noise: NoiseModel,
                  rng: np.random.Generator) -> np.ndarray:
    g = grad_h(spec, theta)
    if noise.kind == "none":
        return g
    return g + noise.sample(rng, g.size)


@dataclass(frozen=True)
class ProblemConstants:
    L_theta: float
    kappa: float
    R_theta: float
    D: float
    S: float
    G: float
    nu: float
    nu_theta: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def _max_affine_norm(Q: np.ndarray, c: np.ndarray, s) -> float:
    """Upper bound on ``max ||Q x + c||`` over the set ``s`` (exact for polytopes)."""
    if isinstance(s, Simplex) or (isinstance(s, Box) and s.dim <= MAX_VERTEX_DIM):
        pts = s.extreme_points()
        return float(np.linalg.norm(pts @ Q.T + c, axis=1).max())
    if isinstance(s, Box):
        mid = 0.5 * (s.lower + s.upper)
        half = 0.5 * np.linalg.norm(s.upper - s.lower)
        return float(np.linalg.norm(Q @ mid + c) + np.linalg.norm(Q, 2) * half)
    if isinstance(s, Ball):
        return float(np.linalg.norm(Q @ s.center + c) + np.linalg.norm(Q, 2) * s.radius)
    raise InvalidArgument(f"agent sets must be compact, got {type(s).__name__}")


def compute_constants(problem: ProblemSpec, sets: SetFamily, learning: LearningSpec,
                      x_noise: NoiseModel | None = None,
                      theta_noise: NoiseModel | None = None,
                      theta_star=None) -> ProblemConstants:
    if theta_star is None:
        theta_star = solve_theta(learning)
    theta_star = _check(theta_star, problem.p, "theta_star")
    x_noise = x_noise or NoiseModel()
    theta_noise = theta_noise or NoiseModel()
    for s in sets.sets:
        if not s.compact:
            raise InvalidArgument("agent sets must be compact (Assumption 3(a))")
    L = max(float(np.linalg.norm(o.B, 2)) for o in problem.objectives)
    D = max(s.diameter() for s in sets.sets)
    # ||grad|| is convex in x, so its max over the hull of the union is attained on a member set
    S = 0.0
    G = 0.0
    for o in problem.objectives:
        c = o.B @ theta_star + o.b
        S = max(S, max(_max_affine_norm(o.Q, c, s) for s in sets.sets))
        if sets.intersection_box is not None:
            G = max(G, _max_affine_norm(o.Q, c, sets.intersection_box))
    if sets.intersection_box is None:
        G = S
    return ProblemConstants(
        L_theta=L, kappa=learning.kappa, R_theta=learning.R_theta, D=D, S=S, G=G,
        nu=float(np.sqrt(x_noise.second_moment(problem.n))),
        nu_theta=float(np.sqrt(theta_noise.second_moment(learning.p))),
    )


@dataclass(frozen=True, eq=False)
class Reference:
    x_star: np.ndarray
    theta_star: np.ndarray
    f_star: float
    tol: float
    singular: bool


def solve_theta(learning: LearningSpec, tol: float = 1e-8, method: str = "auto",
                start=None, max_iter: int = 1_000_000) -> np.ndarray:
    """Minimiser of the learning metric over ``Theta``.

    ``method="closed"`` solves the normal equations (FullSpace only);
    ``"iterative"`` runs projected gradient with step ``1/R_theta``.
    """
    if method == "auto":
        method = "closed" if isinstance(learning.theta_set, FullSpace) else "iterative"
    if method == "closed":
        if not isinstance(learning.theta_set, FullSpace):
            raise InvalidArgument("closed-form learning solution requires Theta = FullSpace")
        return np.linalg.solve(learning.gram, learning.ctd)
    step = 1.0 / learning.R_theta
    th = learning.theta_set.project(np.zeros(learning.p) if start is None else _check(start, learning.p, "start"))
    for _ in range(max_iter):
        nxt = learning.theta_set.project(th - step * (learning.gram @ th - learning.ctd))
        if np.linalg.norm(nxt - th) < tol * 1e-2:
            return nxt
        th = nxt
    raise OracleFailure(f"learning oracle did not converge in {max_iter} iterations")


def solve_x(problem: ProblemSpec, sets: SetFamily, theta, tol: float = 1e-8, start=None,
            max_iter: int = 1_000_000) -> np.ndarray:
    """Centralised projected gradient on the aggregate objective over the intersection."""
    H = problem.aggregate_hessian()
    c = problem.B.sum(axis=0) @ theta + problem.b.sum(axis=0)
    lip = float(np.linalg.eigvalsh(H)[-1])
    proj_tol = tol * 1e-3
    x = project_intersection(sets, np.zeros(problem.n) if start is None else start, proj_tol)
    for k in range(max_iter):
        step = 1.0 / lip if lip > 1e-14 else 1.0 / np.sqrt(k + 1.0)
        nxt = project_intersection(sets, x - step * (H @ x + c), proj_tol)
        if np.linalg.norm(nxt - x) < tol * 1e-2:
            return nxt
        x = nxt
    raise OracleFailure(f"optimisation oracle did not converge in {max_iter} iterations")


def solve_reference(problem: ProblemSpec, sets: SetFamily, learning: LearningSpec,
                    tol: float = 1e-8, x_start=None) -> Reference:
    theta_star = solve_theta(learning, tol)
    x_star = solve_x(problem, sets, theta_star, tol, start=x_start)
    f_star = problem.value(x_star, theta_star)
    return Reference(x_star, theta_star, f_star, tol, not problem.is_strongly_convex())


# random instance families, all reproducible from an integer seed

def random_problem(m: int, n: int, p: int, seed: int = 0, singular: int = 0,
                   q_scale: float = 1.0, coupling: float = 1.0,
                   b_scale: float = 1.0) -> ProblemSpec:
    """Random PSD quadratics; the first ``singular`` agents get rank-deficient ``Q``."""
    rng = np.random.default_rng([11, seed, m, n, p])
    objs = []
    for i in range(m):
        rank = n - 1 if i < singular else n
        M = rng.standard_normal((n, rank))
        Q = q_scale * (M @ M.T) / n
        B = coupling * rng.standard_normal((n, p)) / np.sqrt(p)
        b = b_scale * rng.standard_normal(n)
        objs.append(AgentObjective(0.5 * (Q + Q.T), B, b))
    return ProblemSpec(objs)


def random_learning(p: int, seed: int = 0, rows: int | None = None,
                    spread: tuple[float, float] = (1.0, 1.4),
                    theta_set=None) -> LearningSpec:
    """``C`` with singular values in ``spread`` so ``kappa >= spread[0]**2``."""
    rng = np.random.default_rng([12, seed, p])
    rows = rows or p + 1
    U, _ = np.linalg.qr(rng.standard_normal((rows, p)))
    V, _ = np.linalg.qr(rng.standard_normal((p, p)))
    s = np.sort(rng.uniform(*spread, size=p))
    C = U @ np.diag(s) @ V.T
    d = rng.standard_normal(rows)
    return LearningSpec(C, d, theta_set)


def random_box_family(m: int, n: int, seed: int = 0, center_scale: float = 0.5,
                      half_range: tuple[float, float] = (0.5, 1.5)) -> SetFamily:
    """Boxes around a common centre, so the intersection has nonempty interior."""
    rng = np.random.default_rng([13, seed, m, n])
    c = center_scale * rng.standard_normal(n)
    boxes = []
    for _ in range(m):
        lo = c - rng.uniform(*half_range, size=n)
        up = c + rng.uniform(*half_range, size=n)
        boxes.append(Box(lo, up))
    return SetFamily(boxes)
