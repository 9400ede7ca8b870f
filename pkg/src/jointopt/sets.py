"""Convex sets with exact Euclidean projections, and intersections of them."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    ConvergenceFailure,
    EmptyIntersection,
    InfeasibleInterior,
    InvalidArgument,
    UnboundedSet,
    UnsupportedFeature,
)

log = logging.getLogger(__name__)

DEFAULT_MAX_SWEEPS = 10_000


def _vec(p) -> np.ndarray:
    return np.asarray(p, dtype=float).reshape(-1)


def _check_dim(s, p: np.ndarray) -> None:
    if p.shape != (s.dim,):
        raise InvalidArgument(f"point of shape {p.shape} does not match set dimension {s.dim}")


@dataclass(frozen=True, eq=False)
class Box:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo, up = _vec(self.lower), _vec(self.upper)
        if lo.shape != up.shape:
            raise InvalidArgument("box bounds have different lengths")
        if (lo > up).any():
            raise InvalidArgument("box lower bound exceeds upper bound")
        if not (np.isfinite(lo).all() and np.isfinite(up).all()):
            raise InvalidArgument("box bounds must be finite")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", up)

    compact = True

    @property
    def dim(self) -> int:
        return self.lower.size

    def project(self, p):
        return np.minimum(np.maximum(p, self.lower), self.upper)

    def diameter(self) -> float:
        return float(np.linalg.norm(self.upper - self.lower))

    def extreme_points(self) -> np.ndarray:
        corners = itertools.product(*zip(self.lower, self.upper))
        return np.array(list(corners), dtype=float)

    def contains(self, p, tol: float = 1e-10) -> bool:
        return bool((p >= self.lower - tol).all() and (p <= self.upper + tol).all())


@dataclass(frozen=True, eq=False)
class Ball:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", _vec(self.center))
        if not self.radius > 0:
            raise InvalidArgument(f"ball radius must be positive, got {self.radius}")
        object.__setattr__(self, "radius", float(self.radius))

    compact = True

    @property
    def dim(self) -> int:
        return self.center.size

    def project(self, p):
        d = p - self.center
        r = np.linalg.norm(d)
        if r <= self.radius:
            return np.array(p, dtype=float)
        return self.center + d * (self.radius / r)

    def diameter(self) -> float:
        return 2.0 * self.radius

    def contains(self, p, tol: float = 1e-10) -> bool:
        return bool(np.linalg.norm(p - self.center) <= self.radius + tol)


@dataclass(frozen=True, eq=False)
class Simplex:
    """``{x >= 0 : sum(x) = scale}`` in ``dim`` coordinates."""

    scale: float
    dim: int

    def __post_init__(self):
        if not self.scale > 0:
            raise InvalidArgument(f"simplex scale must be positive, got {self.scale}")
        if self.dim < 1:
            raise InvalidArgument("simplex dimension must be at least 1")
        object.__setattr__(self, "scale", float(self.scale))

    compact = True

    def project(self, p):
        # sort-and-threshold projection
        u = np.sort(p)[::-1]
        css = np.cumsum(u) - self.scale
        ind = np.arange(1, self.dim + 1)
        rho = np.flatnonzero(u - css / ind > 0)[-1]
        shift = css[rho] / (rho + 1.0)
        return np.maximum(p - shift, 0.0)

    def diameter(self) -> float:
        return self.scale * np.sqrt(2.0) if self.dim > 1 else 0.0

    def extreme_points(self) -> np.ndarray:
        return self.scale * np.eye(self.dim)

    def contains(self, p, tol: float = 1e-10) -> bool:
        return bool((p >= -tol).all() and abs(p.sum() - self.scale) <= tol)


@dataclass(frozen=True, eq=False)
class FullSpace:
    dim: int

    compact = False

    def project(self, p):
        return np.array(p, dtype=float)

    def diameter(self) -> float:
        raise UnboundedSet("FullSpace has no finite diameter")

    def contains(self, p, tol: float = 1e-10) -> bool:
        return True


ConvexSet = Box | Ball | Simplex | FullSpace


def project(s: ConvexSet, p) -> np.ndarray:
    p = _vec(p)
    _check_dim(s, p)
    return s.project(p)


def diameter(s: ConvexSet) -> float:
    return s.diameter()


def dykstra(sets: Sequence[ConvexSet], p, tol: float = 1e-10,
            max_sweeps: int = DEFAULT_MAX_SWEEPS) -> np.ndarray:
    """Projection of ``p`` onto the intersection of ``sets`` by Dykstra's method.

    Stops once a full sweep moves the iterate by less than ``tol`` and the
    iterate is within ``tol`` of every member set.
    """
    x = _vec(p).copy()
    increments = [np.zeros_like(x) for _ in sets]
    residual = np.inf
    for _ in range(max_sweeps):
        start = x
        for i, s in enumerate(sets):
            y = s.project(x + increments[i])
            increments[i] = x + increments[i] - y
            x = y
        change = np.linalg.norm(x - start)
        infeas = max(np.linalg.norm(x - s.project(x)) for s in sets)
        residual = max(change, infeas)
        if residual < tol:
            return x
    raise ConvergenceFailure(f"Dykstra did not converge in {max_sweeps} sweeps", residual)


class SetFamily:
    """One constraint set per agent; the intersection must be nonempty."""

    def __init__(self, sets: Sequence[ConvexSet], check_tol: float = 1e-8):
        sets = tuple(sets)
        if not sets:
            raise InvalidArgument("set family needs at least one set")
        dims = {s.dim for s in sets}
        if len(dims) != 1:
            raise InvalidArgument(f"member sets have different dimensions {sorted(dims)}")
        self.sets = sets
        self.dim = dims.pop()
        self.is_box_family = all(isinstance(s, Box) for s in sets)
        self.intersection_box = None
        if self.is_box_family:
            lo = np.max([s.lower for s in sets], axis=0)
            up = np.min([s.upper for s in sets], axis=0)
            if (lo > up).any():
                raise EmptyIntersection(
                    "intersection of the agent sets is empty (Assumption 3(b))")
            self.intersection_box = Box(lo, up)
            self._lower = np.stack([s.lower for s in sets])
            self._upper = np.stack([s.upper for s in sets])
        else:
            self._check_nonempty(check_tol)

    def _check_nonempty(self, tol: float) -> None:
        # alternating projections converge to a common point iff one exists
        x = np.zeros(self.dim)
        for _ in range(DEFAULT_MAX_SWEEPS):
            prev = x
            for s in self.sets:
                x = s.project(x)
            if np.linalg.norm(x - prev) < tol * 1e-2:
                break
        gap = max(np.linalg.norm(x - s.project(x)) for s in self.sets)
        if gap > tol:
            raise EmptyIntersection(
                f"intersection of the agent sets is empty (Assumption 3(b)); gap {gap:.3e}")

    def __len__(self) -> int:
        return len(self.sets)

    def __getitem__(self, i: int) -> ConvexSet:
        return self.sets[i]

    def project_each(self, points: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
        """Row ``i`` of ``points`` projected onto set ``i``."""
        if self.is_box_family:
            out = np.maximum(points, self._lower, out=out)
            return np.minimum(out, self._upper, out=out)
        res = np.stack([s.project(p) for s, p in zip(self.sets, points)])
        if out is not None:
            out[...] = res
            return out
        return res

    def contains_each(self, points: np.ndarray, tol: float = 1e-10) -> bool:
        return all(s.contains(p, tol) for s, p in zip(self.sets, points))


def project_intersection(f: SetFamily, p, tol: float = 1e-10,
                         max_sweeps: int = DEFAULT_MAX_SWEEPS,
                         force_iterative: bool = False) -> np.ndarray:
    p = _vec(p)
    if p.shape != (f.dim,):
        raise InvalidArgument(f"point of shape {p.shape} does not match family dimension {f.dim}")
    if f.is_box_family and not force_iterative:
        return f.intersection_box.project(p)
    if len(f.sets) == 1 and not force_iterative:
        return f.sets[0].project(p)
    return dykstra(f.sets, p, tol, max_sweeps)


def interior_ball(f: SetFamily) -> tuple[np.ndarray, float]:
    """Centre and radius of a ball inside the intersection (box families only)."""
    if not f.is_box_family:
        raise UnsupportedFeature("interior_ball is implemented for box families only")
    box = f.intersection_box
    center = 0.5 * (box.lower + box.upper)
    delta = 0.5 * float(np.min(box.upper - box.lower))
    if not delta > 0:
        raise InfeasibleInterior(
            "intersection has empty interior; interior-point condition fails (Assumption 6)")
    return center, delta


def lemma_interior_or_none(f: SetFamily):
    """``interior_ball`` result, or ``None`` with a logged reason when unavailable."""
    try:
        return interior_ball(f)
    except (UnsupportedFeature, InfeasibleInterior) as exc:
        log.info("intersection-distance bound check disabled: %s", exc)
        return None
