"""Per-iteration diagnostics recorded along a run."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .sets import project_intersection


def consensus_gap(x: np.ndarray) -> float:
    """Largest pairwise distance between agent iterates (rows of ``x``)."""
    x = np.asarray(x, dtype=float)
    if x.shape[0] < 2:
        return 0.0
    diff = x[:, None, :] - x[None, :, :]
    return float(np.sqrt((diff ** 2).sum(axis=-1).max()))


def theta_error(theta: np.ndarray, theta_ref) -> float:
    return float(((theta - theta_ref) ** 2).sum())


def lyapunov(x: np.ndarray, theta: np.ndarray, x_ref, theta_ref) -> float:
    return float(((x - x_ref) ** 2).sum() + ((theta - theta_ref) ** 2).sum())


def optimality_gap(x: np.ndarray, problem, sets, reference, proj_tol: float = 1e-10):
    """``f(z, theta*) - f*`` with ``z`` the projection of the agent mean.

    Returns ``(gap, z, clamped)``; small negative values caused by oracle
    inaccuracy are clamped to zero and reported through ``clamped``.
    """
    y = x.mean(axis=0)
    z = project_intersection(sets, y, proj_tol)
    gap = problem.value(z, reference.theta_star) - reference.f_star
    if gap < 0:
        return 0.0, z, True
    return gap, z, False


@dataclass
class IterationRecord:
    k: int
    alpha: float
    gamma: float
    consensus_gap: float
    theta_error: float
    lyapunov: float
    opt_gap: float
    x_error: float
    f_theta_bar: float
    audit_flags: str = ""
    y: np.ndarray = field(default=None, repr=False)
    z: np.ndarray = field(default=None, repr=False)


TRACE_COLUMNS = ("k", "alpha", "gamma", "consensus_gap", "theta_error", "lyapunov",
                 "opt_gap", "audit_flags", "x_error", "f_theta_bar")


def make_record(k, alpha, gamma, x, theta, problem, sets, reference, audit_flags=""):
    gap, z, clamped = optimality_gap(x, problem, sets, reference)
    flags = audit_flags
    if clamped:
        flags = f"{flags};clamp" if flags else "clamp"
    return IterationRecord(
        k=k,
        alpha=alpha,
        gamma=gamma,
        consensus_gap=consensus_gap(x),
        theta_error=theta_error(theta, reference.theta_star),
        lyapunov=lyapunov(x, theta, reference.x_star, reference.theta_star),
        opt_gap=gap,
        x_error=float(np.linalg.norm(x - reference.x_star, axis=1).max()),
        f_theta_bar=problem.value(z, theta.mean(axis=0)),
        audit_flags=flags,
        y=x.mean(axis=0),
        z=z,
    )
