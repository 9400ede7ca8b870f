"""Executable checks of the iterate relations that hold pathwise.

Each check returns ``(lhs, rhs)`` or a residual so callers decide the slack.
"""

from __future__ import annotations

import numpy as np

from .metrics import consensus_gap


def averaging_identity(weights: np.ndarray, points: np.ndarray, c) -> tuple[float, float]:
    """Both sides of the convex-combination identity for one weight vector.

    ``||sum l_j y_j - c||^2`` against
    ``sum l_j ||y_j - c||^2 - 0.5 sum_j sum_l l_j l_l ||y_j - y_l||^2``.
    """
    lam = np.asarray(weights, dtype=float)
    y = np.asarray(points, dtype=float)
    lhs = float(((lam @ y - c) ** 2).sum())
    spread = ((y[:, None, :] - y[None, :, :]) ** 2).sum(axis=-1)
    rhs = float(lam @ ((y - c) ** 2).sum(axis=1) - 0.5 * lam @ spread @ lam)
    return lhs, rhs


def averaging_identity_residual(W: np.ndarray, points: np.ndarray, c) -> float:
    """Worst absolute gap of the identity over all rows of ``W``."""
    return max(abs(l - r) for l, r in (averaging_identity(row, points, c) for row in W))


def intersection_bound(x: np.ndarray, z: np.ndarray, D: float, delta: float) -> tuple[float, float]:
    """Summed distance of the agents to ``z`` against ``m(1 + mD/delta)`` times the spread."""
    m = x.shape[0]
    lhs = float(np.linalg.norm(x - z, axis=1).sum())
    rhs = m * (1.0 + m * D / delta) * consensus_gap(x)
    return lhs, rhs


def theta_descent(theta_prev: np.ndarray, theta_next: np.ndarray, theta_star, gamma: float,
                  kappa: float, R_theta: float) -> tuple[float, float]:
    """Noiseless learning-step contraction: ``E_{k+1}`` against ``(1-2g k+g^2R^2) E_k``."""
    before = float(((theta_prev - theta_star) ** 2).sum())
    after = float(((theta_next - theta_star) ** 2).sum())
    return after, (1.0 - 2.0 * gamma * kappa + gamma ** 2 * R_theta ** 2) * before


def averaging_contracts(x: np.ndarray, v: np.ndarray) -> tuple[float, float]:
    return consensus_gap(v), consensus_gap(x)
