"""Polynomially decaying stepsizes for the optimisation and learning updates.

``alpha_k = scale_alpha * (k + offset)**-a2`` drives the decision variables and
``gamma_k = scale_gamma * (k + offset)**-a1`` drives the parameter estimates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

DEFAULT_TRIPLE = (0.51, 0.9, 0.75)


@dataclass(frozen=True)
class StepsizeSchedule:
    a1: float = DEFAULT_TRIPLE[0]
    a2: float = DEFAULT_TRIPLE[1]
    tau: float = DEFAULT_TRIPLE[2]
    scale_alpha: float = 1.0
    scale_gamma: float = 1.0
    offset: int = 1

    def alpha(self, k: int) -> float:
        return self.scale_alpha * (k + self.offset) ** -self.a2

    def gamma(self, k: int) -> float:
        return self.scale_gamma * (k + self.offset) ** -self.a1

    def first_gamma_below(self, threshold: float) -> int:
        """Smallest ``k >= 0`` with ``gamma(k) <= threshold``."""
        k = max(0, math.ceil((self.scale_gamma / threshold) ** (1.0 / self.a1) - self.offset))
        # guard the rounding at the boundary
        while k > 0 and self.gamma(k - 1) <= threshold:
            k -= 1
        while self.gamma(k) > threshold:
            k += 1
        return k


def alpha(s: StepsizeSchedule, k: int) -> float:
    return s.alpha(k)


def gamma(s: StepsizeSchedule, k: int) -> float:
    return s.gamma(k)


def validate(s: StepsizeSchedule) -> list[str]:
    """Violated admissibility conditions, each citing the stepsize assumption."""
    report = []
    if not 0.0 < s.tau < 2.0:
        report.append(f"tau in (0, 2) violated: tau={s.tau} (Assumption 7)")
    if not s.a2 < 1.0:
        report.append(f"a2 < 1 violated: a2={s.a2} (Assumption 7)")
    if not s.a2 > s.a1:
        report.append(f"a2 > a1 violated: a1={s.a1}, a2={s.a2} (Assumption 7)")
    if not s.a1 > 0.5:
        report.append(f"a1 > 1/2 violated: a1={s.a1} (Assumption 7)")
    if not s.a2 * (2.0 - s.tau) > 1.0:
        report.append(f"a2*(2-tau) > 1 violated: a2*(2-tau)={s.a2 * (2.0 - s.tau):.6g} (Assumption 7)")
    if not s.a1 < s.tau * s.a2:
        report.append(f"a1 < tau*a2 violated: tau*a2={s.tau * s.a2:.6g} (Assumption 7)")
    if not (s.scale_alpha > 0 and s.scale_gamma > 0):
        report.append("stepsize scales must be positive")
    if s.offset < 1:
        report.append(f"offset must be a positive integer, got {s.offset}")
    return report


@dataclass
class AsymptoticsReport:
    horizon: int
    ratio_decreasing: bool
    ratio_first: float
    ratio_last: float
    sum_gamma: float
    sum_gamma_sq: float
    sum_alpha: float
    sum_alpha_2_minus_tau: float
    flags: list = field(default_factory=list)


def check_asymptotics(s: StepsizeSchedule, horizon: int) -> AsymptoticsReport:
    """Finite-horizon look at the summability and ratio conditions.

    The ratio ``alpha_k**tau / gamma_k`` is tabulated over ``[K/2, K]``; the
    partial sums are over ``k = 0..K-1``.
    """
    if horizon < 10:
        raise ValueError("horizon must be at least 10")
    k = np.arange(horizon, dtype=float)
    a = s.scale_alpha * (k + s.offset) ** -s.a2
    g = s.scale_gamma * (k + s.offset) ** -s.a1
    tail = slice(horizon // 2, horizon)
    ratio = a[tail] ** s.tau / g[tail]
    decreasing = bool(np.all(np.diff(ratio) < 0))
    flags = []
    if not decreasing:
        flags.append("alpha^tau/gamma is not decreasing over the tail")
    return AsymptoticsReport(
        horizon=horizon,
        ratio_decreasing=decreasing,
        ratio_first=float(ratio[0]),
        ratio_last=float(ratio[-1]),
        sum_gamma=float(g.sum()),
        sum_gamma_sq=float((g ** 2).sum()),
        sum_alpha=float(a.sum()),
        sum_alpha_2_minus_tau=float((a ** (2.0 - s.tau)).sum()),
        flags=flags,
    )
