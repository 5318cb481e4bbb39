"""Epoch learning rates eta_t, t = 1..T, and their feasibility constraint.

A schedule is feasible for (L, beta, mu) when max_t eta_t <= 1/(2 L sqrt(K))
with K = 1 + alpha*beta (mu = 0) or K = 1 + alpha*beta*(1 + mu*max_t eta_t).
All schedules here are nonincreasing, so max_t eta_t = eta_1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

__all__ = [
    "Schedule",
    "constant",
    "constant_convex",
    "constant_strongly_convex",
    "exponential",
    "feasible",
    "Feasibility",
    "max_feasible_gamma",
    "InfeasibleScheduleError",
]


class InfeasibleScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class Schedule:
    kind: str
    etas: np.ndarray  # eta_1 .. eta_T
    alpha: float
    gamma: float | None = None
    rho: float | None = None
    eta0: float | None = None

    def __post_init__(self):
        etas = np.asarray(self.etas, dtype=np.float64)
        etas.setflags(write=False)
        object.__setattr__(self, "etas", etas)
        if etas.ndim != 1 or etas.size == 0:
            raise ValueError("a schedule needs at least one epoch")
        if not np.all(etas > 0):
            raise ValueError("learning rates must be positive")

    @property
    def T(self) -> int:
        return int(self.etas.size)

    @property
    def max_eta(self) -> float:
        return float(self.etas.max())

    def eta(self, t: int) -> float:
        """eta_t for 1-based epoch t."""
        return float(self.etas[t - 1])

    def scaled(self, factor: float) -> "Schedule":
        return Schedule(self.kind, self.etas * factor, self.alpha,
                        None if self.gamma is None else self.gamma * factor, self.rho,
                        None if self.eta0 is None else self.eta0 * factor)


def constant(T: int, eta: float) -> Schedule:
    return Schedule("constant", np.full(T, float(eta)), 1.0, eta0=float(eta))


def constant_convex(T: int, n: int, gamma: float) -> Schedule:
    """eta_t = gamma n^(1/3) / T^(1/3)."""
    if T < 1 or n < 1 or gamma <= 0:
        raise ValueError("need T, n >= 1 and gamma > 0")
    eta = gamma * n ** (1.0 / 3.0) / T ** (1.0 / 3.0)
    return Schedule("constant_convex", np.full(T, eta), 1.0, gamma=float(gamma), eta0=eta)


def constant_strongly_convex(T: int, n: int, gamma: float) -> Schedule:
    """eta_t = gamma log(sqrt(n) T) / T with the natural logarithm."""
    arg = math.sqrt(n) * T
    if arg <= 1:
        raise ValueError(f"log argument sqrt(n)*T = {arg} must exceed 1")
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    eta = gamma * math.log(arg) / T
    return Schedule("constant_strongly_convex", np.full(T, eta), 1.0, gamma=float(gamma), eta0=eta)


def exponential(T: int, eta0: float, rho: float) -> Schedule:
    """eta_t = eta0 * alpha^t with alpha = rho^(1/T).

    Built by repeated multiplication so that eta_t == alpha * eta_{t-1}
    holds exactly in floating point.
    """
    if not 0.0 < rho < 1.0:
        raise ValueError(f"rho must lie in (0, 1), got {rho}")
    if eta0 <= 0 or T < 1:
        raise ValueError("need eta0 > 0 and T >= 1")
    alpha = rho ** (1.0 / T)
    etas = np.empty(T)
    eta = eta0
    for t in range(T):
        eta = eta * alpha
        etas[t] = eta
    return Schedule("exponential", etas, alpha, rho=float(rho), eta0=float(eta0))


class Feasibility(NamedTuple):
    ok: bool
    K: float
    max_eta: float


def feasible(schedule: Schedule, L: float, beta: float, mu: float = 0.0) -> Feasibility:
    if not 0.0 <= beta < 1.0:
        raise ValueError(f"momentum must satisfy 0 <= beta < 1, got {beta}")
    if L <= 0:
        raise ValueError("L must be positive")
    if mu < 0:
        raise ValueError("mu must be nonnegative")
    max_eta = schedule.max_eta
    if mu == 0:
        K = 1.0 + schedule.alpha * beta
    else:
        K = 1.0 + schedule.alpha * beta * (1.0 + mu * max_eta)
    return Feasibility(bool(max_eta <= 1.0 / (2.0 * L * math.sqrt(K))), K, max_eta)


def max_feasible_gamma(make: Callable[[float], Schedule], L: float, beta: float,
                       mu: float = 0.0, gamma_hi: float = 1.0, rtol: float = 1e-12) -> float:
    """Largest gamma for which ``make(gamma)`` is feasible, by bisection.

    ``make`` must scale the learning rates monotonically in gamma.
    """
    def ok(g):
        return feasible(make(g), L, beta, mu).ok

    hi = gamma_hi
    while ok(hi):
        hi *= 2.0
    lo = hi / 2.0
    while not ok(lo):
        hi, lo = lo, lo / 2.0
        if lo < 1e-300:
            raise InfeasibleScheduleError("no feasible gamma found")
    while hi - lo > rtol * lo:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo
