"""Proof-side quantities along SMG trajectories and numerical bound checks.

For epoch t with permutation pi, iterates w_0..w_n and gradients g_0..g_{n-1}
(0-based component ``pi[j]`` at inner step j):

    D_j(a, b) = f(a; pi[j]) - f(b; pi[j]) - <grad f(b; pi[j]), a - b>
    C_t       = sum_j D_j(w*, w_j)                      (C_0 = 0)
    F_t       = beta E[C_{t-1}] + (1 - beta) E[C_t]
    A_i       = ||sum_{j<i} g_j||^2,  B_i = ||sum_{j>=i} g_j||^2,  i = 0..n

Expectations are seed averages.  Every check compares a seed-mean left side
against a right side built from seed means and accepts when
lhs <= rhs + |rhs| * 3 / sqrt(seeds).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .optimizers import EpochLog, RunTrace
from .problems import FiniteSumProblem
from .schedules import InfeasibleScheduleError, Schedule

__all__ = [
    "bregman",
    "sigma_star",
    "solve_optimum",
    "OptimumError",
    "EpochQuantities",
    "epoch_quantities",
    "trace_quantities",
    "TheorySnapshot",
    "epoch_snapshot",
    "TrajectoryStats",
    "trajectory_stats",
    "CheckResult",
    "lemma1_check",
    "lemma_B_checks",
    "theorem1_rhs",
    "theorem2_rhs",
    "corollary1_bound",
    "corollary3_bound",
    "expected_output_gap",
]


class OptimumError(ValueError):
    pass


def bregman(problem: FiniteSumProblem, i: int, w1, w2) -> float:
    """f(w1; i) - f(w2; i) - <grad f(w2; i), w1 - w2>."""
    w1 = np.asarray(w1, dtype=np.float64)
    w2 = np.asarray(w2, dtype=np.float64)
    g = problem.component_grad(w2, i)
    return problem.component_value(w1, i) - problem.component_value(w2, i) - float(g @ (w1 - w2))


def _bregman_rows(problem, idx, A, Bpts, gB):
    """D_{idx[k]}(A[k], Bpts[k]) for stacked points, with gB the gradients at Bpts."""
    fa = problem.values(A, idx)
    fb = problem.values(Bpts, idx)
    return fa - fb - ((A - Bpts) * gB).sum(axis=1)


def sigma_star(problem: FiniteSumProblem, w_star, tol: float = 1e-8) -> float:
    """(1/n) sum_i ||grad f(w*; i)||^2 at a certified optimum."""
    w_star = np.asarray(w_star, dtype=np.float64)
    G = problem.all_grads(w_star)
    res = float(np.linalg.norm(G.mean(axis=0)))
    if res > tol:
        raise OptimumError(f"||grad F(w*)|| = {res:.3e} exceeds {tol:.1e}")
    return float(np.mean((G * G).sum(axis=1)))


def solve_optimum(problem: FiniteSumProblem, tol: float = 1e-10, max_iter: int = 200_000,
                  w0=None) -> np.ndarray:
    """Minimizer of F by full-batch gradient descent with Armijo backtracking.

    Trial steps come from the Barzilai-Borwein rule, clipped to [1e-3/L, 1e3/L].
    Returns ``known_minimizer`` directly when the problem has one that
    already meets ``tol``.
    """
    known = problem.known_minimizer
    if known is not None and np.linalg.norm(problem.full_gradient(known)) <= tol:
        return np.array(known, dtype=np.float64)
    L = problem.smoothness_L
    w = np.zeros(problem.dim) if w0 is None else np.array(w0, dtype=np.float64)
    f = problem.full_value(w)
    g = problem.full_gradient(w)
    step = 1.0 / L
    for _ in range(max_iter):
        gn = float(g @ g)
        if math.sqrt(gn) <= tol:
            return w
        s = step
        while True:
            w_new = w - s * g
            f_new = problem.full_value(w_new)
            if f_new <= f - 0.5 * s * gn or s < 1e-14 / L:
                break
            s *= 0.5
        g_new = problem.full_gradient(w_new)
        dw, dg = w_new - w, g_new - g
        curv = float(dw @ dg)
        step = float(dw @ dw) / curv if curv > 0 else 1.0 / L
        step = min(max(step, 1e-3 / L), 1e3 / L)
        if f_new > f and s < 1e-14 / L:
            break  # no further decrease representable
        w, f, g = w_new, f_new, g_new
    res = float(np.linalg.norm(problem.full_gradient(w)))
    if res > tol:
        raise OptimumError(f"gradient descent stopped at ||grad F|| = {res:.3e} > {tol:.1e}")
    return w


# --------------------------------------------------------------------------
# per-seed quantities


@dataclass
class EpochQuantities:
    t: int
    C: float
    A: np.ndarray            # A_0 .. A_n
    B: np.ndarray            # B_0 .. B_n
    D: np.ndarray            # D_j(w*, w_j), j = 0..n-1
    breg_end: float          # sum_i D_i(w_n, w_i)
    breg_shift: float        # sum_i D_i^{(t-1)}(w_n^{(t)}, w_i^{(t-1)}); nan at t = 1
    average_sq: float        # ||v_n||^2 from the run's own accumulator


def epoch_quantities(problem: FiniteSumProblem, log: EpochLog, w_star,
                     prev: EpochLog | None = None) -> EpochQuantities:
    n = problem.n
    perm, Wi, G = log.perm, log.iterates, log.grads
    w_star = np.asarray(w_star, dtype=np.float64)
    Ws = np.broadcast_to(w_star, (n, problem.dim))
    D = _bregman_rows(problem, perm, Ws, Wi[:n], G)
    prefix = np.zeros((n + 1, problem.dim))
    np.cumsum(G, axis=0, out=prefix[1:])
    A = (prefix * prefix).sum(axis=1)
    tail = prefix[-1] - prefix
    B = (tail * tail).sum(axis=1)
    Wn = np.broadcast_to(Wi[n], (n, problem.dim))
    breg_end = float(_bregman_rows(problem, perm, Wn, Wi[:n], G).sum())
    if prev is None:
        breg_shift = math.nan
    else:
        breg_shift = float(_bregman_rows(problem, prev.perm, Wn, prev.iterates[:n],
                                         prev.grads).sum())
    return EpochQuantities(log.t, float(D.sum()), A, B, D, breg_end, breg_shift,
                           float(log.average @ log.average))


def trace_quantities(problem, trace: RunTrace, w_star) -> list[EpochQuantities]:
    if not trace.logs:
        raise ValueError("trace carries no gradient logs; rerun with log_gradients=True")
    out = []
    prev = None
    for lg in trace.logs:
        out.append(epoch_quantities(problem, lg, w_star, prev))
        prev = lg
    return out


@dataclass
class TheorySnapshot:
    t: int
    C: float                 # seed mean of C_t
    F: float                 # beta * C_{t-1} + (1 - beta) * C_t with seed means
    sigma_sq: float
    B: np.ndarray            # seed means of B_0..B_n
    A: np.ndarray            # seed means of A_0..A_n
    D_epoch: np.ndarray      # seed means of D_j(w*, w_j)


def epoch_snapshot(problem, logs: EpochLog | Sequence[EpochLog], w_star, beta: float,
                   prev_C: float = 0.0, sigma_sq: float | None = None) -> TheorySnapshot:
    """Seed-averaged quantities of one epoch; ``prev_C`` is E[C_{t-1}] (0 at t = 1)."""
    if isinstance(logs, EpochLog):
        logs = [logs]
    if not logs:
        raise ValueError("no epoch logs")
    qs = [epoch_quantities(problem, lg, w_star) for lg in logs]
    C = float(np.mean([q.C for q in qs]))
    if sigma_sq is None:
        sigma_sq = sigma_star(problem, w_star)
    return TheorySnapshot(qs[0].t, C, beta * prev_C + (1.0 - beta) * C, sigma_sq,
                          np.mean([q.B for q in qs], axis=0),
                          np.mean([q.A for q in qs], axis=0),
                          np.mean([q.D for q in qs], axis=0))


# --------------------------------------------------------------------------
# seed-averaged trajectory statistics


def _mean_se(x):
    x = np.asarray(x, dtype=np.float64)
    m = x.mean(axis=0)
    se = x.std(axis=0, ddof=1) / math.sqrt(x.shape[0]) if x.shape[0] > 1 else np.zeros_like(m)
    return m, se


@dataclass
class TrajectoryStats:
    """Seed means (and standard errors) of everything the checks consume.

    Epoch-indexed arrays have length T; ``dist``/``gap`` have length T + 1
    and start at epoch 0.
    """

    seeds: int
    n: int
    L: float
    beta: float
    sigma_sq: float
    etas: np.ndarray
    dist: np.ndarray
    dist_se: np.ndarray
    gap: np.ndarray
    gap_se: np.ndarray
    C: np.ndarray
    F: np.ndarray
    B0: np.ndarray
    sumB: np.ndarray
    breg_end: np.ndarray
    breg_shift: np.ndarray
    snapshots: list

    @property
    def T(self) -> int:
        return int(self.etas.size)


def trajectory_stats(problem, traces: Sequence[RunTrace], w_star, beta: float,
                     sigma_sq: float | None = None, f_star: float | None = None) -> TrajectoryStats:
    if not traces:
        raise ValueError("no traces")
    w_star = np.asarray(w_star, dtype=np.float64)
    if sigma_sq is None:
        sigma_sq = sigma_star(problem, w_star)
    if f_star is None:
        f_star = problem.full_value(w_star)
    # aggregate in sorted seed order so results do not depend on completion order
    traces = sorted(traces, key=lambda tr: tr.seed)
    per_seed = [trace_quantities(problem, tr, w_star) for tr in traces]
    T = len(per_seed[0])
    n = problem.n

    def stack(attr):
        return np.array([[getattr(q, attr) for q in qs] for qs in per_seed])

    C = stack("C")
    Cm = C.mean(axis=0)
    F = beta * np.concatenate([[0.0], Cm[:-1]]) + (1.0 - beta) * Cm
    B = np.array([[q.B for q in qs] for qs in per_seed])       # (S, T, n+1)
    A = np.array([[q.A for q in qs] for qs in per_seed])
    Dj = np.array([[q.D for q in qs] for qs in per_seed])
    dists = np.array([tr.dists for tr in traces])
    if np.any(np.isnan(dists.astype(float))):
        raise ValueError("traces lack distances to w*")
    gaps = np.array([tr.losses for tr in traces]) - f_star
    dist, dist_se = _mean_se(dists)
    gap, gap_se = _mean_se(gaps)
    snaps = [TheorySnapshot(t + 1, float(Cm[t]), float(F[t]), sigma_sq, B[:, t].mean(axis=0),
                            A[:, t].mean(axis=0), Dj[:, t].mean(axis=0)) for t in range(T)]
    return TrajectoryStats(
        seeds=len(traces), n=n, L=problem.smoothness_L, beta=beta, sigma_sq=sigma_sq,
        etas=traces[0].etas, dist=dist, dist_se=dist_se, gap=gap, gap_se=gap_se,
        C=Cm, F=F, B0=B[:, :, 0].mean(axis=0), sumB=B[:, :, :n].sum(axis=2).mean(axis=0),
        breg_end=stack("breg_end").mean(axis=0), breg_shift=stack("breg_shift").mean(axis=0),
        snapshots=snaps)


# --------------------------------------------------------------------------
# checks


@dataclass
class CheckResult:
    name: str
    t: int
    lhs: float
    rhs: float
    slack: float
    ok: bool


def _check(name, t, lhs, rhs, seeds):
    slack = abs(rhs) * 3.0 / math.sqrt(seeds)
    return CheckResult(name, t, float(lhs), float(rhs), float(slack), bool(lhs <= rhs + slack))


def lemma1_check(stats: TrajectoryStats, schedule: Schedule | None = None, K: float | None = None,
                 t: int | None = None) -> list[CheckResult]:
    """Both sides of the one-epoch key bound, for epoch ``t`` or every epoch.

    K defaults to 1 + alpha*beta with alpha from ``schedule`` (1 if omitted).
    Raises InfeasibleScheduleError when some eta_t exceeds 1/(2 L sqrt(K)).
    """
    beta, L, n, s2 = stats.beta, stats.L, stats.n, stats.sigma_sq
    etas = stats.etas
    if K is None:
        alpha = 1.0 if schedule is None else schedule.alpha
        K = 1.0 + alpha * beta
    if K < 1:
        raise ValueError("K must be >= 1")
    limit = 1.0 / (2.0 * L * math.sqrt(K))
    if np.any(etas > limit):
        raise InfeasibleScheduleError(
            f"max eta {etas.max():.6g} exceeds 1/(2L sqrt(K)) = {limit:.6g}")
    noise = 4.0 * L * s2 / (3.0 * n)
    epochs = range(1, stats.T + 1) if t is None else [t]
    out = []
    for k in epochs:
        eta = etas[k - 1]
        Ft = stats.F[k - 1]
        gap = stats.gap[k]
        ddiff = stats.dist[k - 1] - stats.dist[k]
        if k == 1:
            lhs = 2.0 * eta * (1.0 - beta) * gap
            rhs = (ddiff - 2.0 * eta / n * Ft + (1.0 - beta) * 2.0 * eta / n * Ft / K
                   + noise * (1.0 - beta) ** 2 * eta ** 3)
        else:
            eta_prev = etas[k - 2]
            lhs = 2.0 * eta * gap
            rhs = (ddiff - 2.0 * eta / n * Ft + 2.0 * eta / n * Ft / K
                   + 2.0 * beta * eta / n * stats.F[k - 2] / K
                   + noise * beta * (1.0 - beta) * eta * eta_prev ** 2
                   + noise * (1.0 - beta) ** 2 * eta ** 3)
        out.append(_check("lemma1", k, lhs, rhs, stats.seeds))
    return out


def lemma_B_checks(stats: TrajectoryStats) -> list[CheckResult]:
    """Per epoch: B_0 vs C_t, sum of B_i vs C_t, and the two Bregman-sum bounds."""
    beta, L, n, s2 = stats.beta, stats.L, stats.n, stats.sigma_sq
    etas = stats.etas
    out = []
    for k in range(1, stats.T + 1):
        i = k - 1
        eta = etas[i]
        out.append(_check("B0", k, stats.B0[i], 4.0 * n * L * stats.C[i], stats.seeds))
        out.append(_check("sumB", k, stats.sumB[i],
                          4.0 * n * n * L * stats.C[i] + 2.0 * n * n * s2 / 3.0, stats.seeds))
        out.append(_check("breg_end", k, stats.breg_end[i],
                          4.0 * L * L * eta ** 2 * stats.F[i]
                          + (2.0 / 3.0) * eta ** 2 * (1.0 - beta) * L * s2, stats.seeds))
        if k >= 2:
            eta_prev = etas[i - 1]
            out.append(_check("breg_shift", k, stats.breg_shift[i],
                              4.0 * L * L * eta ** 2 * stats.F[i]
                              + 4.0 * L * L * eta_prev ** 2 * stats.F[i - 1]
                              + (2.0 / 3.0) * eta_prev ** 2 * (1.0 - beta) * L * s2, stats.seeds))
    return out


# --------------------------------------------------------------------------
# bounds


def _etas(schedule, T):
    etas = schedule.etas if isinstance(schedule, Schedule) else np.asarray(schedule, float)
    if T is not None:
        if not 1 <= T <= etas.size:
            raise ValueError(f"T={T} outside 1..{etas.size}")
        etas = etas[:T]
    return etas


def theorem1_rhs(dist0_sq: float, schedule, beta: float, alpha: float, L: float,
                 sigma_sq: float, n: int, T: int | None = None) -> float:
    """Upper bound on E[F(w^_T) - F*] for convex components."""
    if not 0.0 <= beta < 1.0:
        raise ValueError(f"momentum must satisfy 0 <= beta < 1, got {beta}")
    etas = _etas(schedule, T)
    s1 = float(etas.sum())
    s3 = float((etas ** 3).sum())
    return (dist0_sq / (2.0 * (1.0 - beta) * s1)
            + 4.0 * L * sigma_sq * (1.0 + alpha * beta) / (6.0 * n * (1.0 - beta)) * s3 / s1)


def theorem2_rhs(dist0_sq: float, schedule, beta: float, alpha: float, mu: float, L: float,
                 sigma_sq: float, n: int, T: int | None = None) -> float:
    """Upper bound on E||w~_T - w*||^2 for a mu-strongly convex objective."""
    if mu <= 0:
        raise ValueError("mu must be positive")
    if not 0.0 <= beta < 1.0:
        raise ValueError(f"momentum must satisfy 0 <= beta < 1, got {beta}")
    etas = _etas(schedule, T)
    K = 1.0 + alpha * beta * (1.0 + mu * float(etas.max()))
    logs = np.log1p(mu * etas)
    # tail[j] = sum_{t=j}^{T} log(1 + mu eta_t)
    tail = np.cumsum(logs[::-1])[::-1]
    bias = dist0_sq / (1.0 - beta) * math.exp(-tail[0])
    noise = 4.0 * L * sigma_sq / (3.0 * n) * float(np.sum(etas ** 3 * (K - beta) * np.exp(-tail)))
    return bias + noise


def corollary1_bound(dist0_sq, gamma, beta, L, sigma_sq, n, T) -> float:
    """Closed form of the convex bound for eta = gamma n^(1/3) / T^(1/3)."""
    return (1.0 / (n ** (1.0 / 3.0) * T ** (2.0 / 3.0))
            * (dist0_sq / (2.0 * (1.0 - beta) * gamma)
               + 4.0 * L * sigma_sq * (1.0 + beta) * gamma ** 2 / (6.0 * (1.0 - beta))))


def corollary3_bound(dist0_sq, gamma, beta, mu, L, sigma_sq, n, T) -> float:
    """Closed form of the strongly convex bound for eta = gamma log(sqrt(n) T) / T.

    Valid when mu * eta <= 1.  The bias factor is (sqrt(n) T)^(-mu gamma / 2),
    which is what exp(-T mu eta / 2) equals for this eta.
    """
    lg = math.log(math.sqrt(n) * T)
    return (dist0_sq / (1.0 - beta) * math.exp(-mu * gamma * lg / 2.0)
            + 4.0 * L * sigma_sq * gamma ** 2 * lg ** 2 * (1.0 + beta) / (3.0 * mu * n * T ** 2))


def expected_output_gap(trace: RunTrace, f_star: float) -> float:
    """E[F(w^_T) - F*] over the output draw: sum_t eta_t (F(w~_{t-1}) - F*) / sum eta."""
    etas = trace.etas
    return float(etas @ (trace.losses[:-1] - f_star) / etas.sum())
