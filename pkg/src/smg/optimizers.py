"""Shuffling Momentum Gradient and the baseline optimizers.

All optimizers share one epoch driver.  A driver call advances S independent
runs (one per permutation source / seed) in lockstep; each run sees exactly
the floating-point operations it would see alone, so ``*_run`` and
``*_run_many`` produce bitwise-identical traces for the same seed.
"""

from __future__ import annotations

import bisect
import itertools
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .problems import FiniteSumProblem
from .schedules import InfeasibleScheduleError, Schedule, feasible
from .shuffling import MASK64, PermutationSource, splitmix64, uniform_words

__all__ = [
    "DivergenceError",
    "EpochRecord",
    "EpochLog",
    "RunTrace",
    "smg_run",
    "smg_run_many",
    "shuffling_sgd_run",
    "shuffling_sgd_run_many",
    "sgdm_run",
    "sgdm_run_many",
    "adam_run",
    "adam_run_many",
    "iid_sgd_run",
    "iid_sgd_run_many",
    "sample_output_iterate",
    "draw_output_index",
    "output_rng",
]

# gradient logs are switched off by default once S*T*n*d exceeds this
LOG_LIMIT = 10_000_000
# all epoch iterates are retained by default while S*T*d stays below this
KEEP_LIMIT = 50_000_000
_IID_STREAM = 0x5EED_11D0
_OUTPUT_STREAM = 0x0A7_0A7


class DivergenceError(FloatingPointError):
    def __init__(self, t: int, i: int, seed: int | None = None):
        self.t, self.i, self.seed = t, i, seed
        super().__init__(f"non-finite iterate at epoch {t}, inner step {i} (seed {seed})")


@dataclass
class EpochRecord:
    t: int
    eta: float
    loss: float
    dist_sq: float | None
    time_ms: float


@dataclass
class EpochLog:
    """Everything one epoch touched, for the identity and bound checks."""

    t: int
    perm: np.ndarray       # (n,) 0-based component order
    iterates: np.ndarray   # (n+1, d): w_0 .. w_n
    grads: np.ndarray      # (n, d):   g_0 .. g_{n-1}
    anchor: np.ndarray     # m_0 of the epoch (zeros for non-SMG methods)
    average: np.ndarray    # v_n, the running gradient average at epoch end


@dataclass
class RunTrace:
    method: str
    seed: int
    w0: np.ndarray
    initial_loss: float
    initial_dist_sq: float | None
    records: list[EpochRecord] = field(default_factory=list)
    iterates: dict[int, np.ndarray] = field(default_factory=dict)  # epoch -> w~_t
    output_index: int | None = None  # epoch index t-1 of the returned iterate
    logs: list[EpochLog] | None = None

    @property
    def T(self) -> int:
        return len(self.records)

    @property
    def etas(self) -> np.ndarray:
        return np.array([r.eta for r in self.records])

    @property
    def losses(self) -> np.ndarray:
        """F(w~_t) for t = 0..T."""
        return np.array([self.initial_loss] + [r.loss for r in self.records])

    @property
    def dists(self) -> np.ndarray | None:
        if self.initial_dist_sq is None:
            return None
        return np.array([self.initial_dist_sq] + [r.dist_sq for r in self.records])

    @property
    def final_w(self) -> np.ndarray:
        return self.iterates[self.T]

    @property
    def output_w(self) -> np.ndarray | None:
        if self.output_index is None:
            return None
        return self.iterates[self.output_index]

    def iterate(self, t: int) -> np.ndarray:
        try:
            return self.iterates[t]
        except KeyError:
            raise KeyError(f"iterate of epoch {t} was not retained") from None


def output_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng([int(seed) & MASK64, _OUTPUT_STREAM])


def draw_output_index(etas, rng: np.random.Generator) -> int:
    """Draw t-1 with probability eta_t / sum(eta)."""
    cdf = list(itertools.accumulate(float(e) for e in etas))
    if not cdf or min(etas) <= 0:
        raise ValueError("need at least one positive learning rate")
    u = rng.random() * cdf[-1]
    return min(bisect.bisect_right(cdf, u), len(cdf) - 1)


def sample_output_iterate(trace: RunTrace, rng: np.random.Generator):
    """(epoch index, iterate) of w^_T drawn from the trace's learning rates."""
    k = draw_output_index(trace.etas, rng)
    return k, trace.iterate(k)


# --------------------------------------------------------------------------
# epoch driver


class _Batch:
    """Shared bookkeeping for S lockstep runs."""

    def __init__(self, problem, method, etas, seeds, w0, w_star, log, keep, hooks):
        self.problem = problem
        self.n, self.d = problem.n, problem.dim
        self.etas = np.asarray(etas, dtype=np.float64)
        self.T = self.etas.size
        self.seeds = list(seeds)
        S = len(self.seeds)
        w0 = np.asarray(w0, dtype=np.float64)
        if w0.shape != (self.d,):
            raise ValueError(f"w0 must have length {self.d}, got shape {w0.shape}")
        if not np.all(np.isfinite(w0)):
            raise ValueError("w0 must be finite")
        self.W = np.tile(w0, (S, 1))
        self.w_star = None if w_star is None else np.asarray(w_star, dtype=np.float64)
        if log is None:
            log = S * self.T * self.n * self.d <= LOG_LIMIT
        if keep is None:
            keep = S * self.T * self.d <= KEEP_LIMIT
        self.log, self.keep = log, keep
        self.hooks = list(hooks)
        loss0 = problem.full_value(w0)
        dist0 = self._dist(w0)
        self.traces = []
        for seed in self.seeds:
            k = draw_output_index(self.etas, output_rng(seed))
            tr = RunTrace(method, seed, w0.copy(), loss0, dist0, output_index=k,
                          logs=[] if log else None)
            tr.iterates[0] = w0.copy()
            self.traces.append(tr)

    def _dist(self, w):
        if self.w_star is None:
            return None
        diff = w - self.w_star
        return float(diff @ diff)

    def log_buffers(self):
        if not self.log:
            return None
        S = len(self.seeds)
        return (np.empty((S, self.n + 1, self.d)), np.empty((S, self.n, self.d)))

    def record(self, t, perms, W, elapsed_ms, bufs=None, anchor=None, average=None):
        S = len(self.seeds)
        for s, tr in enumerate(self.traces):
            w = W[s].copy()
            rec = EpochRecord(t, float(self.etas[t - 1]), self.problem.full_value(w),
                              self._dist(w), elapsed_ms / S)
            tr.records.append(rec)
            if self.keep or t == self.T or t == tr.output_index:
                tr.iterates[t] = w
            lg = None
            if bufs is not None:
                lg = EpochLog(t, perms[s].copy(), bufs[0][s].copy(), bufs[1][s].copy(),
                              np.zeros(self.d) if anchor is None else anchor[s].copy(),
                              np.zeros(self.d) if average is None else average[s].copy())
                tr.logs.append(lg)
            for hook in self.hooks:
                hook(tr, rec, lg)

    def run(self, perm_fn, epoch_fn, state):
        """Drive ``epoch_fn(t, eta, perms, state, check, bufs)`` over all epochs."""
        for t in range(1, self.T + 1):
            perms = perm_fn(t)
            saved = {k: (v.copy() if isinstance(v, np.ndarray) else v) for k, v in state.items()}
            bufs = self.log_buffers()
            start = time.perf_counter()
            with np.errstate(over="ignore", invalid="ignore"):
                epoch_fn(t, float(self.etas[t - 1]), perms, state, False, bufs)
            elapsed = (time.perf_counter() - start) * 1e3
            if not np.all(np.isfinite(state["W"])):
                state.clear()
                state.update(saved)
                with np.errstate(over="ignore", invalid="ignore"):
                    epoch_fn(t, float(self.etas[t - 1]), perms, state, True, bufs)
                raise DivergenceError(t, self.n - 1)  # pragma: no cover - replay raises first
            self.record(t, perms, state["W"], elapsed, bufs, state.get("anchor_log"),
                        state.get("average_log"))
        return self.traces


def _raise_if_diverged(W, t, i, seeds):
    if not np.all(np.isfinite(W)):
        s = int(np.flatnonzero(~np.all(np.isfinite(W), axis=1))[0])
        raise DivergenceError(t, i, seeds[s])


def _resolve_etas(schedule: Schedule, T: int | None) -> np.ndarray:
    if T is None:
        return schedule.etas
    if not 1 <= T <= schedule.T:
        raise ValueError(f"T={T} outside the schedule horizon 1..{schedule.T}")
    return schedule.etas[:T]


def _perm_fn(sources: Sequence[PermutationSource], n: int):
    for src in sources:
        if src.n != n:
            raise ValueError(f"permutation source has n={src.n}, problem has n={n}")

    def perms(t):
        return np.stack([src.permutation(t) for src in sources])
    return perms


# --------------------------------------------------------------------------
# SMG


def smg_run_many(problem: FiniteSumProblem, schedule: Schedule, beta: float,
                 sources: Sequence[PermutationSource], w0, T: int | None = None, *,
                 hooks: Sequence[Callable] = (), log_gradients: bool | None = None,
                 keep_iterates: bool | None = None, w_star=None, mu: float | None = None,
                 check_feasible: bool = True) -> list[RunTrace]:
    """Run Algorithm SMG once per permutation source.

    Epoch t starts from w~_{t-1} with anchor m_0 = m~_{t-1} (zero at t = 1)
    and, for i = 0..n-1 with g_i = grad f(w_i; pi(i+1)):

        m_{i+1} = beta m_0 + (1 - beta) g_i
        v_{i+1} = v_i + g_i / n
        w_{i+1} = w_i - (eta_t / n) m_{i+1}

    then w~_t = w_n and m~_t = v_n.
    """
    if not 0.0 <= beta < 1.0:
        raise ValueError(f"momentum must satisfy 0 <= beta < 1, got {beta}")
    if check_feasible:
        mu_ = problem.strong_convexity_mu if mu is None else mu
        feas = feasible(schedule, problem.smoothness_L, beta, mu_)
        if not feas.ok:
            raise InfeasibleScheduleError(
                f"max eta {feas.max_eta:.6g} exceeds 1/(2L sqrt(K)) = "
                f"{1 / (2 * problem.smoothness_L * math.sqrt(feas.K)):.6g}")
    w_star = problem.known_minimizer if w_star is None else w_star
    batch = _Batch(problem, "smg", _resolve_etas(schedule, T), [s.seed for s in sources],
                   w0, w_star, log_gradients, keep_iterates, hooks)
    n = problem.n
    grads = problem.grads
    one_minus = 1.0 - beta
    seeds = batch.seeds

    def epoch(t, eta, perms, st, check, bufs):
        W = st["W"]
        anchor = st["m"]
        step = eta / n
        beta_anchor = beta * anchor
        V = np.zeros_like(W)
        for i in range(n):
            G = grads(W, perms[:, i])
            if bufs is not None:
                bufs[0][:, i] = W
                bufs[1][:, i] = G
            M = beta_anchor + one_minus * G
            V += G / n
            W = W - step * M
            if check:
                _raise_if_diverged(W, t, i, seeds)
        if bufs is not None:
            bufs[0][:, n] = W
        st["W"] = W
        st["m"] = V
        st["anchor_log"] = anchor
        st["average_log"] = V

    state = {"W": batch.W, "m": np.zeros_like(batch.W)}
    return batch.run(_perm_fn(sources, n), epoch, state)


def smg_run(problem, schedule, beta, perms: PermutationSource, w0, T=None, hooks=(),
            **kwargs) -> RunTrace:
    return smg_run_many(problem, schedule, beta, [perms], w0, T, hooks=hooks, **kwargs)[0]


# --------------------------------------------------------------------------
# shuffling SGD (SMG with beta = 0)


def shuffling_sgd_run_many(problem, schedule: Schedule, sources, w0, T=None, *, hooks=(),
                           log_gradients=None, keep_iterates=None, w_star=None) -> list[RunTrace]:
    """w_{i+1} = w_i - (eta_t / n) grad f(w_i; pi(i+1))."""
    w_star = problem.known_minimizer if w_star is None else w_star
    batch = _Batch(problem, "ssgd", _resolve_etas(schedule, T), [s.seed for s in sources],
                   w0, w_star, log_gradients, keep_iterates, hooks)
    n = problem.n
    grads = problem.grads
    seeds = batch.seeds

    def epoch(t, eta, perms, st, check, bufs):
        W = st["W"]
        step = eta / n
        V = np.zeros_like(W)
        for i in range(n):
            G = grads(W, perms[:, i])
            if bufs is not None:
                bufs[0][:, i] = W
                bufs[1][:, i] = G
                V += G / n
            W = W - step * G
            if check:
                _raise_if_diverged(W, t, i, seeds)
        if bufs is not None:
            bufs[0][:, n] = W
        st["W"] = W
        st["average_log"] = V

    return batch.run(_perm_fn(sources, n), epoch, {"W": batch.W})


def shuffling_sgd_run(problem, schedule, perms, w0, T=None, **kwargs) -> RunTrace:
    return shuffling_sgd_run_many(problem, schedule, [perms], w0, T, **kwargs)[0]


# --------------------------------------------------------------------------
# heavy-ball SGD-M


def sgdm_run_many(problem, lr: float, beta: float, sources, w0, T: int, *, hooks=(),
                  log_gradients=None, keep_iterates=None, w_star=None) -> list[RunTrace]:
    """m_{i+1} = beta m_i + g_i, w_{i+1} = w_i - lr m_{i+1}; m carries across epochs.

    The trace reports eta_t = lr * n so that the per-step size is eta_t / n
    as for the shuffling methods.
    """
    if lr <= 0:
        raise ValueError("lr must be positive")
    if not 0.0 <= beta < 1.0:
        raise ValueError(f"momentum must satisfy 0 <= beta < 1, got {beta}")
    w_star = problem.known_minimizer if w_star is None else w_star
    n = problem.n
    batch = _Batch(problem, "sgdm", np.full(T, lr * n), [s.seed for s in sources], w0, w_star,
                   log_gradients, keep_iterates, hooks)
    grads = problem.grads
    seeds = batch.seeds

    def epoch(t, eta, perms, st, check, bufs):
        W, Mom = st["W"], st["mom"]
        for i in range(n):
            G = grads(W, perms[:, i])
            if bufs is not None:
                bufs[0][:, i] = W
                bufs[1][:, i] = G
            Mom = beta * Mom + G
            W = W - lr * Mom
            if check:
                _raise_if_diverged(W, t, i, seeds)
        if bufs is not None:
            bufs[0][:, n] = W
        st["W"], st["mom"] = W, Mom

    state = {"W": batch.W, "mom": np.zeros_like(batch.W)}
    return batch.run(_perm_fn(sources, n), epoch, state)


def sgdm_run(problem, lr, beta=0.9, perms=None, w0=None, T=1, **kwargs) -> RunTrace:
    return sgdm_run_many(problem, lr, beta, [perms], w0, T, **kwargs)[0]


# --------------------------------------------------------------------------
# Adam


def adam_run_many(problem, lr: float, beta1: float, beta2: float, eps: float, sources, w0,
                  T: int, *, hooks=(), log_gradients=None, keep_iterates=None,
                  w_star=None) -> list[RunTrace]:
    """Bias-corrected Adam applied in shuffled order; the step counter spans epochs."""
    if lr <= 0:
        raise ValueError("lr must be positive")
    w_star = problem.known_minimizer if w_star is None else w_star
    n = problem.n
    batch = _Batch(problem, "adam", np.full(T, lr * n), [s.seed for s in sources], w0, w_star,
                   log_gradients, keep_iterates, hooks)
    grads = problem.grads
    seeds = batch.seeds

    def epoch(t, eta, perms, st, check, bufs):
        W, m, v, k = st["W"], st["m"], st["v"], st["k"]
        for i in range(n):
            G = grads(W, perms[:, i])
            if bufs is not None:
                bufs[0][:, i] = W
                bufs[1][:, i] = G
            k += 1
            m = beta1 * m + (1.0 - beta1) * G
            v = beta2 * v + (1.0 - beta2) * (G * G)
            m_hat = m / (1.0 - beta1 ** k)
            v_hat = v / (1.0 - beta2 ** k)
            W = W - lr * m_hat / (np.sqrt(v_hat) + eps)
            if check:
                _raise_if_diverged(W, t, i, seeds)
        if bufs is not None:
            bufs[0][:, n] = W
        st.update(W=W, m=m, v=v, k=k)

    state = {"W": batch.W, "m": np.zeros_like(batch.W), "v": np.zeros_like(batch.W), "k": 0}
    return batch.run(_perm_fn(sources, n), epoch, state)


def adam_run(problem, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8, perms=None, w0=None, T=1,
             **kwargs) -> RunTrace:
    return adam_run_many(problem, lr, beta1, beta2, eps, [perms], w0, T, **kwargs)[0]


# --------------------------------------------------------------------------
# with-replacement SGD


def iid_indices(seed: int, t: int, n: int) -> np.ndarray:
    """n uniform draws from [0, n) for epoch t, independent of the shuffling stream."""
    words = uniform_words(splitmix64(seed ^ _IID_STREAM), t, n)
    return (words % np.uint64(n)).astype(np.int64)


def iid_sgd_run_many(problem, lr: float, seeds: Sequence[int], w0, T: int, *, hooks=(),
                     log_gradients=None, keep_iterates=None, w_star=None) -> list[RunTrace]:
    """Uniform with-replacement sampling, n steps of size lr per reported epoch."""
    if lr <= 0:
        raise ValueError("lr must be positive")
    w_star = problem.known_minimizer if w_star is None else w_star
    n = problem.n
    seeds = [int(s) & MASK64 for s in seeds]
    batch = _Batch(problem, "sgd", np.full(T, lr * n), seeds, w0, w_star, log_gradients,
                   keep_iterates, hooks)
    grads = problem.grads

    def epoch(t, eta, idx, st, check, bufs):
        W = st["W"]
        for i in range(n):
            G = grads(W, idx[:, i])
            if bufs is not None:
                bufs[0][:, i] = W
                bufs[1][:, i] = G
            W = W - lr * G
            if check:
                _raise_if_diverged(W, t, i, seeds)
        if bufs is not None:
            bufs[0][:, n] = W
        st["W"] = W

    def draws(t):
        return np.stack([iid_indices(s, t, n) for s in seeds])

    return batch.run(draws, epoch, {"W": batch.W})


def iid_sgd_run(problem, lr, seed, w0, T, **kwargs) -> RunTrace:
    return iid_sgd_run_many(problem, lr, [seed], w0, T, **kwargs)[0]
