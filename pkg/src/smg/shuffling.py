"""Per-epoch permutations and sampling-without-replacement statistics.

Permutations are produced by a Fisher-Yates shuffle whose random words come
from SplitMix64 (Steele, Lea & Flood 2014) used in counter mode:

    key(seed, t) = mix64(mix64(seed) + t * GAMMA)
    u_k          = mix64(key + (k + 1) * GAMMA),   k = 0, 1, ...

with GAMMA = 0x9E3779B97F4A7C15 and the standard SplitMix64 finalizer
``mix64``.  Step k of the shuffle swaps position i = n-1-k with position
``u_k mod (i + 1)``.  Because the stream for epoch t depends only on
(seed, t), epochs can be generated in any order or in parallel and the
result is bit-for-bit identical on every platform.  Indices are 0-based.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

__all__ = [
    "Strategy",
    "PermutationSource",
    "next_permutation",
    "splitmix64",
    "uniform_words",
    "WithoutReplacementStats",
    "without_replacement_stats",
    "TailBoundCheck",
    "tail_gradient_bound_check",
]

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def splitmix64(z):
    """SplitMix64 finalizer on a uint64 array (or Python int)."""
    if isinstance(z, int):
        z &= MASK64
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)
    z = np.asarray(z, dtype=np.uint64)
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def _stream_key(seed: int, counter: int) -> int:
    return splitmix64((splitmix64(seed) + counter * GAMMA) & MASK64)


def uniform_words(seed: int, counter: int, count: int) -> np.ndarray:
    """``count`` 64-bit words of the counter-mode stream for (seed, counter)."""
    key = np.uint64(_stream_key(seed, counter))
    k = np.arange(1, count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return splitmix64(key + k * np.uint64(GAMMA))


def _fisher_yates(n: int, seed: int, counter: int) -> np.ndarray:
    if n == 1:
        return np.zeros(1, dtype=np.int64)
    words = uniform_words(seed, counter, n - 1)
    bounds = np.arange(n, 1, -1, dtype=np.uint64)  # i + 1 for i = n-1 .. 1
    js = (words % bounds).tolist()
    perm = list(range(n))
    i = n - 1
    for j in js:
        perm[i], perm[j] = perm[j], perm[i]
        i -= 1
    return np.array(perm, dtype=np.int64)


class Strategy(enum.Enum):
    RANDOM_RESHUFFLING = "rr"
    SINGLE_SHUFFLING = "ss"
    INCREMENTAL_GRADIENT = "ig"

    @classmethod
    def parse(cls, value) -> "Strategy":
        if isinstance(value, cls):
            return value
        return cls(str(value).lower())


@dataclass(frozen=True)
class PermutationSource:
    """Immutable description of how pi^(t) is drawn for each epoch t >= 1."""

    strategy: Strategy
    seed: int
    n: int

    def __post_init__(self):
        object.__setattr__(self, "strategy", Strategy.parse(self.strategy))
        if self.n < 1:
            raise ValueError("n must be positive")
        object.__setattr__(self, "seed", int(self.seed) & MASK64)

    def permutation(self, t: int) -> np.ndarray:
        return next_permutation(self, t)


def next_permutation(source: PermutationSource, t: int) -> np.ndarray:
    """pi^(t) as a 0-based index array of length n."""
    if t < 1:
        raise ValueError(f"epoch index must be >= 1, got {t}")
    if source.strategy is Strategy.INCREMENTAL_GRADIENT:
        return np.arange(source.n, dtype=np.int64)
    if source.strategy is Strategy.SINGLE_SHUFFLING:
        return _fisher_yates(source.n, source.seed, 1)
    return _fisher_yates(source.n, source.seed, t)


class WithoutReplacementStats(NamedTuple):
    mean: np.ndarray
    sq_deviation: float
    samples: int  # 0 when computed by exact enumeration


def without_replacement_stats(vectors, k: int, *, exact: bool | None = None,
                              samples: int = 100_000, seed: int = 0) -> WithoutReplacementStats:
    """E[mean of a size-k sample] and E||sample mean - population mean||^2.

    Exact enumeration over all k-subsets for n <= 8 (or when ``exact`` is
    forced), Monte Carlo with ``samples`` draws otherwise.
    """
    X = np.asarray(vectors, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    n = X.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    x_bar = X.mean(axis=0)
    if exact is None:
        exact = n <= 8
    if exact:
        total = np.zeros(X.shape[1])
        sq = 0.0
        count = 0
        for subset in itertools.combinations(range(n), k):
            m = X[list(subset)].mean(axis=0)
            total += m
            diff = m - x_bar
            sq += float(diff @ diff)
            count += 1
        return WithoutReplacementStats(total / count, sq / count, 0)
    rng = np.random.default_rng(seed)
    idx = rng.permuted(np.tile(np.arange(n), (samples, 1)), axis=1)[:, :k]
    means = X[idx].mean(axis=1)
    dev = means - x_bar
    return WithoutReplacementStats(means.mean(axis=0), float(np.mean((dev * dev).sum(axis=1))), samples)


class TailBoundCheck(NamedTuple):
    empirical: float
    bound: float
    ok: bool


def tail_gradient_bound_check(problem, w_star, i: int, trials: int = 10_000,
                              seed: int = 0) -> TailBoundCheck:
    """Monte Carlo E||sum_{j>=i} grad f(w*; pi(j+1))||^2 against ((n-i) i/(n-1)) sigma^2."""
    n = problem.n
    if not 0 <= i <= n - 1:
        raise ValueError(f"i must lie in [0, {n - 1}], got {i}")
    G = problem.all_grads(np.asarray(w_star, dtype=np.float64))
    sigma_sq = float(np.mean((G * G).sum(axis=1)))
    bound = (n - i) * i / (n - 1) * sigma_sq if n > 1 else 0.0
    rng = np.random.default_rng(seed)
    perms = rng.permuted(np.tile(np.arange(n), (trials, 1)), axis=1)
    tails = G[perms[:, i:]].sum(axis=1)
    empirical = float(np.mean((tails * tails).sum(axis=1)))
    # an inexact optimum leaves a residual mean gradient r; it adds (n-i)^2 ||r||^2
    r = G.mean(axis=0)
    residual = (n - i) ** 2 * float(r @ r)
    ok = empirical <= bound * (1.0 + 3.0 / math.sqrt(trials)) + residual + 1e-12 * (1.0 + bound)
    return TailBoundCheck(empirical, bound, bool(ok))
