"""Finite-sum objectives F(w) = (1/n) sum_i f(w; i).

Every problem evaluates components in batches: ``values(W, idx)`` and
``grads(W, idx)`` take a stack of iterates ``W`` of shape (S, d) and one
component index per row.  Optimizers use the batched form to advance several
independent runs in lockstep; row ``s`` of the result depends only on
``W[s]`` and ``idx[s]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import sparse
from scipy.special import expit

__all__ = [
    "SparseVector",
    "FiniteSumProblem",
    "LogisticProblem",
    "QuadraticProblem",
    "logistic_problem",
    "quadratic_problem",
    "full_gradient",
]

# problems whose dense feature matrix stays below this many entries keep one
DENSE_LIMIT = 25_000_000


@dataclass(frozen=True)
class SparseVector:
    """Sparse feature vector with 0-based, strictly increasing indices."""

    indices: np.ndarray
    values: np.ndarray
    dim: int

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        val = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", val)
        if idx.ndim != 1 or idx.shape != val.shape:
            raise ValueError("indices and values must be 1-D arrays of equal length")
        if self.dim < 1:
            raise ValueError(f"dim must be positive, got {self.dim}")
        if idx.size:
            if idx[0] < 0 or idx[-1] >= self.dim:
                raise ValueError(f"index out of range for dim={self.dim}")
            if np.any(np.diff(idx) <= 0):
                raise ValueError("indices must be strictly increasing")
        if np.any(val == 0.0):
            raise ValueError("sparse vector stores an explicit zero")

    @classmethod
    def from_dense(cls, x) -> "SparseVector":
        x = np.asarray(x, dtype=np.float64)
        nz = np.flatnonzero(x)
        return cls(nz, x[nz], x.size)

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dim)
        out[self.indices] = self.values
        return out

    def norm_sq(self) -> float:
        return float(self.values @ self.values)

    def __eq__(self, other):
        if not isinstance(other, SparseVector):
            return NotImplemented
        return (self.dim == other.dim
                and np.array_equal(self.indices, other.indices)
                and np.array_equal(self.values, other.values))

    __hash__ = None


class FiniteSumProblem:
    """Base class for F(w) = (1/n) sum_i f(w; i).

    Subclasses set ``n``, ``dim``, ``smoothness_L``, ``strong_convexity_mu``
    and ``known_minimizer`` and implement the batched ``values``/``grads``
    plus the vectorized ``all_values``/``all_grads`` (every component at one
    point).  Instances are treated as immutable.
    """

    n: int
    dim: int
    smoothness_L: float
    strong_convexity_mu: float = 0.0
    known_minimizer: np.ndarray | None = None

    def values(self, W: np.ndarray, idx: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def grads(self, W: np.ndarray, idx: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def all_values(self, w: np.ndarray) -> np.ndarray:
        """f(w; i) for every i, shape (n,)."""
        W = np.broadcast_to(w, (self.n, self.dim))
        return self.values(W, np.arange(self.n))

    def all_grads(self, w: np.ndarray) -> np.ndarray:
        """grad f(w; i) for every i, shape (n, d)."""
        W = np.broadcast_to(w, (self.n, self.dim))
        return self.grads(W, np.arange(self.n))

    def _check_point(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=np.float64)
        if w.shape != (self.dim,):
            raise ValueError(f"expected a vector of length {self.dim}, got shape {w.shape}")
        return w

    def _check_index(self, i) -> int:
        i = int(i)
        if not 0 <= i < self.n:
            raise IndexError(f"component index {i} out of range [0, {self.n})")
        return i

    def component_value(self, w, i) -> float:
        w = self._check_point(w)
        return float(self.values(w[None, :], np.array([self._check_index(i)]))[0])

    def component_grad(self, w, i) -> np.ndarray:
        w = self._check_point(w)
        return self.grads(w[None, :], np.array([self._check_index(i)]))[0]

    def full_value(self, w) -> float:
        return float(np.mean(self.all_values(self._check_point(w))))

    def full_gradient(self, w) -> np.ndarray:
        return np.mean(self.all_grads(self._check_point(w)), axis=0)


def full_gradient(problem: FiniteSumProblem, w) -> np.ndarray:
    """(1/n) sum_i grad f(w; i)."""
    return problem.full_gradient(w)


def _softplus(z):
    # log(1 + exp(z)) without overflow
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


class LogisticProblem(FiniteSumProblem):
    """f(w; i) = log(1 + exp(-y_i x_i^T w)) + (l2/2) ||w||^2."""

    def __init__(self, X, y, l2: float = 0.0):
        X = sparse.csr_matrix(X, dtype=np.float64)
        X.sort_indices()
        y = np.asarray(y, dtype=np.float64)
        if X.shape[0] != y.size:
            raise ValueError(f"{X.shape[0]} feature rows but {y.size} labels")
        if not np.all((y == 1.0) | (y == -1.0)):
            raise ValueError("labels must be -1 or +1")
        if l2 < 0:
            raise ValueError("l2 must be nonnegative")
        self.X = X
        self.y = y
        self.l2 = float(l2)
        self.n, self.dim = X.shape
        self.dense = X.toarray() if self.n * self.dim <= DENSE_LIMIT else None
        row_norm_sq = np.asarray(X.multiply(X).sum(axis=1)).ravel()
        self.smoothness_L = float(row_norm_sq.max()) / 4.0 + self.l2
        self.strong_convexity_mu = self.l2
        self.known_minimizer = None

    def _margins(self, W, idx):
        if self.dense is not None:
            rows = self.dense[idx]
            return rows, (rows * W).sum(axis=1)
        X = self.X
        z = np.empty(len(idx))
        for s, i in enumerate(idx):
            lo, hi = X.indptr[i], X.indptr[i + 1]
            z[s] = X.data[lo:hi] @ W[s, X.indices[lo:hi]]
        return None, z

    def values(self, W, idx):
        idx = np.asarray(idx)
        _, xw = self._margins(W, idx)
        out = _softplus(-self.y[idx] * xw)
        if self.l2:
            out = out + 0.5 * self.l2 * (W * W).sum(axis=1)
        return out

    def grads(self, W, idx):
        idx = np.asarray(idx)
        rows, xw = self._margins(W, idx)
        yi = self.y[idx]
        coef = -yi * expit(-yi * xw)
        if rows is not None:
            g = coef[:, None] * rows
        else:
            X = self.X
            g = np.zeros((len(idx), self.dim))
            for s, i in enumerate(idx):
                lo, hi = X.indptr[i], X.indptr[i + 1]
                g[s, X.indices[lo:hi]] = coef[s] * X.data[lo:hi]
        if self.l2:
            g = g + self.l2 * W
        return g

    def all_values(self, w):
        z = -self.y * (self.X @ w)
        return _softplus(z) + 0.5 * self.l2 * float(w @ w)

    def all_grads(self, w):
        coef = -self.y * expit(-self.y * (self.X @ w))
        G = self.X.multiply(coef[:, None]).toarray()
        return G + self.l2 * w

    def full_value(self, w):
        return float(np.mean(self.all_values(self._check_point(w))))

    def full_gradient(self, w):
        w = self._check_point(w)
        coef = -self.y * expit(-self.y * (self.X @ w))
        return np.asarray(self.X.T @ coef).ravel() / self.n + self.l2 * w

    def accuracy(self, w, X=None, y=None) -> float:
        """Fraction of samples with sign(x^T w) == y (ties count as +1)."""
        X = self.X if X is None else X
        y = self.y if y is None else y
        pred = np.where(X @ w >= 0.0, 1.0, -1.0)
        return float(np.mean(pred == y))


def logistic_problem(features: Sequence[SparseVector], labels, l2_lambda: float = 0.0,
                     dim: int | None = None) -> LogisticProblem:
    """Build the logistic-loss finite sum from sparse samples and +-1 labels."""
    features = list(features)
    labels = np.asarray(labels, dtype=np.float64)
    if not features:
        raise ValueError("no samples")
    if len(features) != labels.size:
        raise ValueError(f"{len(features)} samples but {labels.size} labels")
    dims = {f.dim for f in features}
    if len(dims) != 1:
        raise ValueError(f"feature dimension mismatch: {sorted(dims)}")
    d = dims.pop()
    if dim is not None:
        if dim < d:
            raise ValueError(f"requested dim {dim} smaller than feature dim {d}")
        d = dim
    if not np.all((labels == 1.0) | (labels == -1.0)):
        bad = labels[(labels != 1.0) & (labels != -1.0)][0]
        raise ValueError(f"label {bad!r} outside {{-1, +1}}")
    indptr = np.zeros(len(features) + 1, dtype=np.int64)
    indptr[1:] = np.cumsum([f.indices.size for f in features])
    indices = np.concatenate([f.indices for f in features])
    data = np.concatenate([f.values for f in features])
    X = sparse.csr_matrix((data, indices, indptr), shape=(len(features), d))
    return LogisticProblem(X, labels, l2_lambda)


class QuadraticProblem(FiniteSumProblem):
    """f(w; i) = 1/2 w^T A_i w - b_i^T w with PSD A_i.

    ``A`` is either (n, d, d) or, for diagonal Hessians, (n, d).
    """

    def __init__(self, A, b, *, check: bool = True):
        A = np.asarray(A, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        self.diagonal = A.ndim == 2
        if A.ndim not in (2, 3):
            raise ValueError("A must have shape (n, d) or (n, d, d)")
        n, d = A.shape[:2]
        if not self.diagonal and A.shape[2] != d:
            raise ValueError(f"A_i must be square, got {A.shape[1:]}")
        if b.shape != (n, d):
            raise ValueError(f"b has shape {b.shape}, expected {(n, d)}")
        if self.diagonal:
            eig_min, eig_max = A.min(axis=1), A.max(axis=1)
            mean_eigs = A.mean(axis=0)
        else:
            if check and not np.allclose(A, np.swapaxes(A, 1, 2), rtol=1e-12, atol=1e-12):
                raise ValueError("A_i must be symmetric")
            A = 0.5 * (A + np.swapaxes(A, 1, 2))
            eigs = np.linalg.eigvalsh(A)
            eig_min, eig_max = eigs[:, 0], eigs[:, -1]
            mean_eigs = np.linalg.eigvalsh(A.mean(axis=0))
        scale = max(1.0, float(np.abs(eig_max).max()))
        if check and eig_min.min() < -1e-12 * scale:
            bad = int(np.argmin(eig_min))
            raise ValueError(f"A_{bad} has negative eigenvalue {eig_min[bad]:.3e}")
        self.A = A
        self.b = b
        self.n, self.dim = n, d
        self.smoothness_L = float(eig_max.max())
        mu = float(mean_eigs.min())
        self.strong_convexity_mu = mu if mu > 1e-12 * scale else 0.0
        self.known_minimizer = self._solve_minimizer()

    def _solve_minimizer(self):
        b_bar = self.b.mean(axis=0)
        if self.diagonal:
            a_bar = self.A.mean(axis=0)
            if self.strong_convexity_mu > 0:
                return b_bar / a_bar
            A_bar = np.diag(a_bar)
        else:
            A_bar = self.A.mean(axis=0)
            if self.strong_convexity_mu > 0:
                return np.linalg.solve(A_bar, b_bar)
        w, *_ = np.linalg.lstsq(A_bar, b_bar, rcond=None)
        if np.linalg.norm(A_bar @ w - b_bar) > 1e-10 * max(1.0, np.linalg.norm(b_bar)):
            return None
        return w

    def _apply(self, W, idx):
        if self.diagonal:
            return self.A[idx] * W
        return (self.A[idx] * W[:, None, :]).sum(axis=2)

    def values(self, W, idx):
        idx = np.asarray(idx)
        AW = self._apply(W, idx)
        return 0.5 * (W * AW).sum(axis=1) - (self.b[idx] * W).sum(axis=1)

    def grads(self, W, idx):
        idx = np.asarray(idx)
        return self._apply(W, idx) - self.b[idx]

    def all_values(self, w):
        if self.diagonal:
            Aw = self.A * w
        else:
            Aw = self.A @ w
        return 0.5 * (Aw @ w) - self.b @ w

    def all_grads(self, w):
        Aw = self.A * w if self.diagonal else self.A @ w
        return Aw - self.b


def quadratic_problem(A_list, b_list) -> QuadraticProblem:
    """Quadratic finite sum from a list of PSD matrices and vectors."""
    A = np.stack([np.atleast_2d(np.asarray(a, dtype=np.float64)) for a in A_list])
    b = np.stack([np.atleast_1d(np.asarray(v, dtype=np.float64)) for v in b_list])
    if A.shape[0] != b.shape[0]:
        raise ValueError(f"{A.shape[0]} matrices but {b.shape[0]} vectors")
    if A.shape[1:] != (b.shape[1], b.shape[1]):
        raise ValueError(f"dimension mismatch: A_i {A.shape[1:]} vs b_i {b.shape[1:]}")
    return QuadraticProblem(A, b)
