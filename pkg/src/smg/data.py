"""LIBSVM text datasets and synthetic problem generators.

On disk feature indices are 1-based; in memory every SparseVector is 0-based.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass
from typing import Iterable, TextIO

import numpy as np

from .problems import LogisticProblem, QuadraticProblem, SparseVector, logistic_problem

__all__ = [
    "Dataset",
    "LibSVMParseError",
    "parse_libsvm",
    "load_libsvm",
    "serialize_libsvm",
    "synth_quadratic_dataset",
    "synth_logistic_dataset",
    "train_test_split",
    "dataset_problem",
]


class LibSVMParseError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(message if line is None else f"line {line}: {message}")


@dataclass(frozen=True)
class Dataset:
    samples: tuple  # of (SparseVector, label)
    dim: int
    source: str = "synthetic"

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        if not self.samples:
            raise ValueError("empty dataset")
        for x, y in self.samples:
            if y not in (1.0, -1.0):
                raise ValueError(f"label {y!r} outside {{-1, +1}}")
            if x.dim != self.dim:
                raise ValueError(f"sample dim {x.dim} differs from dataset dim {self.dim}")

    def __len__(self):
        return len(self.samples)

    @property
    def features(self) -> list[SparseVector]:
        return [x for x, _ in self.samples]

    @property
    def labels(self) -> np.ndarray:
        return np.array([y for _, y in self.samples])

    def problem(self, l2_lambda: float = 0.0) -> LogisticProblem:
        return logistic_problem(self.features, self.labels, l2_lambda)

    def subset(self, idx) -> "Dataset":
        return Dataset([self.samples[i] for i in idx], self.dim, self.source)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return self.dim == other.dim and self.samples == other.samples

    __hash__ = None


def _parse_line(text: str, lineno: int):
    fields = text.split()
    try:
        label = float(fields[0])
    except ValueError:
        raise LibSVMParseError(f"unparseable label {fields[0]!r}", lineno) from None
    if not np.isfinite(label):
        raise LibSVMParseError(f"non-finite label {fields[0]!r}", lineno)
    idx, val = [], []
    prev = 0
    for pair in fields[1:]:
        key, sep, value = pair.partition(":")
        if not sep:
            raise LibSVMParseError(f"malformed pair {pair!r}", lineno)
        try:
            j = int(key)
            v = float(value)
        except ValueError:
            raise LibSVMParseError(f"malformed pair {pair!r}", lineno) from None
        if j < 1:
            raise LibSVMParseError(f"feature index {j} < 1", lineno)
        if j <= prev:
            raise LibSVMParseError(f"feature index {j} not ascending (after {prev})", lineno)
        if not np.isfinite(v):
            raise LibSVMParseError(f"non-finite value in {pair!r}", lineno)
        prev = j
        if v != 0.0:
            idx.append(j - 1)
            val.append(v)
    return (1.0 if label > 0 else -1.0), idx, val, prev


def parse_libsvm(stream: TextIO | Iterable[str], dim: int | None = None,
                 source: str = "<stream>") -> Dataset:
    """Read ``<label> <idx>:<val> ...`` lines.

    Labels > 0 map to +1, all others to -1.  Text after '#' is ignored and
    blank lines are skipped.  Stored zeros are dropped.  ``dim`` is the
    largest index seen unless a larger one is requested.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    rows = []
    max_index = 0
    for lineno, raw in enumerate(stream, start=1):
        text = raw.split("#", 1)[0].strip()
        if not text:
            continue
        label, idx, val, last = _parse_line(text, lineno)
        max_index = max(max_index, last)
        rows.append((label, idx, val))
    if not rows:
        raise LibSVMParseError("empty dataset")
    if dim is not None and dim < max_index:
        raise LibSVMParseError(f"feature index {max_index} exceeds requested dim {dim}")
    d = max(max_index, dim or 0, 1)
    samples = [(SparseVector(np.array(i, dtype=np.int64), np.array(v), d), y) for y, i, v in rows]
    return Dataset(samples, d, source)


def load_libsvm(path, dim: int | None = None) -> Dataset:
    with open(path, encoding="utf-8") as fh:
        return parse_libsvm(fh, dim, source=os.fspath(path))


def serialize_libsvm(dataset: Dataset) -> str:
    lines = []
    for x, y in dataset.samples:
        pairs = " ".join(f"{j + 1}:{v!r}" for j, v in zip(x.indices.tolist(), x.values.tolist()))
        lines.append(f"{int(y):+d} {pairs}".rstrip())
    return "\n".join(lines) + "\n"


def train_test_split(dataset: Dataset, test_fraction: float = 0.2,
                     seed: int = 0) -> tuple[Dataset, Dataset]:
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must lie in (0, 1)")
    n = len(dataset)
    n_test = max(1, int(round(test_fraction * n)))
    if n_test >= n:
        raise ValueError("dataset too small to split")
    order = np.random.default_rng(seed).permutation(n)
    return dataset.subset(np.sort(order[n_test:])), dataset.subset(np.sort(order[:n_test]))


def synth_quadratic_dataset(n: int, dim: int, seed: int, condition: float = 10.0, *,
                            spread: float = 1.0, lam_min: float = 1.0) -> QuadraticProblem:
    """Diagonal quadratics f(w; i) = 1/2 w^T diag(a_i) w - b_i^T w.

    The mean Hessian is exactly diag(base) with base log-spaced over
    [lam_min, lam_min * condition], so mu = lam_min and L = lam_min * condition
    whatever n is.  Components jitter around base in antithetic pairs
    base +- u, with u small enough to stay inside the range.  b_i = a_i c +
    spread z_i with a centre c drawn first, so instances that differ only in
    n share c; spread = 0 makes every component minimized at c.
    """
    if n < 1 or dim < 1:
        raise ValueError("n and dim must be positive")
    if condition < 1:
        raise ValueError("condition must be >= 1")
    if lam_min <= 0:
        raise ValueError("lam_min must be positive")
    rng = np.random.default_rng(seed)
    centre = rng.standard_normal(dim)
    lo, hi = lam_min, lam_min * condition
    base = np.geomspace(lo, hi, dim) if dim > 1 else np.array([lo])
    room = np.minimum(base - lo, hi - base)
    U = rng.uniform(-1.0, 1.0, (n // 2, dim)) * room
    parts = [base + U, base - U]
    if n % 2:
        parts.append(base[None, :])
    A = np.clip(np.concatenate(parts), lo, hi)
    B = A * centre + spread * rng.standard_normal((n, dim))
    return QuadraticProblem(A, B)


def synth_logistic_dataset(n: int, dim: int, seed: int, *, rank: int | None = None,
                           noise: float = 1.0, margin: float = 2.0) -> Dataset:
    """Unit-norm features on a random rank-``rank`` subspace with noisy linear labels.

    y_i = sign(margin * <z_i, theta> + noise * e_i); the noise keeps the
    classes overlapping so the unregularized minimizer is finite.  With
    ``rank < dim`` the objective is flat off the feature span (mu = 0).
    """
    rank = dim if rank is None else rank
    if not 1 <= rank <= dim:
        raise ValueError(f"rank must lie in [1, {dim}]")
    rng = np.random.default_rng(seed)
    basis = np.linalg.qr(rng.standard_normal((dim, rank)))[0]
    Z = rng.standard_normal((n, rank))
    Z /= np.linalg.norm(Z, axis=1, keepdims=True)
    theta = rng.standard_normal(rank)
    theta /= np.linalg.norm(theta)
    y = np.where(margin * (Z @ theta) + noise * rng.standard_normal(n) >= 0.0, 1.0, -1.0)
    X = Z @ basis.T
    samples = [(SparseVector.from_dense(x), label) for x, label in zip(X, y)]
    return Dataset(samples, dim, "synthetic")


def dataset_problem(dataset: Dataset, l2_lambda: float = 0.0) -> LogisticProblem:
    return dataset.problem(l2_lambda)
