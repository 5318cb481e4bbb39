import hashlib
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from smg.data import (Dataset, LibSVMParseError, load_libsvm, parse_libsvm, serialize_libsvm,
                      synth_logistic_dataset, synth_quadratic_dataset, train_test_split)

FIXTURE = Path(__file__).parent / "fixtures" / "tiny.libsvm"


def test_parse_single_line():
    ds = parse_libsvm("1 1:0.5 3:-2\n")
    assert len(ds) == 1 and ds.dim == 3
    x, y = ds.samples[0]
    assert y == 1.0
    # 0-based in memory
    np.testing.assert_array_equal(x.indices, [0, 2])
    np.testing.assert_array_equal(x.values, [0.5, -2.0])


def test_empty_stream():
    with pytest.raises(LibSVMParseError, match="empty dataset"):
        parse_libsvm("")
    with pytest.raises(LibSVMParseError, match="empty dataset"):
        parse_libsvm("# only a comment\n\n")


@pytest.mark.parametrize("text, line, what", [
    ("1 1:1\n-1 2:x\n", 2, "malformed"),
    ("1 1:1\n\n1 3:1 2:1\n", 3, "ascending"),
    ("1 0:1\n", 1, "< 1"),
    ("pos 1:1\n", 1, "label"),
    ("1 1:1 2\n", 1, "malformed"),
    ("1 1:1 1:2\n", 1, "ascending"),
])
def test_errors_report_line(text, line, what):
    with pytest.raises(LibSVMParseError, match=what) as info:
        parse_libsvm(text)
    assert info.value.line == line
    assert f"line {line}" in str(info.value)


def test_fixture_file():
    ds = load_libsvm(FIXTURE)
    assert len(ds) == 4 and ds.dim == 7
    np.testing.assert_array_equal(ds.labels, [1, -1, -1, 1])
    assert ds.source == str(FIXTURE)
    x, _ = ds.samples[2]
    np.testing.assert_array_equal(x.indices, [0, 3])


def test_requested_dim():
    assert parse_libsvm("1 2:1\n", dim=10).dim == 10
    with pytest.raises(LibSVMParseError, match="exceeds"):
        parse_libsvm("1 5:1\n", dim=3)


def test_stored_zeros_dropped():
    x, _ = parse_libsvm("1 1:0 2:3\n").samples[0]
    np.testing.assert_array_equal(x.indices, [1])


def test_fixture_round_trip():
    ds = load_libsvm(FIXTURE)
    again = parse_libsvm(serialize_libsvm(ds), dim=ds.dim)
    assert again == ds


line = st.tuples(
    st.sampled_from([-1.0, 0.0, 1.0, 2.5, -3.0]),
    st.dictionaries(st.integers(1, 40), st.floats(-1e6, 1e6, allow_nan=False).filter(bool),
                    max_size=8),
)


@settings(max_examples=80, deadline=None)
@given(st.lists(line, min_size=1, max_size=10))
def test_round_trip_property(rows):
    text = "".join(f"{lab} " + " ".join(f"{j}:{v!r}" for j, v in sorted(f.items())) + "\n"
                   for lab, f in rows)
    ds = parse_libsvm(text)
    assert len(ds) == len(rows)
    assert parse_libsvm(serialize_libsvm(ds), dim=ds.dim) == ds
    for (lab, f), (x, y) in zip(rows, ds.samples):
        assert y == (1.0 if lab > 0 else -1.0)
        assert dict(zip((x.indices + 1).tolist(), x.values.tolist())) == f


def test_dataset_problem_and_subset():
    ds = load_libsvm(FIXTURE)
    p = ds.problem(0.0)
    assert p.n == 4 and p.dim == 7
    sub = ds.subset([0, 3])
    assert len(sub) == 2 and sub.samples[1] == ds.samples[3]


def test_train_test_split_partition():
    ds = synth_logistic_dataset(50, 3, seed=0)
    train, test = train_test_split(ds, 0.2, seed=1)
    assert (len(train), len(test)) == (40, 10)
    assert train_test_split(ds, 0.2, seed=1)[1] == test
    merged = {id(s) for s in train.samples} | {id(s) for s in test.samples}
    assert len(merged) == 50


def qhash(p):
    return hashlib.sha256(p.A.tobytes() + p.b.tobytes()).hexdigest()


def test_synth_quadratic_deterministic():
    assert qhash(synth_quadratic_dataset(20, 3, 5)) == qhash(synth_quadratic_dataset(20, 3, 5))
    assert qhash(synth_quadratic_dataset(20, 3, 5)) != qhash(synth_quadratic_dataset(20, 3, 6))


@pytest.mark.parametrize("n", [1, 4, 7, 100])
def test_synth_quadratic_spectrum(n):
    p = synth_quadratic_dataset(n, 5, seed=2, condition=10.0, lam_min=0.5)
    assert p.A.min() >= 0.5 and p.A.max() <= 5.0
    assert p.strong_convexity_mu == pytest.approx(0.5)
    assert p.smoothness_L <= 5.0
    np.testing.assert_allclose(p.full_gradient(p.known_minimizer), 0.0, atol=1e-12)


def test_synth_quadratic_shared_minimizer_has_zero_variance():
    p = synth_quadratic_dataset(9, 3, seed=0, condition=1.0, spread=0.0)
    g = p.all_grads(p.known_minimizer)
    assert np.mean(np.sum(g**2, axis=1)) == pytest.approx(0.0, abs=1e-28)


def test_synth_quadratic_seed7_sigma():
    p = synth_quadratic_dataset(4, 2, seed=7)
    w = np.linalg.solve(np.diag(p.A.mean(0)), p.b.mean(0))
    direct = sum(float(np.sum((np.diag(p.A[i]) @ w - p.b[i]) ** 2)) for i in range(4)) / 4
    assert direct > 0
    g = p.all_grads(p.known_minimizer)
    assert np.mean(np.sum(g**2, axis=1)) == pytest.approx(direct, rel=1e-12)


def test_synth_logistic_shape():
    ds = synth_logistic_dataset(64, 10, seed=1, rank=2)
    assert len(ds) == 64 and ds.dim == 10
    X = np.array([x.to_dense() for x in ds.features])
    np.testing.assert_allclose(np.linalg.norm(X, axis=1), 1.0, rtol=1e-12)
    assert np.linalg.matrix_rank(X) == 2
    assert set(ds.labels) == {-1.0, 1.0}
    assert synth_logistic_dataset(64, 10, seed=1, rank=2) == ds


def test_dataset_validation():
    ds = parse_libsvm("1 1:1\n")
    with pytest.raises(ValueError, match="label"):
        Dataset([(ds.samples[0][0], 0.0)], 1)
    with pytest.raises(ValueError, match="empty"):
        Dataset([], 1)
