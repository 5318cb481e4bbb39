import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from smg.shuffling import (GAMMA, MASK64, PermutationSource, Strategy, next_permutation, splitmix64,
                           tail_gradient_bound_check, uniform_words, without_replacement_stats)


def test_splitmix64_reference_vector():
    # first outputs of the reference generator seeded with 0
    assert splitmix64(GAMMA) == 0xE220A8397B1DCDAF
    assert splitmix64(2 * GAMMA) == 0x6E789E6AA1B965F4
    arr = splitmix64(np.array([GAMMA, (2 * GAMMA) & MASK64], dtype=np.uint64))
    assert arr.tolist() == [0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4]


def test_uniform_words_counter_mode():
    a = uniform_words(5, 3, 10)
    np.testing.assert_array_equal(a[:4], uniform_words(5, 3, 4))
    assert not np.array_equal(a, uniform_words(5, 4, 10))
    assert not np.array_equal(a, uniform_words(6, 3, 10))


def test_incremental_gradient_is_identity():
    src = PermutationSource("ig", 99, 4)
    for t in (1, 2, 17):
        assert next_permutation(src, t).tolist() == [0, 1, 2, 3]


def test_single_shuffling_repeats():
    src = PermutationSource(Strategy.SINGLE_SHUFFLING, 2024, 30)
    np.testing.assert_array_equal(src.permutation(1), src.permutation(9))


def test_reshuffling_changes_and_reproduces():
    src = PermutationSource("rr", 7, 30)
    assert not np.array_equal(src.permutation(1), src.permutation(2))
    np.testing.assert_array_equal(src.permutation(5), PermutationSource("rr", 7, 30).permutation(5))


@settings(max_examples=100, deadline=None)
@given(st.sampled_from(["rr", "ss", "ig"]), st.integers(0, 2**64 - 1), st.integers(1, 60),
       st.integers(1, 10**6))
def test_every_emission_is_a_bijection(strategy, seed, n, t):
    perm = PermutationSource(strategy, seed, n).permutation(t)
    assert sorted(perm.tolist()) == list(range(n))


def test_first_position_uniform():
    src = PermutationSource("rr", 42, 5)
    first = np.array([src.permutation(t)[0] for t in range(1, 100_001)])
    freq = np.bincount(first, minlength=5) / first.size
    assert np.all(np.abs(freq - 0.2) <= 0.01)


def test_all_permutations_reachable():
    src = PermutationSource("rr", 1, 4)
    seen = {tuple(src.permutation(t)) for t in range(1, 2001)}
    assert seen == set(itertools.permutations(range(4)))


def test_bad_epoch_and_strategy():
    with pytest.raises(ValueError):
        next_permutation(PermutationSource("rr", 0, 3), 0)
    with pytest.raises(ValueError):
        PermutationSource("random", 0, 3)


def test_sampling_three_scalars():
    stats = without_replacement_stats([0.0, 0.0, 3.0], 2)
    assert stats.mean == pytest.approx([1.0])
    assert stats.sq_deviation == pytest.approx(0.5, abs=1e-15)
    assert stats.samples == 0


def test_sampling_edge_cases(rng):
    X = rng.standard_normal((6, 3))
    pop = np.mean(np.sum((X - X.mean(0)) ** 2, axis=1))
    assert without_replacement_stats(X, 6).sq_deviation == pytest.approx(0.0, abs=1e-15)
    assert without_replacement_stats(X, 1).sq_deviation == pytest.approx(pop, rel=1e-13)
    with pytest.raises(ValueError):
        without_replacement_stats(X, 0)
    with pytest.raises(ValueError):
        without_replacement_stats(X, 7)


def test_sampling_monte_carlo_mode(rng):
    X = rng.standard_normal((20, 2))
    pop = np.mean(np.sum((X - X.mean(0)) ** 2, axis=1))
    stats = without_replacement_stats(X, 5, samples=50_000, seed=3)
    assert stats.samples == 50_000
    assert stats.sq_deviation == pytest.approx((15 / (5 * 19)) * pop, rel=0.03)


def test_tail_bound_pair_exact(pair):
    res = tail_gradient_bound_check(pair, pair.known_minimizer, 1, trials=1000)
    assert res.bound == 1.0 and res.empirical == 1.0 and res.ok


def test_tail_bound_full_sum_vanishes(quad):
    res = tail_gradient_bound_check(quad, quad.known_minimizer, 0, trials=1000)
    assert res.bound == 0.0 and res.empirical < 1e-20 and res.ok


def test_tail_bound_monte_carlo():
    from smg.data import synth_quadratic_dataset

    p = synth_quadratic_dataset(4, 3, seed=11)
    res = tail_gradient_bound_check(p, p.known_minimizer, 2, trials=100_000, seed=1)
    assert res.ok
    # for sums at the optimum the bound is an equality
    assert res.empirical == pytest.approx(res.bound, rel=0.03)
