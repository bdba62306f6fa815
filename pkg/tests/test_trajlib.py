import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from ddmpc.trajlib import (DimensionError, Trajectory, as_sequence, hankel,
                           persistence_of_excitation, window)

finite = st.floats(-1e3, 1e3, allow_nan=False)


def test_hankel_scalar():
    np.testing.assert_array_equal(hankel([1, 2, 3, 4], 2), [[1, 2, 3], [2, 3, 4]])


def test_hankel_single_column():
    np.testing.assert_array_equal(hankel([5], 1), [[5]])


def test_hankel_columns_match_windows(rng):
    x = rng.standard_normal((10, 2))
    H = hankel(x, 3)
    assert H.shape == (6, 8)
    for j in range(8):
        np.testing.assert_array_equal(H[:, j], window(x, j, j + 2))


@pytest.mark.parametrize("L", [0, 5])
def test_hankel_bad_depth(L):
    with pytest.raises(DimensionError):
        hankel([1, 2, 3, 4], L)


def test_window_examples():
    np.testing.assert_array_equal(window([1, 2, 3], 0, 2), [1, 2, 3])
    np.testing.assert_array_equal(window([1, 2, 3], 1, 1), [2])
    np.testing.assert_array_equal(window([[1, 2], [3, 4]], 0, 1), [1, 2, 3, 4])


@pytest.mark.parametrize("a,b", [(-1, 1), (2, 1), (0, 3)])
def test_window_out_of_range(a, b):
    with pytest.raises(DimensionError):
        window([1, 2, 3], a, b)


def test_trajectory_length_mismatch():
    with pytest.raises(DimensionError):
        Trajectory(np.zeros((4, 1)), np.zeros((3, 2)))


def test_sequence_is_read_only():
    x = as_sequence([1.0, 2.0])
    with pytest.raises(ValueError):
        x[0, 0] = 3.0


def test_pe_geometric_sequence_is_rank_one():
    rep = persistence_of_excitation([1, 2, 4, 8], 2)
    assert not rep.is_pe and rep.rank == 1


def test_pe_impulse():
    rep = persistence_of_excitation([0, 1, 0, 0], 2)
    assert rep.is_pe and rep.rank == 2


def test_pe_random_unit_interval_input():
    u = np.random.default_rng(1).uniform(-1, 1, (400, 2))
    rep = persistence_of_excitation(u, 30 + 2 * 4)
    assert rep.is_pe and rep.rank == 76 and rep.sigma_min > 0


def test_pe_too_little_data():
    rep = persistence_of_excitation(np.ones((10, 2)), 38)
    assert not rep.is_pe and rep.rank == 0
    rep = persistence_of_excitation(np.random.default_rng(0).standard_normal((12, 2)), 5)
    assert not rep.is_pe and rep.rank < 10 and rep.sigma_min == 0.0


@settings(max_examples=50, deadline=None)
@given(arrays(float, st.tuples(st.integers(1, 15), st.integers(1, 3)), elements=finite),
       st.integers(1, 15))
def test_hankel_window_consistency(x, L):
    if L > x.shape[0]:
        return
    H = hankel(x, L)
    d = x.shape[1]
    for j in range(H.shape[1]):
        np.testing.assert_array_equal(H[:, j], window(x, j, j + L - 1))
    # shift structure: block row i+1 equals block row i moved one column left
    for i in range(L - 1):
        np.testing.assert_array_equal(H[(i + 1) * d:(i + 2) * d, :-1], H[i * d:(i + 1) * d, 1:])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 3), st.integers(2, 8))
def test_pe_monotone_in_order(seed, m, L):
    u = np.random.default_rng(seed).uniform(-1, 1, (m * L + L + 3, m))
    if persistence_of_excitation(u, L).is_pe:
        for Lt in range(1, L):
            assert persistence_of_excitation(u, Lt).is_pe
