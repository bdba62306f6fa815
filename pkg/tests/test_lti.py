import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ddmpc.diagnostics import compute_c_pe
from ddmpc.lti import (Equilibrium, LtiSystem, NoiseSpec, add_noise, collect_data, four_tank,
                       observability_pseudoinverse, random_minimal_system, simulate, steady_state)
from ddmpc.trajlib import DimensionError, persistence_of_excitation

from oracles import recursion_simulate

SCALAR = dict(A=[[0.5]], B=[[1.0]], C=[[1.0]], D=[[0.0]])


def test_simulate_scalar_by_hand():
    res = simulate(LtiSystem(**SCALAR), [0.0], [1, 0, 0])
    np.testing.assert_allclose(res.y[:, 0], [0, 1, 0.5])
    assert res.x.shape == (4, 1)


def test_simulate_dimension_mismatch(tank):
    with pytest.raises(DimensionError):
        simulate(tank, np.zeros(3), np.zeros((5, 2)))
    with pytest.raises(DimensionError):
        simulate(tank, np.zeros(4), np.zeros((5, 3)))


def test_simulate_matches_recursion_oracle(tank):
    u = np.random.default_rng(7).uniform(-1, 1, (400, 2))
    y = simulate(tank, np.zeros(4), u).y
    ref = recursion_simulate(tank.A, tank.B, tank.C, tank.D, np.zeros(4), u)
    assert np.max(np.abs(y - ref)) <= 1e-12


def test_equilibrium_is_fixed_point(tank, tank_eq):
    res = simulate(tank, tank_eq.x_s, np.tile(tank_eq.u_s, (tank.n + 1, 1)))
    np.testing.assert_allclose(res.y, np.tile(tank_eq.y_s, (tank.n + 1, 1)), atol=1e-12)


def test_four_tank_structure(tank):
    assert (tank.n, tank.m, tank.p) == (4, 2, 2)
    assert tank.is_minimal()
    assert np.max(np.abs(np.linalg.eigvals(tank.A))) < 1


def test_four_tank_steady_state(tank_eq, tank):
    # the rounded setpoint (0.65, 0.77) is close; the exact value is C (I-A)^-1 B u_s
    assert np.all(np.abs(tank_eq.y_s - [0.65, 0.77]) <= 0.03)
    x_s = np.linalg.solve(np.eye(4) - tank.A, tank.B @ [1.0, 1.0])
    np.testing.assert_allclose(tank_eq.x_s, x_s, rtol=1e-14)
    np.testing.assert_allclose(tank_eq.y_s, tank.C @ x_s, rtol=1e-14)


def test_steady_state_examples(tank):
    eq = steady_state(tank, [0, 0])
    assert np.all(eq.x_s == 0) and np.all(eq.y_s == 0)
    eq = steady_state(LtiSystem(**SCALAR), [1.0])
    assert eq.x_s[0] == pytest.approx(2.0) and eq.y_s[0] == pytest.approx(2.0)


def test_steady_state_integrator_raises():
    with pytest.raises(np.linalg.LinAlgError):
        steady_state(LtiSystem([[1.0]], [[1.0]], [[1.0]]), [1.0])


def test_non_minimal_rejected():
    with pytest.raises(ValueError):
        LtiSystem(np.diag([0.5, 0.5]), [[1.0], [1.0]], [[1.0, 0.0]])


def test_observability_pseudoinverse():
    Phi, Pd = observability_pseudoinverse(LtiSystem([[0.5]], [[1.0]], [[2.0]]))
    np.testing.assert_allclose(Phi, [[2.0]])
    np.testing.assert_allclose(Pd, [[0.5]])


def test_observability_pseudoinverse_four_tank(tank):
    Phi, Pd = observability_pseudoinverse(tank)
    assert Phi.shape == (8, 4)
    assert np.max(np.abs(Pd @ Phi - np.eye(4))) <= 1e-10


def test_observability_identity_output(rng):
    A = 0.5 * rng.standard_normal((3, 3))
    sys = LtiSystem(A, rng.standard_normal((3, 1)), np.eye(3), check_minimal=False)
    Phi, _ = observability_pseudoinverse(sys)
    np.testing.assert_array_equal(Phi[:3], np.eye(3))


def test_noise_zero_bound_is_identity(rng):
    y = rng.standard_normal((20, 2))
    np.testing.assert_array_equal(add_noise(y, NoiseSpec(0.0, 3)), y)


def test_noise_deterministic(rng):
    y = rng.standard_normal((20, 2))
    np.testing.assert_array_equal(add_noise(y, NoiseSpec(0.1, 9)), add_noise(y, NoiseSpec(0.1, 9)))
    assert not np.array_equal(add_noise(y, NoiseSpec(0.1, 9)), add_noise(y, NoiseSpec(0.1, 9, stream=1)))


def test_noise_uniform_statistics():
    eps = add_noise(np.zeros((10_000, 1)), NoiseSpec(0.002, 5))
    assert np.max(np.abs(eps)) <= 0.002
    assert np.max(np.abs(eps)) > 0.0015


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 10), st.integers(0, 2**31))
def test_noise_bound_exact(eps_bar, seed):
    eps = NoiseSpec(eps_bar, seed).sample((200, 3))
    assert np.all(np.abs(eps) <= eps_bar)


def test_collect_data_pe_for_mpc(tank):
    d = collect_data(tank, 400, 1.0, NoiseSpec(0.002, 1))
    assert persistence_of_excitation(d.clean.u, 30 + 2 * 4).is_pe
    assert np.max(np.abs(d.noisy.y - d.clean.y)) <= 0.002
    np.testing.assert_array_equal(d.noisy.u, d.clean.u)


def test_collect_zero_amplitude_free_response(tank):
    x0 = np.array([1.0, -1.0, 0.5, 0.2])
    d = collect_data(tank, 50, 0.0, NoiseSpec(0.0, 1), x0=x0)
    assert np.all(d.clean.u == 0)
    np.testing.assert_allclose(d.clean.y, simulate(tank, x0, np.zeros((50, 2))).y)


def test_collect_larger_amplitude_lowers_c_pe_input(tank):
    small = collect_data(tank, 400, 1.0, NoiseSpec(0.0, 4)).clean
    big = collect_data(tank, 400, 2.0, NoiseSpec(0.0, 4)).clean
    assert compute_c_pe(tank, big, 30, 4).c_pe_input < compute_c_pe(tank, small, 30, 4).c_pe_input


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31))
def test_simulate_superposition(seed):
    rng = np.random.default_rng(seed)
    sys = random_minimal_system(rng, 3, 2, 2, feedthrough=True)
    u1, u2 = rng.standard_normal((30, 2)), rng.standard_normal((30, 2))
    x1, x2 = rng.standard_normal(3), rng.standard_normal(3)
    lhs = simulate(sys, x1 + x2, u1 + u2).y
    rhs = simulate(sys, x1, u1).y + simulate(sys, x2, u2).y
    assert np.max(np.abs(lhs - rhs)) <= 1e-10


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31))
def test_steady_state_constant_trajectory(seed):
    rng = np.random.default_rng(seed)
    sys = random_minimal_system(rng, 4, 2, 3, feedthrough=True)
    eq = steady_state(sys, rng.standard_normal(2))
    assert isinstance(eq, Equilibrium)
    np.testing.assert_allclose(eq.x_s, sys.A @ eq.x_s + sys.B @ eq.u_s, atol=1e-10)
    y = simulate(sys, eq.x_s, np.tile(eq.u_s, (sys.n + 1, 1))).y
    np.testing.assert_allclose(y, np.tile(eq.y_s, (sys.n + 1, 1)), atol=1e-10)
