import dataclasses

import numpy as np
import pytest

from ddmpc.diagnostics import (InconsistentWindowError, check_prediction_errors, compute_c_pe,
                               data_driven_simulate, initial_state_from_window, input_pe_constants,
                               open_loop_replay, prediction_error_bound)
from ddmpc.experiments import ExperimentConfig, run_experiment
from ddmpc.lti import NoiseSpec, collect_data, random_minimal_system, simulate
from ddmpc.mpc import MpcConfig, build_data_matrices, solve_nominal
from ddmpc.trajlib import hankel


@pytest.fixture(scope="module")
def tank_data(tank):
    return collect_data(tank, 400, 1.0, NoiseSpec(0.0, 0)).clean


def test_equilibrium_prediction(tank, tank_eq, tank_data):
    dm = build_data_matrices(tank_data, 30, 4)
    y = data_driven_simulate(dm, np.tile(tank_eq.u_s, 4), np.tile(tank_eq.y_s, 4),
                             np.tile(tank_eq.u_s, (30, 1)))
    assert np.max(np.abs(y - tank_eq.y_s)) <= 1e-9


def test_four_tank_prediction_matches_simulation(tank, tank_data, rng):
    dm = build_data_matrices(tank_data, 30, 4)
    x = rng.standard_normal(4)
    u = rng.uniform(-1, 1, (34, 2))
    res = simulate(tank, x, u)
    y = data_driven_simulate(dm, u[:4], res.y[:4], u[4:])
    assert np.max(np.abs(y - res.y[4:])) <= 1e-6


@pytest.mark.parametrize("seed", range(5))
def test_random_system_prediction(seed):
    rng = np.random.default_rng(seed)
    sys = random_minimal_system(rng, 3, 1, 1)
    L = 8
    d = collect_data(sys, 100, 1.0, NoiseSpec(0.0, seed)).clean
    dm = build_data_matrices(d, L, 3)
    x = rng.standard_normal(3)
    u = rng.standard_normal((L + 3, 1))
    res = simulate(sys, x, u)
    y = data_driven_simulate(dm, u[:3], res.y[:3], u[3:])
    assert np.max(np.abs(y - res.y[3:])) <= 1e-6 * max(1.0, np.max(np.abs(res.y)))


def test_inconsistent_window_rejected(tank, tank_data):
    dm = build_data_matrices(tank_data, 30, 4)
    y_bad = np.tile([1.0, -1.0], 4) + np.arange(8)  # not produced by the plant
    with pytest.raises(InconsistentWindowError):
        data_driven_simulate(dm, np.zeros(8), y_bad, np.zeros((5, 2)))


@pytest.mark.parametrize("seed", range(20))
def test_hankel_span_membership_and_exactness(seed):
    rng = np.random.default_rng(1000 + seed)
    n = int(rng.integers(1, 6))
    m, p = int(rng.integers(1, 4)), int(rng.integers(1, 4))
    sys = random_minimal_system(rng, n, m, p, feedthrough=bool(seed % 2))
    Lt = n + 3  # trajectory length
    N = (m + 1) * (Lt + n) + n + 20
    d = collect_data(sys, N, 1.0, NoiseSpec(0.0, seed)).clean
    Hu, Hy = hankel(d.u, Lt), hankel(d.y, Lt)
    H = np.vstack([Hu, Hy])
    # membership: a fresh trajectory lies in the span
    u = rng.standard_normal((Lt, m))
    res = simulate(sys, rng.standard_normal(n), u)
    v = np.concatenate([u.reshape(-1), res.y.reshape(-1)])
    coef = np.linalg.lstsq(H, v, rcond=None)[0]
    assert np.linalg.norm(H @ coef - v) <= 1e-8 * np.linalg.norm(v)
    # exactness: any combination of columns is a trajectory
    alpha = rng.standard_normal(H.shape[1])
    u_bar = (Hu @ alpha).reshape(Lt, m)
    y_bar = (Hy @ alpha).reshape(Lt, p)
    x_start = initial_state_from_window(sys, u_bar[:n], y_bar[:n])
    y_sim = simulate(sys, x_start, u_bar).y
    assert np.max(np.abs(y_sim - y_bar)) <= 1e-8 * max(1.0, np.max(np.abs(y_bar)))


def test_c_pe_matches_pinv(tank, tank_data):
    diag = compute_c_pe(tank, tank_data, 30, 4)
    U = hankel(tank_data.u, 34)
    x = simulate(tank, np.zeros(4), tank_data.u).x
    Hux = np.vstack([U, x[:U.shape[1]].T])
    ref = np.linalg.norm(np.linalg.pinv(Hux), 2) ** 2
    assert diag.c_pe == pytest.approx(ref, rel=1e-8)
    assert diag.c_pe_input == pytest.approx(np.linalg.norm(np.linalg.pinv(U), 2) ** 2, rel=1e-8)
    assert diag.c_pe_input <= diag.bound_nu_over_rho2 * (1 + 1e-12)
    assert diag.rho > 0


def test_orthonormal_rows_constants(rng):
    Q, _ = np.linalg.qr(rng.standard_normal((12, 5)))
    c, nu, rho, bound = input_pe_constants(Q.T)
    assert (c, nu, rho, bound) == pytest.approx((1.0, 1.0, 1.0, 1.0), rel=1e-12)


def test_rank_deficient_rejected():
    with pytest.raises(np.linalg.LinAlgError):
        input_pe_constants(np.ones((3, 10)))


def test_amplitude_scaling_of_c_pe_input(tank):
    c1 = compute_c_pe(tank, collect_data(tank, 400, 1.0, NoiseSpec(0.0, 8)).clean, 30, 4).c_pe_input
    c2 = compute_c_pe(tank, collect_data(tank, 400, 2.0, NoiseSpec(0.0, 8)).clean, 30, 4).c_pe_input
    assert c1 / c2 == pytest.approx(4.0, rel=1e-9)


def test_c_pe_trend_in_N_is_logged(tank, capsys):
    # the decrease of c_pe with N is a conjecture; report it without asserting
    vals = {N: compute_c_pe(tank, collect_data(tank, N, 1.0, NoiseSpec(0.0, 0)).clean, 30, 4).c_pe
            for N in (200, 400)}
    print(f"c_pe(N=200)={vals[200]:.4g} c_pe(N=400)={vals[400]:.4g}")
    assert all(np.isfinite(v) and v > 0 for v in vals.values())


def test_nominal_bounds_vanish(tank, tank_eq, tank_data):
    dm = build_data_matrices(tank_data, 30, 4)
    cfg = MpcConfig(L=30, n=4, u_s=tank_eq.u_s, y_s=tank_eq.y_s, Q=3.0, R=1e-4)
    res = simulate(tank, np.ones(4), np.zeros((4, 2)))
    sol = solve_nominal(dm, cfg, np.zeros(8), res.y.reshape(-1))
    b = prediction_error_bound(tank, sol, cfg, 400)
    assert np.all(b.bound_l2 == 0) and np.all(b.bound_linf == 0)
    assert b.c5 == 2 * 367
    y_hat = open_loop_replay(tank, res.x[-1], sol)
    assert np.max(np.abs(y_hat - sol.y_future)) <= 1e-6


def test_equilibrium_replay(tank, tank_eq, tank_data):
    dm = build_data_matrices(tank_data, 30, 4)
    cfg = MpcConfig(L=30, n=4, u_s=tank_eq.u_s, y_s=tank_eq.y_s, Q=3.0, R=1e-4)
    sol = solve_nominal(dm, cfg, np.tile(tank_eq.u_s, 4), np.tile(tank_eq.y_s, 4))
    assert np.max(np.abs(open_loop_replay(tank, tank_eq.x_s, sol) - tank_eq.y_s)) <= 1e-9


def test_bounds_grow_with_noise_level(tank):
    log, _ = run_experiment(ExperimentConfig(T=6))
    sol = log.solves[0].solution
    cfg = ExperimentConfig().mpc_config()
    b1 = prediction_error_bound(tank, sol, cfg, 400)
    b2 = prediction_error_bound(tank, sol, dataclasses.replace(cfg, eps_bar=2 * cfg.eps_bar), 400)
    assert np.all(b2.bound_linf >= b1.bound_linf)
    eps_part1 = b1.bound_linf - np.max(np.abs(sol.sigma_blocks[4:]), axis=1) - b1.rho_inf * np.max(
        np.abs(sol.sigma_blocks[:4]))
    eps_part2 = b2.bound_linf - np.max(np.abs(sol.sigma_blocks[4:]), axis=1) - b2.rho_inf * np.max(
        np.abs(sol.sigma_blocks[:4]))
    np.testing.assert_allclose(eps_part2, 2 * eps_part1, rtol=1e-12)
    assert np.all(b1.bound_l2 >= 0) and np.all(b1.bound_linf >= 0)


def test_robust_run_within_bounds(tank):
    ec = ExperimentConfig(T=40)
    log, _ = run_experiment(ec)
    checks = check_prediction_errors(tank, log, ec.mpc_config(), ec.N)
    assert len(checks) == 40
    assert sum(c.violations for c in checks) == 0
