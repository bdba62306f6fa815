import numpy as np
import pytest

from ddmpc.closedloop import COMPLETED, DIVERGED, RunConfig, metrics, resimulate, run
from ddmpc.experiments import ExperimentConfig, run_experiment
from ddmpc.lti import NoiseSpec, collect_data
from ddmpc.mpc import MpcConfig, build_data_matrices


@pytest.fixture(scope="module")
def clean_data(tank):
    return build_data_matrices(collect_data(tank, 400, 1.0, NoiseSpec(0.0, 0)).clean, 30, 4)


def _nominal_rc(clean_data, tank_eq, **kw):
    cfg_kw = {k: kw.pop(k) for k in list(kw) if k in ("u_lo", "u_hi", "y_lo", "y_hi")}
    cfg = MpcConfig(L=30, n=4, u_s=tank_eq.u_s, y_s=tank_eq.y_s, Q=3.0, R=1e-4, **cfg_kw)
    base = dict(scheme="nominal", data=clean_data, mpc=cfg, T=40)
    base.update(kw)
    return RunConfig(**base)


def test_equilibrium_invariance(tank, tank_eq, clean_data):
    log = run(tank, _nominal_rc(clean_data, tank_eq, x0=tank_eq.x_s))
    assert np.max(np.abs(log.u - tank_eq.u_s)) <= 1e-6
    assert np.max(np.abs(log.y - tank_eq.y_s)) <= 1e-6
    m = metrics(log, tank_eq)
    assert m.settle_time == 0 and m.max_terminal_error <= 1e-6


@pytest.mark.parametrize("step", [1, 2, 4])
def test_plant_and_input_consistency(tank, tank_eq, clean_data, step):
    log = run(tank, _nominal_rc(clean_data, tank_eq, step_size=step, T=21))
    assert log.steps == 21 and log.x.shape == (22, 4)
    y_all = resimulate(tank, log)
    assert np.max(np.abs(y_all[4:] - log.y)) <= 1e-12
    assert np.max(np.abs(y_all[:4] - log.warmup_y)) <= 1e-12
    for rec in log.solves:
        blk = slice(rec.t, min(rec.t + step, log.steps))
        assert np.array_equal(log.u[blk], rec.solution.u_future[:blk.stop - blk.start])
    assert int(log.solve_start.sum()) == len(log.solves) == -(-21 // step)


def test_measured_output_carries_bounded_noise(tank, tank_eq, clean_data):
    cfg = MpcConfig(L=30, n=4, u_s=tank_eq.u_s, y_s=tank_eq.y_s, Q=3.0, R=1e-4,
                    lambda_alpha=10.0, lambda_sigma=1000.0, eps_bar=0.01)
    rc = RunConfig("robust", clean_data, cfg, T=10, noise=NoiseSpec(0.01, 3, stream=1))
    log = run(tank, rc)
    assert log.steps == 10
    d = np.abs(log.y_meas - log.y)
    assert np.all(d <= 0.01) and np.any(d > 0)
    np.testing.assert_array_equal(log.solves[0].y_init, log.warmup_y_meas.reshape(-1))


def test_nominal_recursive_feasibility_and_box(tank, tank_eq, clean_data):
    box = dict(u_lo=0.0, u_hi=2.0, y_lo=0.0, y_hi=1.2)
    free = run(tank, _nominal_rc(clean_data, tank_eq, T=60))
    assert free.u.max() > 2.0  # the input box is active
    log = run(tank, _nominal_rc(clean_data, tank_eq, T=60, **box))
    assert log.final_status == COMPLETED
    assert all(s == "solved" for s in log.status)
    assert np.all(log.u >= -1e-8) and np.all(log.u <= 2.0 + 1e-8)
    assert np.all(log.y >= -1e-8) and np.all(log.y <= 1.2 + 1e-8)


def test_nominal_cost_decrease(tank, tank_eq, clean_data):
    log = run(tank, _nominal_rc(clean_data, tank_eq, T=60))
    assert metrics(log, tank_eq).cost_decrease_violations == 0


def test_infeasible_start_stops_run(tank, tank_eq, clean_data):
    log = run(tank, _nominal_rc(clean_data, tank_eq, u_lo=-0.5, u_hi=0.5))
    assert log.final_status == "infeasible" and log.steps == 0
    assert metrics(log, tank_eq).max_terminal_error == np.inf


def test_run_config_validation(tank_eq, clean_data):
    with pytest.raises(ValueError):
        _nominal_rc(clean_data, tank_eq, step_size=5)
    with pytest.raises(ValueError):
        _nominal_rc(clean_data, tank_eq, T=3)
    with pytest.raises(ValueError):
        _nominal_rc(clean_data, tank_eq, scheme="mystery")


def test_extended_state_error_definition(tank, tank_eq, clean_data):
    log = run(tank, _nominal_rc(clean_data, tank_eq, T=12))
    xi = log.extended_state_error(tank_eq.u_s, tank_eq.y_s)
    assert xi.shape == (13,)
    u, y = log.all_inputs(), log.all_outputs()
    t = 7
    ref = np.sqrt(np.sum((u[t:t + 4] - tank_eq.u_s) ** 2) + np.sum((y[t:t + 4] - tank_eq.y_s) ** 2))
    assert xi[t] == pytest.approx(ref, rel=1e-12)


def test_robust_noise_level_monotone_tracking():
    errs = [run_experiment(ExperimentConfig(eps=e, seed=2, T=150), keep_solutions=False)[1].max_terminal_error
            for e in (0.002, 0.0002)]
    assert errs[1] <= errs[0]


def test_divergence_guard(tank, tank_eq, clean_data):
    import ddmpc.closedloop as cl
    rc = _nominal_rc(clean_data, tank_eq, T=10, x0=np.full(4, 10.0))
    old = cl.DIVERGENCE_GUARD
    cl.DIVERGENCE_GUARD = 1.0
    try:
        log = run(tank, rc)
    finally:
        cl.DIVERGENCE_GUARD = old
    assert log.final_status == DIVERGED and log.status[-1] == DIVERGED
    m = metrics(log, tank_eq)
    assert not m.converged and m.settle_time is None
