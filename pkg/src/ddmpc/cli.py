"""Command-line front end.

Subcommands: ``collect``, ``run``, ``reproduce-four-tank``, ``sweep`` and
``diagnose``.  Settings may come from a ``--config`` file of ``key = value``
lines under ``[section]`` headers; command-line flags override it.  Exit
codes: 0 success (a diverged run is a valid outcome), 2 configuration or I/O
error, 3 infeasible first solve.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import itertools
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .closedloop import DIVERGED
from .diagnostics import check_prediction_errors, compute_c_pe
from .experiments import ExperimentConfig, run_experiment
from .io import (read_system_file, read_trajectory_csv, write_diagnostics_csv, write_log_csv,
                 write_trajectory_csv, _f)
from .lti import four_tank
from .mpc import SCHEMES, SIGMA_MODES, PersistenceWarning
from .trajlib import persistence_of_excitation

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE = 0, 2, 3
CONFIG_SECTIONS = ("lti", "data", "mpc", "closedloop", "sweep", "output")


class ConfigError(Exception):
    pass


def _floats(text: str) -> list[float]:
    return [float(v) for v in str(text).replace(",", " ").split()]


def _ints(text: str) -> list[int]:
    return [int(v) for v in str(text).replace(",", " ").split()]


def _default_seed() -> int:
    try:
        return int(os.environ.get("DDMPC_SEED", "0"))
    except ValueError:
        return 0


def load_system(spec: str):
    if spec == "four_tank":
        return four_tank()
    path = Path(spec)
    if not path.is_file():
        raise ConfigError(f"system file not found: {spec}")
    try:
        return read_system_file(path)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="key = value config file with [section] headers")
    p.add_argument("--system", default="four_tank", help="'four_tank' or a system matrix file")
    p.add_argument("--seed", type=int, default=_default_seed(), help="RNG seed (env DDMPC_SEED)")


def _add_data(p):
    p.add_argument("--N", type=int, default=400, help="data length")
    p.add_argument("--amplitude", type=float, default=1.0, help="input amplitude of the experiment")
    p.add_argument("--eps", type=float, default=0.002, help="output noise bound")


def _add_mpc(p):
    p.add_argument("--L", type=int, default=30, help="prediction horizon")
    p.add_argument("--n", type=int, default=4, help="system order (upper bound)")
    p.add_argument("--Q", type=float, default=3.0, help="output weight (multiple of I)")
    p.add_argument("--R", type=float, default=1e-4, help="input weight (multiple of I)")
    p.add_argument("--lambda-alpha-eps", dest="lambda_alpha_eps", type=float, default=0.1,
                   help="product lambda_alpha * eps")
    p.add_argument("--lambda-alpha", dest="lambda_alpha", type=float, default=None,
                   help="absolute lambda_alpha (overrides --lambda-alpha-eps)")
    p.add_argument("--lambda-sigma", dest="lambda_sigma", type=float, default=1000.0)
    p.add_argument("--u-s", dest="u_s", type=_floats, default=None, help="input setpoint, e.g. 1,1")
    p.add_argument("--y-s", dest="y_s", type=_floats, default=None,
                   help="output setpoint (default: steady state of --system under u_s)")
    p.add_argument("--sigma-mode", dest="sigma_mode", choices=SIGMA_MODES, default="none")
    p.add_argument("--sigma-c", dest="sigma_c", type=float, default=None)
    for name in ("u_min", "u_max", "y_min", "y_max"):
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=float, default=None)


def _add_loop(p):
    p.add_argument("--scheme", choices=SCHEMES, default="robust")
    p.add_argument("--step", type=int, default=1, help="inputs applied per solve (1..n)")
    p.add_argument("--T", type=int, default=300, help="closed-loop steps")
    p.add_argument("--x0", type=_floats, default=None, help="initial plant state")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ddmpc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("collect", help="run an open-loop experiment and write data CSVs")
    _add_common(p)
    _add_data(p)
    p.add_argument("--L", type=int, default=30)
    p.add_argument("--n", type=int, default=4)
    p.add_argument("--out", default="data", help="output prefix: <out>_clean.csv, <out>_noisy.csv")

    p = sub.add_parser("run", help="closed-loop run; writes a log CSV and prints a summary")
    _add_common(p)
    _add_data(p)
    _add_mpc(p)
    _add_loop(p)
    p.add_argument("--data", help="measured trajectory CSV (default: collect from --system)")
    p.add_argument("--log", default="run_log.csv")
    p.add_argument("--diagnostics", default=None, help="also write prediction-error bounds CSV")

    p = sub.add_parser("reproduce-four-tank", help="TEC 1-step, TEC n-step and UCON runs")
    _add_common(p)
    p.add_argument("--T", type=int, default=300)
    p.add_argument("--out-dir", dest="out_dir", default="four_tank_out")
    p.add_argument("--lambda-sweep", dest="lambda_sweep", action="store_true",
                   help="also run lambda_alpha*eps in {0.05, 0.1, 0.5}")

    p = sub.add_parser("sweep", help="Cartesian parameter sweep, one summary row per run")
    _add_common(p)
    _add_data(p)
    _add_mpc(p)
    _add_loop(p)
    p.add_argument("--eps-list", dest="eps_list", type=_floats, default=None)
    p.add_argument("--lambda-alpha-eps-list", dest="lambda_alpha_eps_list", type=_floats, default=None)
    p.add_argument("--lambda-sigma-list", dest="lambda_sigma_list", type=_floats, default=None)
    p.add_argument("--L-list", dest="L_list", type=_ints, default=None)
    p.add_argument("--N-list", dest="N_list", type=_ints, default=None)
    p.add_argument("--seeds", type=_ints, default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", default="sweep.csv")

    p = sub.add_parser("diagnose", help="excitation constants and prediction-error bounds")
    _add_common(p)
    _add_data(p)
    _add_mpc(p)
    _add_loop(p)
    p.add_argument("--pe-out", dest="pe_out", default="pe_diagnostics.csv")
    p.add_argument("--bounds-out", dest="bounds_out", default="prediction_bounds.csv")
    return parser


def _apply_config_file(parser: argparse.ArgumentParser, argv) -> None:
    """Feed ``--config`` values to the chosen subparser as defaults."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("command", nargs="?")
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    path = Path(known.config)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    cp = configparser.ConfigParser()
    cp.optionxform = str  # keys are case sensitive: n and N differ
    try:
        cp.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    subparser = parser._subparsers._group_actions[0].choices.get(known.command)
    if subparser is None:
        return
    dests = {a.dest for a in subparser._actions}
    values = {}
    for section in cp.sections():
        if section not in CONFIG_SECTIONS:
            raise ConfigError(f"{path}: unknown section [{section}]")
        for key, val in cp.items(section):
            key = key.replace("-", "_")
            if key not in dests:
                raise ConfigError(f"{path}: key '{key}' in [{section}] not valid for '{known.command}'")
            values[key] = val
    subparser.set_defaults(**values)


def _experiment(args, **overrides) -> ExperimentConfig:
    fields = dict(system=load_system(args.system), N=args.N, amplitude=args.amplitude, eps=args.eps,
                  seed=args.seed, L=args.L, n=args.n, Q=args.Q, R=args.R,
                  lambda_alpha_eps=args.lambda_alpha_eps, lambda_alpha=args.lambda_alpha,
                  lambda_sigma=args.lambda_sigma, scheme=args.scheme, step=args.step, T=args.T,
                  u_s=args.u_s, y_s=args.y_s, x0=args.x0, sigma_mode=args.sigma_mode,
                  sigma_c=args.sigma_c, u_min=args.u_min, u_max=args.u_max,
                  y_min=args.y_min, y_max=args.y_max)
    fields.update(overrides)
    return ExperimentConfig(**fields)


def _summary_line(name, m) -> str:
    settle = "-" if m.settle_time is None else str(m.settle_time)
    if m.status == DIVERGED:
        outcome = "diverged"
    elif m.converged:
        outcome = "converged"
    else:
        outcome = "not_converged" if m.status == "completed" else m.status
    return (f"{name:<18} {outcome:<10} max_terminal_error={_f(m.max_terminal_error)} "
            f"settle_time={settle} cost_decrease_violations={m.cost_decrease_violations} "
            f"mean_alpha_norm={_f(m.mean_alpha_norm)}")


def cmd_collect(args) -> int:
    ec = ExperimentConfig(system=load_system(args.system), N=args.N, amplitude=args.amplitude,
                          eps=args.eps, seed=args.seed)
    if args.N < 1 or args.eps < 0:
        raise ConfigError("N must be positive and eps nonnegative")
    data = ec.collect()
    write_trajectory_csv(f"{args.out}_clean.csv", data.clean)
    write_trajectory_csv(f"{args.out}_noisy.csv", data.noisy)
    order = args.L + 2 * args.n
    pe = persistence_of_excitation(data.clean.u, order)
    print(f"wrote {args.out}_clean.csv and {args.out}_noisy.csv (N={args.N})")
    print(f"persistence of excitation: order={order} is_pe={str(pe.is_pe).lower()} "
          f"rank={pe.rank}/{data.clean.m * order} sigma_min={_f(pe.sigma_min)}")
    if not pe.is_pe:
        print(f"warning: input is not persistently exciting of order {order}; "
              f"increase N or the input amplitude", file=sys.stderr)
    return EXIT_OK


def _load_data(args):
    if not args.data:
        return None
    path = Path(args.data)
    if not path.is_file():
        raise ConfigError(f"data file not found: {path}")
    try:
        return read_trajectory_csv(path)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _validated(ec: ExperimentConfig) -> ExperimentConfig:
    try:
        ec.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return ec


def cmd_run(args) -> int:
    ec = _validated(_experiment(args, data=_load_data(args)))
    log, m = run_experiment(ec)
    write_log_csv(args.log, log)
    if args.diagnostics:
        checks = check_prediction_errors(ec.system, log, ec.mpc_config(), ec.measured_data().N)
        write_diagnostics_csv(args.diagnostics, checks)
    if log.final_status == "infeasible" and log.steps == 0:
        print("error: MPC problem infeasible at t=0", file=sys.stderr)
        return EXIT_INFEASIBLE
    print(_summary_line(ec.scheme, m))
    print(f"status={log.final_status} steps={log.steps} log={args.log}")
    return EXIT_OK


FOUR_TANK_RUNS = (("tec_1step", "robust", 1), ("tec_nstep", "robust", 4),
                  ("ucon_1step", "robust_no_terminal", 1))


def cmd_reproduce(args) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    base = ExperimentConfig(seed=args.seed, T=args.T)
    rows = []
    for name, scheme, step in FOUR_TANK_RUNS:
        ec = _validated(base.replace(scheme=scheme, step=step))
        log, m = run_experiment(ec, keep_solutions=False)
        write_log_csv(out / f"{name}.csv", log)
        rows.append((name, m))
    if args.lambda_sweep:
        for lae in (0.05, 0.1, 0.5):
            ec = _validated(base.replace(lambda_alpha_eps=lae))
            _, m = run_experiment(ec, keep_solutions=False)
            rows.append((f"tec_1step_lae={lae:g}", m))
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["run", "status", "converged", "max_terminal_error", "settle_time",
                    "mean_alpha_norm"])
        for name, m in rows:
            w.writerow([name, m.status, int(m.converged), _f(m.max_terminal_error),
                        "" if m.settle_time is None else m.settle_time, _f(m.mean_alpha_norm)])
    for name, m in rows:
        print(_summary_line(name, m))
    return EXIT_OK


SWEEP_KEYS = (("eps", "eps_list"), ("lambda_alpha_eps", "lambda_alpha_eps_list"),
              ("lambda_sigma", "lambda_sigma_list"), ("L", "L_list"), ("N", "N_list"),
              ("seed", "seeds"))


def _sweep_row(ec: ExperimentConfig):
    try:
        log, m = run_experiment(ec, keep_solutions=False)
    except Exception as exc:  # noqa: BLE001 - record per-row failure, keep sweeping
        return {"status": "error", "error": str(exc)}
    flagged = m.status != "completed" or not m.converged
    return {"status": m.status, "converged": int(m.converged),
            "max_terminal_error": _f(m.max_terminal_error),
            "settle_time": "" if m.settle_time is None else m.settle_time,
            "mean_alpha_norm": _f(m.mean_alpha_norm), "flagged": int(flagged), "error": ""}


def cmd_sweep(args) -> int:
    base = _experiment(args)
    axes = []
    for key, list_dest in SWEEP_KEYS:
        vals = getattr(args, list_dest)
        if vals is not None and len(vals) == 0:
            raise ConfigError(f"--{list_dest.replace('_', '-')} is empty")
        axes.append((key, vals if vals else [getattr(base, key)]))
    configs = []
    for combo in itertools.product(*(v for _, v in axes)):
        ec = base.replace(**{k: v for (k, _), v in zip(axes, combo)})
        _validated(ec)
        configs.append((combo, ec))
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_sweep_row, [ec for _, ec in configs]))
    else:
        results = [_sweep_row(ec) for _, ec in configs]
    cols = ["status", "converged", "max_terminal_error", "settle_time", "mean_alpha_norm",
            "flagged", "error"]
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([k for k, _ in axes] + cols)
        for (combo, _), res in zip(configs, results):
            w.writerow([_f(v) if isinstance(v, float) else v for v in combo]
                       + [res.get(c, "") for c in cols])
    n_flag = sum(int(r.get("flagged", 1) or r["status"] == "error") for r in results)
    print(f"wrote {args.out}: {len(results)} runs, {n_flag} flagged")
    return EXIT_OK


def cmd_diagnose(args) -> int:
    ec = _validated(_experiment(args))
    data = ec.collect()
    pe = compute_c_pe(ec.system, data.clean, ec.L, ec.n)
    with open(args.pe_out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["c_pe", "c_pe_input", "nu", "rho", "bound_nu_over_rho2", "eps", "c_pe_times_eps"])
        w.writerow([_f(pe.c_pe), _f(pe.c_pe_input), _f(pe.nu), _f(pe.rho),
                    _f(pe.bound_nu_over_rho2), _f(ec.eps), _f(pe.c_pe * ec.eps)])
    log, m = run_experiment(ec)
    checks = check_prediction_errors(ec.system, log, ec.mpc_config(), ec.N)
    write_diagnostics_csv(args.bounds_out, checks)
    viol = sum(c.violations for c in checks)
    print(f"c_pe={_f(pe.c_pe)} c_pe_input={_f(pe.c_pe_input)} nu/rho^2={_f(pe.bound_nu_over_rho2)}")
    print(f"prediction-error bound checks: {len(checks)} solves, {viol} violations")
    return EXIT_OK


COMMANDS = {"collect": cmd_collect, "run": cmd_run, "reproduce-four-tank": cmd_reproduce,
            "sweep": cmd_sweep, "diagnose": cmd_diagnose}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        _apply_config_file(parser, argv)
        args = parser.parse_args(argv)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", PersistenceWarning)
            return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
