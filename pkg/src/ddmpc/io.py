"""File formats: trajectory, closed-loop log and diagnostics CSVs, system files.

Floats are written with 12 significant digits.
"""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .lti import LtiSystem
from .trajlib import Trajectory

FLOAT_FMT = "{:.12g}"


def _f(x) -> str:
    return FLOAT_FMT.format(float(x))


def write_trajectory_csv(path, traj: Trajectory) -> None:
    header = ["t"] + [f"u_{i + 1}" for i in range(traj.m)] + [f"y_{i + 1}" for i in range(traj.p)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for k in range(traj.N):
            w.writerow([k] + [_f(v) for v in traj.u[k]] + [_f(v) for v in traj.y[k]])


def read_trajectory_csv(path) -> Trajectory:
    """Parse a ``t,u_1..u_m,y_1..y_p`` CSV."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if not header or header[0] != "t":
        raise ValueError(f"{path}: first column must be 't'")
    ucols = [i for i, h in enumerate(header) if h.startswith("u_")]
    ycols = [i for i, h in enumerate(header) if h.startswith("y_")]
    if not ucols or not ycols or len(ucols) + len(ycols) + 1 != len(header):
        raise ValueError(f"{path}: header must read t,u_1..u_m,y_1..y_p")
    data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
    if data.ndim != 2 or data.shape[0] == 0:
        raise ValueError(f"{path}: no data rows")
    return Trajectory(data[:, ucols], data[:, ycols])


LOG_STATUSES = ("solved", "max_iterations", "infeasible", "diverged")


def write_log_csv(path, log) -> None:
    m, p = log.u.shape[1], log.y.shape[1]
    header = (["t"] + [f"u_{i + 1}" for i in range(m)] + [f"y_{i + 1}" for i in range(p)]
              + [f"ytilde_{i + 1}" for i in range(p)]
              + ["cost", "alpha_l2", "alpha_l1", "sigma_l2", "sigma_linf", "constraint12e", "status"])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for t in range(log.steps):
            w.writerow([t] + [_f(v) for v in log.u[t]] + [_f(v) for v in log.y[t]]
                       + [_f(v) for v in log.y_meas[t]]
                       + [_f(log.cost[t]), _f(log.alpha_l2[t]), _f(log.alpha_l1[t]),
                          _f(log.sigma_l2[t]), _f(log.sigma_linf[t]), int(log.constraint12e[t]),
                          log.status[t]])


def write_diagnostics_csv(path, checks) -> None:
    """One row per solve and prediction step; l2 columns are squared norms."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "k", "bound_l2", "bound_linf", "actual_l2", "actual_linf"])
        for c in checks:
            for k in range(c.actual_linf.size):
                w.writerow([c.t, k, _f(c.bound.bound_l2[k]), _f(c.bound.bound_linf[k]),
                            _f(c.actual_l2_sq[k]), _f(c.actual_linf[k])])


def read_system_file(path) -> LtiSystem:
    """Parse ``[A]``/``[B]``/``[C]``/``[D]`` sections of whitespace-separated rows.

    ``[D]`` may be omitted (zero feedthrough).
    """
    text = Path(path).read_text()
    mats: dict[str, list[list[float]]] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip().upper()
            if current not in "ABCD" or len(current) != 1:
                raise ValueError(f"{path}:{lineno}: unknown section [{current}]")
            mats[current] = []
            continue
        if current is None:
            raise ValueError(f"{path}:{lineno}: data before the first section header")
        try:
            mats[current].append([float(v) for v in line.split()])
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
    missing = [k for k in "ABC" if k not in mats]
    if missing:
        raise ValueError(f"{path}: missing section(s) {missing}")
    return LtiSystem(np.array(mats["A"]), np.array(mats["B"]), np.array(mats["C"]),
                     np.array(mats["D"]) if "D" in mats else None)


def write_system_file(path, sys: LtiSystem) -> None:
    with open(path, "w") as fh:
        for name in "ABCD":
            fh.write(f"[{name}]\n")
            for row in getattr(sys, name):
                fh.write(" ".join(_f(v) for v in row) + "\n")
