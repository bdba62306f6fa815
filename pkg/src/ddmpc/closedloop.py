"""Receding-horizon execution of the data-driven MPC schemes.

A run applies a constant warm-up input for ``n`` steps to obtain the first
measured window, then repeatedly solves the configured problem and applies
the first ``s`` optimal inputs (``s = 1``: one-step scheme, ``s = n``:
n-step scheme).  The controller only sees measured inputs and noisy outputs;
the true state is logged for diagnostics.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lti import Equilibrium, LtiSystem, NoiseSpec, simulate
from .mpc import NOMINAL, SCHEMES, DataMatrices, MpcConfig, MpcSolution, solve
from .qpsolve import QpSettings

DIVERGED = "diverged"
COMPLETED = "completed"
DIVERGENCE_GUARD = 1e6


@dataclass
class RunConfig:
    scheme: str
    data: DataMatrices
    mpc: MpcConfig
    T: int
    step_size: int = 1
    warmup_input: np.ndarray | None = None
    x0: np.ndarray | None = None
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    qps: QpSettings | None = None
    keep_solutions: bool = True

    def __post_init__(self):
        n = self.mpc.n
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        self.mpc.validate(self.scheme)
        if not 1 <= self.step_size <= n:
            raise ValueError(f"step_size must lie in [1, n={n}]")
        if self.T < n:
            raise ValueError(f"T must be at least n={n}")
        self.warmup_input = (self.mpc.u_s.copy() if self.warmup_input is None
                             else np.asarray(self.warmup_input, float).reshape(self.mpc.m))


@dataclass
class SolveRecord:
    t: int
    x_t: np.ndarray  # true plant state at solve time
    u_init: np.ndarray
    y_init: np.ndarray  # measured window handed to the controller
    eps_init: np.ndarray  # online noise realized on that window
    solution: MpcSolution | None


@dataclass
class ClosedLoopLog:
    """Per-step record of a closed-loop run (steps ``t = 0 .. T'-1``).

    Solve-level columns repeat across the steps of a block.  The warm-up
    phase (``t = -n .. -1``) is kept separately.
    """

    u: np.ndarray
    y: np.ndarray
    y_meas: np.ndarray
    x: np.ndarray  # states x_0 .. x_{T'}
    cost: np.ndarray
    alpha_l2: np.ndarray
    alpha_l1: np.ndarray
    sigma_l2: np.ndarray
    sigma_linf: np.ndarray
    constraint12e: np.ndarray
    status: list
    applied_stage_cost: np.ndarray
    solve_start: np.ndarray  # bool, True on steps where a solve happened
    warmup_u: np.ndarray
    warmup_y: np.ndarray
    warmup_y_meas: np.ndarray
    x0: np.ndarray
    n: int
    step_size: int
    T: int
    final_status: str
    solves: list = field(default_factory=list)

    @property
    def steps(self) -> int:
        return self.u.shape[0]

    @property
    def t(self) -> np.ndarray:
        return np.arange(self.steps)

    def tracking_error(self, y_s) -> np.ndarray:
        return np.linalg.norm(self.y - np.asarray(y_s), axis=1)

    def extended_state_error(self, u_s, y_s) -> np.ndarray:
        """``||xi_t - xi^s||_2`` for ``t = 0 .. T'`` from the true inputs/outputs."""
        u = np.vstack([self.warmup_u, self.u]) - np.asarray(u_s)
        y = np.vstack([self.warmup_y, self.y]) - np.asarray(y_s)
        n = self.n
        sq = np.sum(u ** 2, axis=1) + np.sum(y ** 2, axis=1)
        csum = np.concatenate([[0.0], np.cumsum(sq)])
        return np.sqrt(csum[n:] - csum[:-n])

    def all_inputs(self) -> np.ndarray:
        return np.vstack([self.warmup_u, self.u])

    def all_outputs(self) -> np.ndarray:
        return np.vstack([self.warmup_y, self.y])


def run(sys: LtiSystem, rc: RunConfig) -> ClosedLoopLog:
    """Execute the receding-horizon loop on the plant ``sys``."""
    n, m, p, s = rc.mpc.n, sys.m, sys.p, rc.step_size
    x = np.zeros(sys.n) if rc.x0 is None else np.asarray(rc.x0, float).reshape(sys.n)
    x0 = x.copy()
    wu, wy, wym, weps = [], [], [], []
    for _ in range(n):
        u = rc.warmup_input
        y = sys.C @ x + sys.D @ u
        eps = rc.noise.sample(p)
        wu.append(u)
        wy.append(y)
        wym.append(y + eps)
        weps.append(eps)
        x = sys.A @ x + sys.B @ u

    T = rc.T
    U, Y, YM, X = np.zeros((T, m)), np.zeros((T, p)), np.zeros((T, p)), np.zeros((T + 1, sys.n))
    cols = {k: np.full(T, np.nan) for k in ("cost", "alpha_l2", "alpha_l1", "sigma_l2", "sigma_linf",
                                            "applied_stage_cost")}
    c12e = np.zeros(T, dtype=bool)
    start = np.zeros(T, dtype=bool)
    status = [""] * T
    u_hist, ym_hist, eps_hist = list(wu), list(wym), list(weps)
    solves = []
    final = COMPLETED
    X[0] = x
    t = 0
    while t < T:
        u_init = np.concatenate(u_hist[-n:])
        y_init = np.concatenate(ym_hist[-n:])
        sol = solve(rc.data, rc.mpc, rc.scheme, u_init, y_init, rc.qps)
        solves.append(SolveRecord(t, x.copy(), u_init, y_init, np.concatenate(eps_hist[-n:]),
                                  sol if rc.keep_solutions else None))
        if sol.status == "infeasible":
            final = "infeasible"
            status[t] = sol.status
            T = t
            break
        blk = min(s, T - t)
        vals = {"cost": sol.cost, "alpha_l2": np.linalg.norm(sol.alpha),
                "alpha_l1": np.sum(np.abs(sol.alpha)), "sigma_l2": np.linalg.norm(sol.sigma),
                "sigma_linf": np.max(np.abs(sol.sigma)) if sol.sigma.size else 0.0,
                "applied_stage_cost": float(np.sum(sol.stage_costs[:s]))}
        start[t] = True
        diverged = False
        for j in range(blk):
            u = sol.u_future[j]
            y = sys.C @ x + sys.D @ u
            eps = rc.noise.sample(p)
            U[t], Y[t], YM[t] = u, y, y + eps
            for k, v in vals.items():
                cols[k][t] = v
            c12e[t] = sol.sigma_constraint_satisfied
            status[t] = sol.status
            x = sys.A @ x + sys.B @ u
            X[t + 1] = x
            u_hist.append(u)
            ym_hist.append(y + eps)
            eps_hist.append(eps)
            t += 1
            if not np.all(np.isfinite(y)) or np.max(np.abs(y)) > DIVERGENCE_GUARD:
                diverged = True
                break
        if diverged:
            status[t - 1] = DIVERGED
            final = DIVERGED
            T = t
            break

    return ClosedLoopLog(
        u=U[:T], y=Y[:T], y_meas=YM[:T], x=X[:T + 1],
        cost=cols["cost"][:T], alpha_l2=cols["alpha_l2"][:T], alpha_l1=cols["alpha_l1"][:T],
        sigma_l2=cols["sigma_l2"][:T], sigma_linf=cols["sigma_linf"][:T],
        constraint12e=c12e[:T], status=status[:T], applied_stage_cost=cols["applied_stage_cost"][:T],
        solve_start=start[:T], warmup_u=np.array(wu), warmup_y=np.array(wy),
        warmup_y_meas=np.array(wym), x0=x0, n=n, step_size=s, T=rc.T, final_status=final,
        solves=solves)


@dataclass(frozen=True)
class Metrics:
    max_terminal_error: float
    settle_time: int | None
    cost_decrease_violations: int
    mean_alpha_norm: float
    status: str
    converged: bool


def metrics(log: ClosedLoopLog, eq: Equilibrium, threshold: float = 0.05,
            tail_start: int | None = None, cost_tol: float = 1e-6) -> Metrics:
    """Summarize a run.

    ``max_terminal_error`` is ``max ||y_t - y_s||_inf`` over ``t >= tail_start``
    (default ``2T/3``); ``settle_time`` is the first step after which the
    error stays within ``threshold`` (``None`` if never).  Cost-decrease
    violations count consecutive solves with
    ``J(t+s) > J(t) - sum of applied stage costs + cost_tol``.
    """
    y_s = np.asarray(eq.y_s)
    tail = (2 * log.T) // 3 if tail_start is None else tail_start
    if log.final_status in (DIVERGED, "infeasible") or log.steps < log.T:
        mte = np.inf
    else:
        err = np.max(np.abs(log.y[tail:] - y_s), axis=1)
        mte = float(np.max(err)) if err.size else 0.0
    err_all = np.max(np.abs(log.y - y_s), axis=1) if log.steps else np.zeros(0)
    bad = np.nonzero(err_all > threshold)[0]
    if log.final_status == DIVERGED:
        settle = None
    elif bad.size == 0:
        settle = 0
    else:
        settle = int(bad[-1] + 1) if bad[-1] + 1 < log.steps else None

    idx = np.nonzero(log.solve_start)[0]
    J = log.cost[idx]
    ell = log.applied_stage_cost[idx]
    viol = int(np.sum(J[1:] > J[:-1] - ell[:-1] + cost_tol)) if J.size > 1 else 0
    mean_alpha = float(np.nanmean(log.alpha_l2[idx])) if idx.size else float("nan")
    converged = bool(np.isfinite(mte) and mte <= threshold)
    return Metrics(mte, settle, viol, mean_alpha, log.final_status, converged)


def resimulate(sys: LtiSystem, log: ClosedLoopLog) -> np.ndarray:
    """True outputs obtained by replaying the logged inputs from ``x0``."""
    return simulate(sys, log.x0, log.all_inputs()).y
