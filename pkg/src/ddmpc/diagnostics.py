"""Model-based diagnostics: data-driven simulation, excitation constants and
prediction-error bounds.

Everything except :func:`data_driven_simulate` needs the true plant and is
meant for tests and offline analysis; the controller never calls into it.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lti import LtiSystem, observability_pseudoinverse, simulate
from .mpc import DataMatrices, MpcConfig, MpcSolution
from .trajlib import DimensionError, Trajectory, as_sequence, hankel


class InconsistentWindowError(ValueError):
    """The initial window is not (close to) a trajectory of the data-generating system."""


def data_driven_simulate(data: DataMatrices, u_init, y_init, u_future, tol: float = 1e-6) -> np.ndarray:
    """Predict the output for ``u_future`` after the initial window, from data only.

    Finds the minimum-norm ``alpha`` matching the input rows and the initial
    output rows and returns the remaining output rows.  ``u_future`` may be
    shorter than the data horizon.
    """
    n, m, p = data.n, data.m, data.p
    u_future = as_sequence(u_future, m)
    Lf = u_future.shape[0]
    if Lf > data.L:
        raise DimensionError(f"u_future has {Lf} steps, data support at most {data.L}")
    u_init = np.asarray(u_init, float).reshape(-1)
    y_init = np.asarray(y_init, float).reshape(-1)
    if u_init.size != m * n or y_init.size != p * n:
        raise DimensionError("initial window has the wrong size")
    M = np.vstack([data.u_rows(-n, Lf), data.y_rows(-n, 0)])
    b = np.concatenate([u_init, u_future.reshape(-1), y_init])
    alpha = np.linalg.lstsq(M, b, rcond=None)[0]
    resid = np.linalg.norm(M @ alpha - b)
    if resid > tol * max(1.0, np.linalg.norm(b)):
        raise InconsistentWindowError(f"least-squares residual {resid:.3g} exceeds tolerance")
    return (data.y_rows(0, Lf) @ alpha).reshape(Lf, p)


def toeplitz_io(sys: LtiSystem, k: int) -> np.ndarray:
    """Block lower-triangular map from ``u_[0,k-1]`` to ``y_[0,k-1]`` at zero state."""
    p, m = sys.p, sys.m
    markov = [sys.D]
    Ak_B = sys.B
    for _ in range(1, k):
        markov.append(sys.C @ Ak_B)
        Ak_B = sys.A @ Ak_B
    T = np.zeros((p * k, m * k))
    for i in range(k):
        for j in range(i + 1):
            T[i * p:(i + 1) * p, j * m:(j + 1) * m] = markov[i - j]
    return T


def initial_state_from_window(sys: LtiSystem, u_win, y_win) -> np.ndarray:
    """State at the start of an ``n``-step input/output window (least squares)."""
    n = sys.n
    u_win = np.asarray(u_win, float).reshape(-1)
    y_win = np.asarray(y_win, float).reshape(-1)
    Phi, Phi_dagger = observability_pseudoinverse(sys)
    return Phi_dagger @ (y_win[:sys.p * n] - toeplitz_io(sys, n) @ u_win[:sys.m * n])


@dataclass(frozen=True)
class PeDiagnostics:
    c_pe: float
    c_pe_input: float
    nu: float
    rho: float
    bound_nu_over_rho2: float


def input_pe_constants(U: np.ndarray) -> tuple[float, float, float, float]:
    """``(c_pe_input, nu, rho, nu / rho^2)`` for a full-row-rank matrix ``U``."""
    sv = np.linalg.svd(U, compute_uv=False)
    if sv.size < U.shape[0] or sv[-1] <= 1e-12 * sv[0]:
        raise np.linalg.LinAlgError("matrix does not have full row rank")
    nu, rho = sv[0] ** 2, sv[-1] ** 2
    return 1.0 / sv[-1] ** 2, nu, rho, nu / rho ** 2


def compute_c_pe(sys: LtiSystem, data_clean: Trajectory, L: int, n: int, x0=None) -> PeDiagnostics:
    """Excitation constants of the data.

    ``c_pe = ||H_ux^+||_2^2 = sigma_min(H_ux)^-2`` where ``H_ux`` stacks
    ``H_{L+n}(u^d)`` over the states ``x^d_0 .. x^d_{N-L-n}`` (reconstructed
    by simulating ``sys`` from ``x0``, zero by default).  The input-only
    constants use ``U = H_{L+n}(u^d)``.
    """
    x0 = np.zeros(sys.n) if x0 is None else x0
    U = hankel(data_clean.u, L + n)
    xd = simulate(sys, x0, data_clean.u).x
    Hux = np.vstack([U, xd[:U.shape[1]].T])
    sv = np.linalg.svd(Hux, compute_uv=False)
    if sv[-1] <= 1e-12 * sv[0] or sv.size < Hux.shape[0]:
        raise np.linalg.LinAlgError("H_ux is row-rank deficient; data not exciting enough")
    c_u, nu, rho, bound = input_pe_constants(U)
    return PeDiagnostics(1.0 / sv[-1] ** 2, c_u, nu, rho, bound)


@dataclass(frozen=True)
class PredictionErrorBound:
    """Right-hand sides of the prediction-error inequalities for ``k = 0..L-1``.

    ``bound_l2`` bounds the *squared* 2-norm error, ``bound_linf`` the
    infinity-norm error.
    """

    bound_l2: np.ndarray
    bound_linf: np.ndarray
    rho2: np.ndarray
    rho_inf: np.ndarray
    c5: float


def prediction_error_bound(sys: LtiSystem, sol: MpcSolution, cfg: MpcConfig, N: int) -> PredictionErrorBound:
    L, n, p = cfg.L, cfg.n, cfg.p
    eps = cfg.eps_bar
    _, Phi_dagger = observability_pseudoinverse(sys)
    An = np.linalg.matrix_power(sys.A, n)
    rho2, rho_inf = np.empty(L), np.empty(L)
    M = sys.C @ An
    for k in range(L):
        G = M @ Phi_dagger
        rho2[k] = np.linalg.norm(G, 2) ** 2
        rho_inf[k] = np.linalg.norm(G, np.inf)
        M = M @ sys.A
    c5 = p * (N - L - n + 1)
    a2 = float(sol.alpha @ sol.alpha)
    a1 = float(np.sum(np.abs(sol.alpha)))
    sig = sol.sigma.reshape(L + n, p)
    s_init = sig[:n].reshape(-1)
    s_fut = sig[n:]
    sk2 = np.sum(s_fut ** 2, axis=1)
    skinf = np.max(np.abs(s_fut), axis=1)
    bound_l2 = (8 * c5 * eps ** 2 * a2 + 2 * sk2
                + rho2 * (16 * n * eps ** 2 * (c5 * a2 + p) + 4 * float(s_init @ s_init)))
    bound_linf = (eps * a1 + skinf
                  + rho_inf * (eps * (a1 + 1) + (np.max(np.abs(s_init)) if s_init.size else 0.0)))
    return PredictionErrorBound(bound_l2, bound_linf, rho2, rho_inf, float(c5))


def open_loop_replay(sys: LtiSystem, x_t, sol: MpcSolution) -> np.ndarray:
    """Plant output when the predicted inputs are applied open loop from ``x_t``."""
    return simulate(sys, x_t, sol.u_future).y


@dataclass(frozen=True)
class PredictionErrorCheck:
    t: int
    bound: PredictionErrorBound
    actual_l2_sq: np.ndarray
    actual_linf: np.ndarray

    @property
    def violations(self) -> int:
        return int(np.sum(self.actual_l2_sq > self.bound.bound_l2)
                   + np.sum(self.actual_linf > self.bound.bound_linf))


def check_prediction_errors(sys: LtiSystem, log, cfg: MpcConfig, N: int) -> list[PredictionErrorCheck]:
    """Compare every logged solve's prediction against its open-loop replay."""
    out = []
    for rec in log.solves:
        sol = rec.solution
        if sol is None or not sol.ok:
            continue
        y_hat = open_loop_replay(sys, rec.x_t, sol)
        err = y_hat - sol.y_future
        out.append(PredictionErrorCheck(rec.t, prediction_error_bound(sys, sol, cfg, N),
                                        np.sum(err ** 2, axis=1), np.max(np.abs(err), axis=1)))
    return out
