"""Nominal and robust data-driven MPC problems built from Hankel data.

Predicted trajectories run over indices ``k = -n, ..., L-1``: the first ``n``
steps pin the initial condition to the last measured window, the last ``n``
steps carry the terminal equality constraint.  Both schemes are condensed
onto the Hankel weights ``alpha`` (nominal) or ``(alpha, sigma)`` (robust),
so the predictions are affine images of the decision vector.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .qpsolve import QpProblem, QpSettings, solve_qp, INFEASIBLE
from .trajlib import DimensionError, PeReport, Trajectory, hankel, persistence_of_excitation

NOMINAL = "nominal"
ROBUST = "robust"
ROBUST_NO_TERMINAL = "robust_no_terminal"
SCHEMES = (NOMINAL, ROBUST, ROBUST_NO_TERMINAL)

SIGMA_NONE = "none"
SIGMA_CONVEX_BOUND = "convex_bound"
SIGMA_EXACT_CHECK = "exact_nonconvex_check"
SIGMA_MODES = (SIGMA_NONE, SIGMA_CONVEX_BOUND, SIGMA_EXACT_CHECK)

# Tikhonov weight selecting a minimal-norm alpha when the alpha block is only PSD
ALPHA_TIKHONOV = 1e-8
# relative singular value cutoff defining the row space of the stacked Hankel matrix
ROW_SPACE_TOL = 1e-10


class PersistenceWarning(UserWarning):
    """Input data are not persistently exciting of the required order."""


def _box(lo, hi, dim):
    lo = np.full(dim, -np.inf) if lo is None else np.broadcast_to(np.asarray(lo, float), (dim,)).copy()
    hi = np.full(dim, np.inf) if hi is None else np.broadcast_to(np.asarray(hi, float), (dim,)).copy()
    if np.any(lo > hi):
        raise ValueError("box lower bound exceeds upper bound")
    return lo, hi


def _spd(M, dim, name):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape == (1, 1) and dim > 1:
        M = M[0, 0] * np.eye(dim)
    if M.shape != (dim, dim):
        raise DimensionError(f"{name} must be {dim}x{dim}, got {M.shape}")
    if not np.allclose(M, M.T, atol=1e-12) or np.min(np.linalg.eigvalsh(M)) <= 0:
        raise ValueError(f"{name} must be symmetric positive definite")
    return M


@dataclass(frozen=True)
class MpcConfig:
    """Tuning of the data-driven MPC problem.

    ``Q`` and ``R`` may be given as scalars, meaning multiples of the
    identity.  ``sigma_bound_c`` is only used in ``convex_bound`` mode.
    """

    L: int
    n: int
    u_s: np.ndarray
    y_s: np.ndarray
    Q: np.ndarray | float = 1.0
    R: np.ndarray | float = 1.0
    lambda_alpha: float = 0.0
    lambda_sigma: float = 0.0
    eps_bar: float = 0.0
    u_lo: np.ndarray | float | None = None
    u_hi: np.ndarray | float | None = None
    y_lo: np.ndarray | float | None = None
    y_hi: np.ndarray | float | None = None
    sigma_mode: str = SIGMA_NONE
    sigma_bound_c: float | None = None

    def __post_init__(self):
        u_s = np.asarray(self.u_s, dtype=float).reshape(-1)
        y_s = np.asarray(self.y_s, dtype=float).reshape(-1)
        m, p = u_s.size, y_s.size
        object.__setattr__(self, "u_s", u_s)
        object.__setattr__(self, "y_s", y_s)
        object.__setattr__(self, "Q", _spd(self.Q, p, "Q"))
        object.__setattr__(self, "R", _spd(self.R, m, "R"))
        u_lo, u_hi = _box(self.u_lo, self.u_hi, m)
        y_lo, y_hi = _box(self.y_lo, self.y_hi, p)
        for name, val in (("u_lo", u_lo), ("u_hi", u_hi), ("y_lo", y_lo), ("y_hi", y_hi)):
            object.__setattr__(self, name, val)
        if self.n < 1 or self.L < 1:
            raise ValueError("L and n must be positive")
        if self.lambda_alpha < 0 or self.lambda_sigma < 0 or self.eps_bar < 0:
            raise ValueError("regularizers and eps_bar must be nonnegative")
        if self.sigma_mode not in SIGMA_MODES:
            raise ValueError(f"sigma_mode must be one of {SIGMA_MODES}")
        if self.sigma_mode == SIGMA_CONVEX_BOUND and (self.sigma_bound_c is None or self.sigma_bound_c <= 0):
            raise ValueError("convex_bound mode needs a positive sigma_bound_c")

    @property
    def m(self) -> int:
        return self.u_s.size

    @property
    def p(self) -> int:
        return self.y_s.size

    def validate(self, scheme: str) -> None:
        """Check the horizon requirement of ``scheme`` (``L >= n`` or ``L >= 2n``)."""
        if scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {scheme!r}")
        need = self.n if scheme == NOMINAL else 2 * self.n
        if self.L < need:
            raise ValueError(f"{scheme} scheme needs L >= {need}, got L={self.L}")

    def stage_cost(self, u, y) -> np.ndarray:
        """``||u_k - u_s||_R^2 + ||y_k - y_s||_Q^2`` for each row of ``u``, ``y``."""
        du = np.atleast_2d(u) - self.u_s
        dy = np.atleast_2d(y) - self.y_s
        return np.einsum("ki,ij,kj->k", du, self.R, du) + np.einsum("ki,ij,kj->k", dy, self.Q, dy)


@dataclass(frozen=True)
class DataMatrices:
    """Hankel matrices with ``L + n`` block rows built from one trajectory."""

    Hu: np.ndarray
    Hy: np.ndarray
    L: int
    n: int
    m: int
    p: int
    N: int
    pe: PeReport

    @property
    def n_alpha(self) -> int:
        return self.Hu.shape[1]

    def u_rows(self, k0: int, k1: int) -> np.ndarray:
        """Rows of ``Hu`` for prediction steps ``k0 .. k1 - 1`` (``k`` from ``-n``)."""
        return self.Hu[(k0 + self.n) * self.m:(k1 + self.n) * self.m]

    def y_rows(self, k0: int, k1: int) -> np.ndarray:
        return self.Hy[(k0 + self.n) * self.p:(k1 + self.n) * self.p]

    @cached_property
    def row_space(self) -> np.ndarray:
        """Orthonormal basis (columns) of the row space of ``[Hu; Hy]``."""
        H = np.vstack([self.Hu, self.Hy])
        _, s, Vt = np.linalg.svd(H, full_matrices=False)
        r = int(np.sum(s > ROW_SPACE_TOL * s[0])) if s.size and s[0] > 0 else 0
        return Vt[:r].T.copy()


def build_data_matrices(traj: Trajectory, L: int, n: int, pe_order: int | None = None) -> DataMatrices:
    """Stack ``H_{L+n}(u^d)`` and ``H_{L+n}(y^d)``.

    Persistence of excitation of order ``pe_order`` (default ``L + 2n``, what
    the MPC schemes need) is checked and recorded; a violation only warns.
    """
    if traj.N < L + n:
        raise DimensionError(f"need N >= L + n = {L + n}, got N={traj.N}")
    Hu = hankel(traj.u, L + n)
    Hy = hankel(traj.y, L + n)
    for H in (Hu, Hy):
        H.setflags(write=False)
    order = L + 2 * n if pe_order is None else pe_order
    pe = persistence_of_excitation(traj.u, order)
    if not pe.is_pe:
        warnings.warn(f"input data not persistently exciting of order {order} "
                      f"(rank {pe.rank} < {traj.m * order})", PersistenceWarning, stacklevel=2)
    return DataMatrices(Hu, Hy, L, n, traj.m, traj.p, traj.N, pe)


@dataclass
class MpcSolution:
    """Optimizer of one MPC problem.

    ``u_bar`` and ``y_bar`` hold the predictions over ``k = -n .. L-1``
    (row ``k + n``).  ``sigma_constraint_satisfied`` evaluates
    ``||sigma_k||_inf <= eps_bar (1 + ||alpha||_1)`` for ``k = 0 .. L-1``;
    ``sigma_init_constraint_satisfied`` does the same over the initial window.
    """

    alpha: np.ndarray
    sigma: np.ndarray
    u_bar: np.ndarray
    y_bar: np.ndarray
    cost: float
    status: str
    scheme: str
    n: int
    sigma_constraint_satisfied: bool = True
    sigma_init_constraint_satisfied: bool = True
    stage_costs: np.ndarray = field(default_factory=lambda: np.zeros(0))
    qp_info: dict = field(default_factory=dict)

    @property
    def u_future(self) -> np.ndarray:
        return self.u_bar[self.n:]

    @property
    def y_future(self) -> np.ndarray:
        return self.y_bar[self.n:]

    @property
    def sigma_blocks(self) -> np.ndarray:
        return self.sigma.reshape(self.u_bar.shape[0], -1)

    @property
    def ok(self) -> bool:
        return self.status == "solved"


@dataclass(frozen=True)
class CondensedProblem:
    qp: QpProblem
    n_alpha: int
    n_sigma: int
    sigma_fixed_zero: bool


def _check_init(data: DataMatrices, u_init, y_init):
    u_init = np.asarray(u_init, dtype=float).reshape(-1)
    y_init = np.asarray(y_init, dtype=float).reshape(-1)
    if u_init.size != data.m * data.n or y_init.size != data.p * data.n:
        raise DimensionError(f"initial windows must have sizes {data.m * data.n} and {data.p * data.n}, "
                             f"got {u_init.size} and {y_init.size}")
    return u_init, y_init


def condense(data: DataMatrices, cfg: MpcConfig, scheme: str, u_init, y_init) -> CondensedProblem:
    """Write the MPC problem as a QP in the Hankel weights.

    Nominal: ``z = alpha``.  Robust: ``z = (alpha, sigma)`` with
    ``y_bar = Hy alpha - sigma``.  With ``eps_bar = 0`` the slack bound
    forces ``sigma = 0``, which is imposed as equality rows.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    if (cfg.m, cfg.p, cfg.n, cfg.L) != (data.m, data.p, data.n, data.L):
        raise DimensionError("MpcConfig dimensions do not match the data matrices")
    u_init, y_init = _check_init(data, u_init, y_init)
    L, n, m, p = data.L, data.n, data.m, data.p
    na = data.n_alpha
    robust = scheme != NOMINAL
    ns = p * (L + n) if robust else 0
    nz = na + ns

    def pad(M, sigma_block=None):
        out = np.zeros((M.shape[0], nz))
        out[:, :na] = M
        if sigma_block is not None:
            out[:, na:] = sigma_block
        return out

    def sig_rows(k0, k1):
        S = np.zeros(((k1 - k0) * p, ns))
        S[:, (k0 + n) * p:(k1 + n) * p] = -np.eye((k1 - k0) * p)
        return S

    # predictions over k = 0..L-1 as affine maps of z
    Uf = pad(data.u_rows(0, L))
    Yf = pad(data.y_rows(0, L), sig_rows(0, L) if robust else None)
    Rbar = np.kron(np.eye(L), cfg.R)
    Qbar = np.kron(np.eye(L), cfg.Q)
    us_L = np.tile(cfg.u_s, L)
    ys_L = np.tile(cfg.y_s, L)
    P = 2.0 * (Uf.T @ Rbar @ Uf + Yf.T @ Qbar @ Yf)
    q = -2.0 * (Uf.T @ Rbar @ us_L + Yf.T @ Qbar @ ys_L)

    reg_alpha = 2.0 * cfg.lambda_alpha * cfg.eps_bar if robust else 0.0
    P[np.arange(na), np.arange(na)] += reg_alpha if reg_alpha > 0 else 2.0 * ALPHA_TIKHONOV
    if robust:
        P[na:, na:] += 2.0 * cfg.lambda_sigma * np.eye(ns)

    rows, rhs = [pad(data.u_rows(-n, 0))], [u_init]
    rows.append(pad(data.y_rows(-n, 0), sig_rows(-n, 0) if robust else None))
    rhs.append(y_init)
    if scheme != ROBUST_NO_TERMINAL:
        rows.append(pad(data.u_rows(L - n, L)))
        rhs.append(np.tile(cfg.u_s, n))
        rows.append(pad(data.y_rows(L - n, L), sig_rows(L - n, L) if robust else None))
        rhs.append(np.tile(cfg.y_s, n))
    sigma_zero = robust and cfg.eps_bar == 0
    if sigma_zero:
        rows.append(np.hstack([np.zeros((ns, na)), np.eye(ns)]))
        rhs.append(np.zeros(ns))

    crows, lo, hi = [], [], []
    fin = np.isfinite(cfg.u_lo) | np.isfinite(cfg.u_hi)
    if fin.any():
        mask = np.tile(fin, L)
        crows.append(Uf[mask])
        lo.append(np.tile(cfg.u_lo, L)[mask])
        hi.append(np.tile(cfg.u_hi, L)[mask])
    fin = np.isfinite(cfg.y_lo) | np.isfinite(cfg.y_hi)
    if scheme == NOMINAL and fin.any():
        mask = np.tile(fin, L)
        crows.append(Yf[mask])
        lo.append(np.tile(cfg.y_lo, L)[mask])
        hi.append(np.tile(cfg.y_hi, L)[mask])
    if robust and cfg.sigma_mode == SIGMA_CONVEX_BOUND and not sigma_zero:
        bound = cfg.sigma_bound_c * cfg.eps_bar
        crows.append(np.hstack([np.zeros((ns, na)), np.eye(ns)]))
        lo.append(np.full(ns, -bound))
        hi.append(np.full(ns, bound))

    qp = QpProblem(P, q, np.vstack(rows), np.concatenate(rhs),
                   np.vstack(crows) if crows else None,
                   np.concatenate(lo) if lo else None,
                   np.concatenate(hi) if hi else None)
    return CondensedProblem(qp, na, ns, sigma_zero)


def _sigma_checks(sigma_blocks: np.ndarray, alpha: np.ndarray, eps_bar: float, n: int):
    bound = eps_bar * (1.0 + np.sum(np.abs(alpha)))
    norms = np.max(np.abs(sigma_blocks), axis=1) if sigma_blocks.size else np.zeros(0)
    return bool(np.all(norms[n:] <= bound)), bool(np.all(norms[:n] <= bound))


def _solve(data, cfg, scheme, u_init, y_init, qps):
    cfg.validate(scheme)
    cp = condense(data, cfg, scheme, u_init, y_init)
    # Cost and constraints see alpha only through [Hu; Hy] alpha while the
    # alpha regularizer penalizes its null-space part, so the optimizer lies
    # in the row space.  Solving there removes the near-singular directions.
    V = data.row_space
    T = np.zeros((cp.qp.nz, V.shape[1] + cp.n_sigma))
    T[:cp.n_alpha, :V.shape[1]] = V
    T[cp.n_alpha:, V.shape[1]:] = np.eye(cp.n_sigma)
    qp = cp.qp
    reduced = QpProblem(T.T @ qp.P @ T, T.T @ qp.q, qp.Aeq @ T, qp.beq, qp.Cineq @ T, qp.lo, qp.hi)
    res = solve_qp(reduced, qps)
    res.z = T @ res.z
    L, n, m, p = data.L, data.n, data.m, data.p
    info = {"iterations": res.iterations, **res.info}
    if res.status == INFEASIBLE:
        nan = np.full
        return MpcSolution(nan(cp.n_alpha, np.nan), nan(p * (L + n), np.nan),
                           nan((L + n, m), np.nan), nan((L + n, p), np.nan), np.inf,
                           res.status, scheme, n, False, False, nan(L, np.nan), info)
    alpha = res.z[:cp.n_alpha]
    sigma = res.z[cp.n_alpha:] if cp.n_sigma else np.zeros(p * (L + n))
    if cp.sigma_fixed_zero:
        sigma = np.zeros_like(sigma)
    u_bar = (data.Hu @ alpha).reshape(L + n, m)
    y_bar = (data.Hy @ alpha - sigma).reshape(L + n, p)
    stage = cfg.stage_cost(u_bar[n:], y_bar[n:])
    cost = float(np.sum(stage))
    if scheme != NOMINAL:
        cost += cfg.lambda_alpha * cfg.eps_bar * float(alpha @ alpha) + cfg.lambda_sigma * float(sigma @ sigma)
    ok_main, ok_init = _sigma_checks(sigma.reshape(L + n, p), alpha, cfg.eps_bar, n)
    return MpcSolution(alpha, sigma, u_bar, y_bar, cost, res.status, scheme, n,
                       ok_main, ok_init, stage, info)


def solve_nominal(data: DataMatrices, cfg: MpcConfig, u_init, y_init,
                  qps: QpSettings | None = None) -> MpcSolution:
    """Nominal scheme with terminal equality constraints (clean data)."""
    return _solve(data, cfg, NOMINAL, u_init, y_init, qps)


def solve_robust(data: DataMatrices, cfg: MpcConfig, u_init, y_init_noisy,
                 qps: QpSettings | None = None, terminal: bool = True) -> MpcSolution:
    """Robust scheme with slack ``sigma`` and ridge regularization of ``alpha``, ``sigma``.

    Output constraints are not imposed.  ``terminal=False`` drops the
    terminal equality constraint (the unconstrained comparison baseline).
    """
    return _solve(data, cfg, ROBUST if terminal else ROBUST_NO_TERMINAL, u_init, y_init_noisy, qps)


def solve(data: DataMatrices, cfg: MpcConfig, scheme: str, u_init, y_init,
          qps: QpSettings | None = None) -> MpcSolution:
    if scheme == NOMINAL:
        return solve_nominal(data, cfg, u_init, y_init, qps)
    return solve_robust(data, cfg, u_init, y_init, qps, terminal=scheme == ROBUST)
