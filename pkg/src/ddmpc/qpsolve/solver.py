"""Dense convex QP solver.

Problems have the form::

    minimize    0.5 z^T P z + q^T z
    subject to  Aeq z = beq,   lo <= Cineq z <= hi

Equality-only problems are solved directly with a null-space method.
Problems with inequalities go through an operator-splitting (ADMM) loop on
a Ruiz-equilibrated copy of the problem, with adaptive penalty, a primal
infeasibility certificate, and a final active-set polishing step.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError

from . import kernels

SOLVED = "solved"
MAX_ITERATIONS = "max_iterations"
INFEASIBLE = "infeasible"

_RANK_TOL = 1e-9
_EQ_RHO_FACTOR = 1e3
_RHO_MIN = 1e-6
_RHO_MAX = 1e6
# bound on cond(P + sigma I + A' diag(rho) A); beyond it the factored solves lose accuracy
_MAX_COND = 1e12


@dataclass(frozen=True)
class QpSettings:
    abs_tol: float = 1e-8
    rel_tol: float = 1e-8
    max_iter: int = 50000
    infeasibility_tol: float = 1e-10
    rho: float = 0.1
    sigma: float = 1e-6
    alpha: float = 1.6
    check_every: int = 25
    scaling_iters: int = 10
    polish: bool = True
    max_rho_updates: int = 20

    def __post_init__(self):
        for name in ("abs_tol", "rel_tol", "max_iter", "infeasibility_tol", "rho", "sigma",
                     "check_every"):
            if getattr(self, name) <= 0:
                raise ValueError(f"QpSettings.{name} must be positive")
        if not 0 < self.alpha < 2:
            raise ValueError("relaxation alpha must lie in (0, 2)")


def _mat(M, rows: int | None, cols: int) -> np.ndarray:
    if M is None:
        return np.zeros((0 if rows is None else rows, cols))
    return np.array(M, dtype=float).reshape(-1, cols)


@dataclass(frozen=True)
class QpProblem:
    P: np.ndarray
    q: np.ndarray
    Aeq: np.ndarray | None = None
    beq: np.ndarray | None = None
    Cineq: np.ndarray | None = None
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None

    def __post_init__(self):
        q = np.array(self.q, dtype=float).reshape(-1)
        nz = q.size
        P = np.array(self.P, dtype=float).reshape(nz, nz)
        P = 0.5 * (P + P.T)
        Aeq = _mat(self.Aeq, None, nz)
        beq = np.zeros(0) if self.beq is None else np.array(self.beq, dtype=float).reshape(-1)
        if beq.size != Aeq.shape[0]:
            raise ValueError("Aeq and beq have inconsistent sizes")
        C = _mat(self.Cineq, None, nz)
        mi = C.shape[0]
        lo = np.full(mi, -np.inf) if self.lo is None else np.array(self.lo, dtype=float).reshape(-1)
        hi = np.full(mi, np.inf) if self.hi is None else np.array(self.hi, dtype=float).reshape(-1)
        if lo.size != mi or hi.size != mi:
            raise ValueError("Cineq, lo and hi have inconsistent sizes")
        if np.any(lo > hi):
            raise ValueError("lo must not exceed hi")
        for name, val in zip(("P", "q", "Aeq", "beq", "Cineq", "lo", "hi"),
                             (P, q, Aeq, beq, C, lo, hi)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def nz(self) -> int:
        return self.q.size

    @property
    def me(self) -> int:
        return self.Aeq.shape[0]

    @property
    def mi(self) -> int:
        return self.Cineq.shape[0]

    def objective(self, z) -> float:
        return float(0.5 * z @ self.P @ z + self.q @ z)


@dataclass
class QpSolution:
    z: np.ndarray
    dual_eq: np.ndarray
    dual_ineq: np.ndarray
    objective: float
    status: str
    iterations: int = 0
    polished: bool = False
    info: dict = field(default_factory=dict)


@dataclass(frozen=True)
class KktResiduals:
    primal_eq: float
    primal_ineq: float
    dual: float
    comp_slack: float

    def max(self) -> float:
        return max(self.primal_eq, self.primal_ineq, self.dual, self.comp_slack)


def _inf_norm(v) -> float:
    return float(np.max(np.abs(v))) if np.size(v) else 0.0


def kkt_residuals(prob: QpProblem, sol: QpSolution) -> KktResiduals:
    """Infinity norms of the four KKT residual blocks.

    Dual sign convention: ``P z + q + Aeq^T y_eq + Cineq^T y_ineq = 0`` with
    ``y_ineq >= 0`` on active upper bounds and ``<= 0`` on active lower
    bounds.  A multiplier pushing against an infinite bound counts fully
    towards the complementarity residual.
    """
    z = np.asarray(sol.z, dtype=float)
    ye = np.asarray(sol.dual_eq, dtype=float).reshape(-1)
    yi = np.asarray(sol.dual_ineq, dtype=float).reshape(-1)
    primal_eq = _inf_norm(prob.Aeq @ z - prob.beq)
    cz = prob.Cineq @ z
    primal_ineq = max(_inf_norm(np.maximum(cz - prob.hi, 0)),
                      _inf_norm(np.maximum(prob.lo - cz, 0)))
    dual = _inf_norm(prob.P @ z + prob.q + prob.Aeq.T @ ye + prob.Cineq.T @ yi)
    yp, ym = np.maximum(yi, 0), np.minimum(yi, 0)
    with np.errstate(invalid="ignore"):
        up = np.where(np.isfinite(prob.hi), yp * (prob.hi - cz), yp)
        lo = np.where(np.isfinite(prob.lo), ym * (cz - prob.lo), ym)
    comp = max(_inf_norm(np.nan_to_num(up)), _inf_norm(np.nan_to_num(lo)))
    return KktResiduals(primal_eq, primal_ineq, dual, comp)


def _equality_qp(P, q, A, b, rank_tol=_RANK_TOL):
    """Null-space solve of ``min 0.5 z'Pz + q'z s.t. Az = b``.

    Returns ``(z, multipliers, consistency_residual)``.  Rank-deficient ``A``
    is handled through its SVD; the multipliers are the minimum-norm ones.
    """
    nz = q.size
    if A.shape[0] == 0:
        try:
            z = -cho_solve(cho_factor(P), q)
        except LinAlgError:
            z = -np.linalg.lstsq(P, q, rcond=None)[0]
        return z, np.zeros(0), 0.0
    U, s, Vt = np.linalg.svd(A, full_matrices=True)
    r = int(np.sum(s > rank_tol * s[0])) if s.size and s[0] > 0 else 0
    z0 = Vt[:r].T @ ((U[:, :r].T @ b) / s[:r])
    resid = _inf_norm(A @ z0 - b)
    N = Vt[r:].T
    if N.shape[1]:
        H = N.T @ P @ N
        g = N.T @ (P @ z0 + q)
        try:
            w = -cho_solve(cho_factor(H), g)
        except LinAlgError:
            w = -np.linalg.lstsq(H, g, rcond=None)[0]
        z = z0 + N @ w
    else:
        z = z0
    grad = P @ z + q
    lam = -(U[:, :r] @ ((Vt[:r] @ grad) / s[:r]))
    return z, lam, resid


def _ruiz(P, q, A, iters):
    nz, mc = q.size, A.shape[0]
    D = np.ones(nz)
    E = np.ones(mc)
    Ps, As = P.copy(), A.copy()
    for _ in range(iters):
        col = np.maximum(np.max(np.abs(Ps), axis=0), np.max(np.abs(As), axis=0) if mc else 0)
        row = np.max(np.abs(As), axis=1) if mc else np.zeros(0)
        d = 1.0 / np.sqrt(np.clip(col, 1e-4, 1e4))
        e = 1.0 / np.sqrt(np.clip(row, 1e-4, 1e4))
        Ps = d[:, None] * Ps * d[None, :]
        As = e[:, None] * As * d[None, :]
        D *= d
        E *= e
    qs = D * q
    c = 1.0 / np.clip(max(np.mean(np.max(np.abs(Ps), axis=0)), _inf_norm(qs)), 1e-4, 1e4)
    return D, E, c * Ps, c * qs, As, c


class _Admm:
    def __init__(self, prob: QpProblem, settings: QpSettings):
        self.prob = prob
        self.st = settings
        A = np.vstack([prob.Aeq, prob.Cineq])
        l = np.concatenate([prob.beq, prob.lo])
        u = np.concatenate([prob.beq, prob.hi])
        self.A_orig, self.l_orig, self.u_orig = A, l, u
        D, E, Ps, qs, As, c = _ruiz(prob.P, prob.q, A, settings.scaling_iters)
        self.D, self.E, self.c = D, E, c
        self.P, self.q, self.A = Ps, qs, np.ascontiguousarray(As)
        with np.errstate(invalid="ignore"):
            self.l = np.where(np.isfinite(l), E * l, -np.inf)
            self.u = np.where(np.isfinite(u), E * u, np.inf)
        self.eq_rows = (l == u)
        self.free_rows = ~np.isfinite(l) & ~np.isfinite(u)
        a_norm2 = np.linalg.norm(self.A, 2) ** 2 if self.A.size else 0.0
        p_min = max(float(np.linalg.eigvalsh(self.P)[0]), 0.0)
        self.rho_cap = _MAX_COND * (settings.sigma + p_min) / a_norm2 if a_norm2 > 0 else _RHO_MAX
        self.set_rho(settings.rho)

    def set_rho(self, rho):
        cap = min(_RHO_MAX, self.rho_cap)
        self.rho_scalar = float(np.clip(rho, min(_RHO_MIN, cap), cap))
        rho = np.full(self.A.shape[0], self.rho_scalar)
        rho[self.eq_rows] *= _EQ_RHO_FACTOR
        rho[self.free_rows] = _RHO_MIN
        self.rho = np.minimum(rho, cap)
        M = self.P + self.st.sigma * np.eye(self.q.size) + self.A.T @ (self.rho[:, None] * self.A)
        self.Lc = np.ascontiguousarray(np.linalg.cholesky(M))

    def residuals(self, x, z, y):
        """Unscaled primal/dual residuals and their tolerance thresholds."""
        Dinv, Einv = 1.0 / self.D, 1.0 / self.E
        Ax = Einv * (self.A @ x)
        zu = Einv * z
        Px = Dinv * (self.P @ x) / self.c
        Aty = Dinv * (self.A.T @ y) / self.c
        qu = Dinv * self.q / self.c
        prim = _inf_norm(Ax - zu)
        dual = _inf_norm(Px + qu + Aty)
        eps_p = self.st.abs_tol + self.st.rel_tol * max(_inf_norm(Ax), _inf_norm(zu))
        eps_d = self.st.abs_tol + self.st.rel_tol * max(_inf_norm(Px), _inf_norm(Aty), _inf_norm(qu))
        # scaled quantities for the penalty update
        sp = _inf_norm(self.A @ x - z) / max(_inf_norm(self.A @ x), _inf_norm(z), 1e-12)
        sd = _inf_norm(self.P @ x + self.q + self.A.T @ y) / max(
            _inf_norm(self.P @ x), _inf_norm(self.A.T @ y), _inf_norm(self.q), 1e-12)
        return prim, dual, eps_p, eps_d, sp, sd

    def primal_infeasible(self, dy) -> bool:
        dyu = self.E * dy  # unscaled direction, up to the cost scale
        norm = _inf_norm(dyu)
        if norm <= 1e-30:
            return False
        tol = self.st.infeasibility_tol * norm
        if _inf_norm(self.A_orig.T @ dyu) > tol:
            return False
        u, l = self.u_orig, self.l_orig
        pos, neg = np.maximum(dyu, 0), np.minimum(dyu, 0)
        if np.any((pos > 0) & ~np.isfinite(u)) or np.any((neg < 0) & ~np.isfinite(l)):
            return False
        with np.errstate(invalid="ignore"):
            support = np.sum(np.where(pos > 0, u * pos, 0)) + np.sum(np.where(neg < 0, l * neg, 0))
        return support < -tol

    def run(self, x0=None):
        st = self.st
        nz, mc = self.q.size, self.A.shape[0]
        x = np.zeros(nz) if x0 is None else np.asarray(x0, float) / self.D
        z = np.clip(self.A @ x, self.l, self.u)
        y = np.zeros(mc)
        dx, dy = np.zeros(nz), np.zeros(mc)
        it = updates = 0
        status = MAX_ITERATIONS
        while it < st.max_iter:
            n = min(st.check_every, st.max_iter - it)
            kernels.admm_block(self.Lc, self.A, self.q, self.l, self.u, self.rho,
                               st.sigma, st.alpha, x, z, y, n, dx, dy)
            it += n
            prim, dual, eps_p, eps_d, sp, sd = self.residuals(x, z, y)
            if prim <= eps_p and dual <= eps_d:
                status = SOLVED
                break
            if self.primal_infeasible(dy):
                status = INFEASIBLE
                break
            # a bounded number of penalty updates lets the iteration settle,
            # which the infeasibility certificate relies on
            ratio = np.sqrt(sp / max(sd, 1e-30))
            if (ratio > 5 or ratio < 0.2) and updates < st.max_rho_updates:
                self.set_rho(self.rho_scalar * ratio)
                updates += 1
        xu = self.D * x
        yu = self.E * y / self.c
        return xu, yu, status, it


def _split_duals(y, me):
    return y[:me].copy(), y[me:].copy()


def _polish(prob: QpProblem, z, y_ineq, settings: QpSettings):
    """Re-solve with the guessed active set as equalities."""
    cz = prob.Cineq @ z
    lo_act = np.isfinite(prob.lo) & ((cz - prob.lo < -y_ineq) | (prob.lo == prob.hi))
    hi_act = np.isfinite(prob.hi) & (prob.hi - cz < y_ineq) & ~lo_act
    A = np.vstack([prob.Aeq, prob.Cineq[lo_act], prob.Cineq[hi_act]])
    b = np.concatenate([prob.beq, prob.lo[lo_act], prob.hi[hi_act]])
    zp, lam, resid = _equality_qp(prob.P, prob.q, A, b)
    me = prob.me
    yi = np.zeros(prob.mi)
    n_lo = int(lo_act.sum())
    yi[lo_act] = lam[me:me + n_lo]
    yi[hi_act] = lam[me + n_lo:]
    return zp, lam[:me], yi


def solve_qp(prob: QpProblem, settings: QpSettings | None = None, z0=None) -> QpSolution:
    """Solve a convex QP; see the module docstring for the problem form."""
    settings = QpSettings() if settings is None else settings
    if prob.mi == 0:
        z, lam, resid = _equality_qp(prob.P, prob.q, prob.Aeq, prob.beq)
        scale = max(1.0, _inf_norm(prob.beq))
        status = INFEASIBLE if resid > 10 * settings.abs_tol * scale else SOLVED
        return QpSolution(z, lam, np.zeros(0), prob.objective(z), status,
                          info={"method": "direct", "consistency_residual": resid})

    admm = _Admm(prob, settings)
    z, y, status, it = admm.run(z0)
    ye, yi = _split_duals(y, prob.me)
    sol = QpSolution(z, ye, yi, prob.objective(z), status, iterations=it,
                     info={"method": "admm", "rho": admm.rho_scalar})
    if status == INFEASIBLE:
        return sol
    if settings.polish:
        try:
            zp, yep, yip = _polish(prob, z, yi, settings)
        except (LinAlgError, ValueError):
            return sol
        cand = QpSolution(zp, yep, yip, prob.objective(zp), status, iterations=it, polished=True,
                          info=sol.info)
        if kkt_residuals(prob, cand).max() < kkt_residuals(prob, sol).max():
            if status == MAX_ITERATIONS and _meets_post(prob, cand, settings):
                cand.status = SOLVED
            return cand
    return sol


def _meets_post(prob: QpProblem, sol: QpSolution, st: QpSettings) -> bool:
    r = kkt_residuals(prob, sol)
    scale = max(_inf_norm(prob.P @ sol.z), _inf_norm(prob.q), 1.0)
    return (r.primal_eq <= st.abs_tol and r.primal_ineq <= st.abs_tol
            and r.dual <= st.abs_tol + st.rel_tol * scale and r.comp_slack <= st.abs_tol * scale)
