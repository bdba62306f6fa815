"""Self-contained dense convex QP solver."""
from .kernels import BACKEND
from .solver import (INFEASIBLE, MAX_ITERATIONS, SOLVED, KktResiduals, QpProblem, QpSettings,
                     QpSolution, kkt_residuals, solve_qp)

__all__ = ["BACKEND", "INFEASIBLE", "MAX_ITERATIONS", "SOLVED", "KktResiduals", "QpProblem",
           "QpSettings", "QpSolution", "kkt_residuals", "solve_qp"]
