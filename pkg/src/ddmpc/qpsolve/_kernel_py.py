"""Pure-numpy ADMM iteration block (fallback for the compiled kernel)."""
import numpy as np
from scipy.linalg import solve_triangular


def admm_block(Lc, A, q, l, u, rho, sigma, alpha, x, z, y, n_iter, dx, dy):
    """Run ``n_iter`` ADMM iterations in place on ``x``, ``z``, ``y``.

    ``Lc`` is the lower Cholesky factor of ``P + sigma*I + A^T diag(rho) A``.
    On return ``dx`` and ``dy`` hold the last iteration's increments of the
    primal and dual iterates.
    """
    At = A.T
    for _ in range(n_iter):
        rhs = sigma * x - q + At @ (rho * z - y)
        xt = solve_triangular(Lc, solve_triangular(Lc, rhs, lower=True, check_finite=False),
                              lower=True, trans="T", check_finite=False)
        zt = A @ xt
        x_new = alpha * xt + (1.0 - alpha) * x
        zr = alpha * zt + (1.0 - alpha) * z
        z_new = np.minimum(np.maximum(zr + y / rho, l), u)
        y_new = y + rho * (zr - z_new)
        dx[:] = x_new - x
        dy[:] = y_new - y
        x[:] = x_new
        z[:] = z_new
        y[:] = y_new
