# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled ADMM iteration block; same contract as ``_kernel_py.admm_block``.

Matrix-vector products and triangular solves go through BLAS.  Arrays are
C-contiguous, so BLAS (column-major) sees ``Lc`` as the upper factor
``Lc^T`` and ``A`` as ``A^T``.
"""
import numpy as np

from scipy.linalg.cython_blas cimport dgemv, dtrsv


def admm_block(double[:, ::1] Lc, double[:, ::1] A, double[::1] q,
               double[::1] l, double[::1] u, double[::1] rho,
               double sigma, double alpha,
               double[::1] x, double[::1] z, double[::1] y, int n_iter,
               double[::1] dx, double[::1] dy):
    cdef int nz = x.shape[0]
    cdef int mc = z.shape[0]
    cdef int one = 1
    cdef double d_one = 1.0, d_zero = 0.0
    cdef char *up = b"U"
    cdef char *tr = b"T"
    cdef char *nt = b"N"
    cdef char *nd = b"N"
    cdef Py_ssize_t it, i, j
    cdef double zr, zn, yn, xn
    cdef double[::1] w = np.empty(max(mc, 1))
    cdef double[::1] t = np.empty(nz)
    cdef double[::1] s = np.empty(max(mc, 1))
    with nogil:
        for it in range(n_iter):
            for j in range(nz):
                t[j] = sigma * x[j] - q[j]
            if mc > 0:
                for i in range(mc):
                    w[i] = rho[i] * z[i] - y[i]
                # t += A^T w
                dgemv(nt, &nz, &mc, &d_one, &A[0, 0], &nz, &w[0], &one, &d_one, &t[0], &one)
            # L t' = t, then L^T xt = t'
            dtrsv(up, tr, nd, &nz, &Lc[0, 0], &nz, &t[0], &one)
            dtrsv(up, nt, nd, &nz, &Lc[0, 0], &nz, &t[0], &one)
            if mc > 0:
                # s = A xt
                dgemv(tr, &nz, &mc, &d_one, &A[0, 0], &nz, &t[0], &one, &d_zero, &s[0], &one)
            for j in range(nz):
                xn = alpha * t[j] + (1.0 - alpha) * x[j]
                dx[j] = xn - x[j]
                x[j] = xn
            for i in range(mc):
                zr = alpha * s[i] + (1.0 - alpha) * z[i]
                zn = zr + y[i] / rho[i]
                if zn < l[i]:
                    zn = l[i]
                elif zn > u[i]:
                    zn = u[i]
                yn = y[i] + rho[i] * (zr - zn)
                dy[i] = yn - y[i]
                y[i] = yn
                z[i] = zn
