"""Sequences, stacked windows, Hankel matrices and persistence of excitation.

A sequence ``{x_k}_{k=0}^{N-1}`` with ``x_k`` in ``R^d`` is stored as a float
array of shape ``(N, d)``: one row per time step.  One-dimensional inputs are
read as scalar sequences (``d = 1``).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_RANK_TOL = 1e-9


class DimensionError(ValueError):
    """Raised when array shapes or index ranges are inconsistent."""


def as_sequence(x, d: int | None = None) -> np.ndarray:
    """Coerce ``x`` to a read-only ``(N, d)`` float array.

    Args:
        x: array-like of shape ``(N,)`` or ``(N, d)``.
        d: expected element dimension, checked if given.

    Raises:
        DimensionError: if the array is empty, has more than two axes, or the
            element dimension does not match ``d``.
    """
    arr = np.array(x, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionError(f"expected a non-empty (N, d) sequence, got shape {arr.shape}")
    if d is not None and arr.shape[1] != d:
        raise DimensionError(f"expected element dimension {d}, got {arr.shape[1]}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Trajectory:
    """Paired input/output sequences of equal length."""

    u: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        u = as_sequence(self.u)
        y = as_sequence(self.y)
        if u.shape[0] != y.shape[0]:
            raise DimensionError(f"input length {u.shape[0]} != output length {y.shape[0]}")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "y", y)

    @property
    def N(self) -> int:
        return self.u.shape[0]

    @property
    def m(self) -> int:
        return self.u.shape[1]

    @property
    def p(self) -> int:
        return self.y.shape[1]


def window(x, a: int, b: int) -> np.ndarray:
    """Return the stacked vector ``x_[a,b] = [x_a; ...; x_b]``."""
    x = as_sequence(x)
    if not 0 <= a <= b < x.shape[0]:
        raise DimensionError(f"window [{a}, {b}] outside sequence of length {x.shape[0]}")
    return x[a:b + 1].reshape(-1).copy()


def hankel(x, L: int) -> np.ndarray:
    """Hankel matrix ``H_L(x)`` with ``L`` block rows.

    Column ``j`` stacks ``x_j, ..., x_{j+L-1}``, so the result has shape
    ``(d*L, N-L+1)``.

    Raises:
        DimensionError: if ``L < 1`` or ``L > N``.
    """
    x = as_sequence(x)
    N, d = x.shape
    if L < 1 or L > N:
        raise DimensionError(f"need 1 <= L <= N, got L={L}, N={N}")
    cols = N - L + 1
    # windows[j, i, :] = x[j + i]
    windows = np.lib.stride_tricks.sliding_window_view(x, (L, d))[:, 0]
    return np.ascontiguousarray(windows.reshape(cols, L * d).T)


@dataclass(frozen=True)
class PeReport:
    is_pe: bool
    rank: int
    sigma_min: float
    order: int


def persistence_of_excitation(u, L: int, tol: float = DEFAULT_RANK_TOL) -> PeReport:
    """Check whether ``u`` is persistently exciting of order ``L``.

    The rank of ``H_L(u)`` counts singular values above ``tol * sigma_max``.
    ``sigma_min`` is the smallest of the ``m*L`` row-space singular values,
    taken as zero when the matrix has fewer than ``m*L`` columns.  Too little
    data (``N < L``) is reported as not exciting rather than raised.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    u = as_sequence(u)
    N, m = u.shape
    if L < 1:
        raise DimensionError("order L must be positive")
    if N < L:
        return PeReport(False, 0, 0.0, L)
    sv = np.linalg.svd(hankel(u, L), compute_uv=False)
    rank = int(np.sum(sv > tol * sv[0])) if sv[0] > 0 else 0
    sigma_min = float(sv[-1]) if sv.size == m * L else 0.0
    return PeReport(rank == m * L, rank, sigma_min, L)
