"""Ground-truth LTI plants used for simulation, data collection and diagnostics.

Random numbers come from numpy's PCG64 generator (``np.random.default_rng``)
seeded with ``[stream, seed]``, so fixtures are bit-reproducible on a given
numpy version.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .trajlib import DEFAULT_RANK_TOL, DimensionError, Trajectory, as_sequence


def _rank(M: np.ndarray, tol: float = DEFAULT_RANK_TOL) -> int:
    sv = np.linalg.svd(M, compute_uv=False)
    if sv.size == 0 or sv[0] == 0:
        return 0
    return int(np.sum(sv > tol * sv[0]))


def controllability_matrix(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    blocks = [B]
    for _ in range(A.shape[0] - 1):
        blocks.append(A @ blocks[-1])
    return np.hstack(blocks)


def observability_matrix(A: np.ndarray, C: np.ndarray) -> np.ndarray:
    """Stack ``C, CA, ..., CA^{n-1}`` into a ``(p*n, n)`` matrix."""
    blocks = [C]
    for _ in range(A.shape[0] - 1):
        blocks.append(blocks[-1] @ A)
    return np.vstack(blocks)


@dataclass(frozen=True)
class LtiSystem:
    """Minimal discrete-time realization ``x+ = Ax + Bu, y = Cx + Du``."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray | None = None
    check_minimal: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        A = np.atleast_2d(np.array(self.A, dtype=float))
        B = np.array(self.B, dtype=float)
        C = np.array(self.C, dtype=float)
        n = A.shape[0]
        if A.shape != (n, n):
            raise DimensionError(f"A must be square, got {A.shape}")
        B = B.reshape(n, -1) if B.ndim < 2 else B
        C = C.reshape(-1, n) if C.ndim < 2 else C
        if B.shape[0] != n or C.shape[1] != n:
            raise DimensionError(f"inconsistent shapes A{A.shape} B{B.shape} C{C.shape}")
        m, p = B.shape[1], C.shape[0]
        D = np.zeros((p, m)) if self.D is None else np.array(self.D, dtype=float).reshape(p, m)
        for name, M in zip("ABCD", (A, B, C, D)):
            M.setflags(write=False)
            object.__setattr__(self, name, M)
        if self.check_minimal and not self.is_minimal():
            raise ValueError("realization is not minimal (controllability or observability fails)")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]

    def is_minimal(self, tol: float = DEFAULT_RANK_TOL) -> bool:
        return (_rank(controllability_matrix(self.A, self.B), tol) == self.n
                and _rank(observability_matrix(self.A, self.C), tol) == self.n)

    def step(self, x: np.ndarray, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """One step: returns ``(x_next, y)``."""
        return self.A @ x + self.B @ u, self.C @ x + self.D @ u


@dataclass(frozen=True)
class Equilibrium:
    u_s: np.ndarray
    y_s: np.ndarray
    x_s: np.ndarray


@dataclass(frozen=True)
class SimResult:
    y: np.ndarray  # (N, p)
    x: np.ndarray  # (N + 1, n)


def simulate(sys: LtiSystem, x0, u) -> SimResult:
    """Simulate ``sys`` from ``x0`` under the input sequence ``u``."""
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.size != sys.n:
        raise DimensionError(f"x0 has dimension {x0.size}, system order is {sys.n}")
    u = as_sequence(u, sys.m)
    N = u.shape[0]
    x = np.empty((N + 1, sys.n))
    x[0] = x0
    for k in range(N):
        x[k + 1] = sys.A @ x[k] + sys.B @ u[k]
    y = x[:-1] @ sys.C.T + u @ sys.D.T
    return SimResult(y=y, x=x)


def four_tank() -> LtiSystem:
    """Linearized four-tank process (4 states, 2 inputs, 2 outputs)."""
    A = [[0.921, 0, 0.041, 0],
         [0, 0.918, 0, 0.033],
         [0, 0, 0.924, 0],
         [0, 0, 0, 0.937]]
    B = [[0.017, 0.001],
         [0.001, 0.023],
         [0, 0.061],
         [0.072, 0]]
    C = [[1, 0, 0, 0],
         [0, 1, 0, 0]]
    return LtiSystem(A, B, C, np.zeros((2, 2)))


def steady_state(sys: LtiSystem, u_s) -> Equilibrium:
    """Equilibrium reached under the constant input ``u_s``.

    Raises:
        np.linalg.LinAlgError: if ``I - A`` is singular (integrating plant).
    """
    u_s = np.asarray(u_s, dtype=float).reshape(sys.m)
    I_A = np.eye(sys.n) - sys.A
    if np.linalg.matrix_rank(I_A) < sys.n:
        raise np.linalg.LinAlgError("I - A is singular; equilibrium input is not unique")
    x_s = np.linalg.solve(I_A, sys.B @ u_s)
    return Equilibrium(u_s=u_s, y_s=sys.C @ x_s + sys.D @ u_s, x_s=x_s)


def observability_pseudoinverse(sys: LtiSystem) -> tuple[np.ndarray, np.ndarray]:
    """Observability matrix ``Phi`` and its left inverse ``(Phi^T Phi)^{-1} Phi^T``."""
    Phi = observability_matrix(sys.A, sys.C)
    if _rank(Phi) < sys.n:
        raise np.linalg.LinAlgError("observability matrix is rank deficient")
    Phi_dagger = np.linalg.solve(Phi.T @ Phi, Phi.T)
    return Phi, Phi_dagger


@dataclass
class NoiseSpec:
    """Bounded uniform measurement noise with its own seeded generator.

    ``stream`` separates independent uses of one seed (e.g. offline data
    noise and online measurement noise).  Instances carry generator state
    and must not be shared between threads.
    """

    eps_bar: float = 0.0
    seed: int = 0
    stream: int = 0
    distribution: str = "uniform"
    rng: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.eps_bar < 0:
            raise ValueError("eps_bar must be nonnegative")
        if self.distribution != "uniform":
            raise ValueError(f"unsupported noise distribution {self.distribution!r}")
        self.rng = np.random.default_rng([self.stream, self.seed])

    def sample(self, shape) -> np.ndarray:
        if self.eps_bar == 0:
            return np.zeros(shape)
        # uniform draws lie in [-eps, eps), so the bound holds exactly
        return self.rng.uniform(-self.eps_bar, self.eps_bar, size=shape)


def add_noise(y, spec: NoiseSpec) -> np.ndarray:
    """Return ``y + eps`` with ``eps`` i.i.d. uniform on ``[-eps_bar, eps_bar]^p``."""
    y = as_sequence(y)
    return y + spec.sample(y.shape)


@dataclass(frozen=True)
class CollectedData:
    clean: Trajectory
    noisy: Trajectory


def collect_data(sys: LtiSystem, N: int, input_amplitude: float = 1.0,
                 spec: NoiseSpec | None = None, x0=None) -> CollectedData:
    """Open-loop experiment with i.i.d. uniform inputs on ``[-a, a]^m``.

    Inputs are drawn first from ``spec``'s generator, then the output noise.
    The initial state defaults to zero.
    """
    if N < 1:
        raise ValueError("N must be positive")
    spec = NoiseSpec() if spec is None else spec
    x0 = np.zeros(sys.n) if x0 is None else x0
    a = float(input_amplitude)
    u = spec.rng.uniform(-a, a, size=(N, sys.m)) if a > 0 else np.zeros((N, sys.m))
    y = simulate(sys, x0, u).y
    return CollectedData(clean=Trajectory(u, y), noisy=Trajectory(u, add_noise(y, spec)))


def random_minimal_system(rng: np.random.Generator, n: int, m: int, p: int,
                          radius: float = 0.9, feedthrough: bool = False) -> LtiSystem:
    """Random stable minimal system with spectral radius at most ``radius``."""
    while True:
        A = rng.standard_normal((n, n))
        A *= radius / max(np.max(np.abs(np.linalg.eigvals(A))), 1e-12) * rng.uniform(0.5, 1.0)
        B = rng.standard_normal((n, m))
        C = rng.standard_normal((p, n))
        D = rng.standard_normal((p, m)) if feedthrough else np.zeros((p, m))
        sys = LtiSystem(A, B, C, D, check_minimal=False)
        if sys.is_minimal(1e-6):
            return sys
