"""Experiment configuration shared by the CLI and the acceptance suite.

Seeds are split into streams: stream 0 drives the open-loop data
(inputs, then output noise), stream 1 the online measurement noise.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .closedloop import ClosedLoopLog, Metrics, RunConfig, metrics, run
from .lti import CollectedData, Equilibrium, LtiSystem, NoiseSpec, collect_data, four_tank, steady_state
from .mpc import SCHEMES, MpcConfig, build_data_matrices
from .qpsolve import QpSettings
from .trajlib import Trajectory

DATA_STREAM = 0
ONLINE_STREAM = 1


@dataclass
class ExperimentConfig:
    """One closed-loop experiment; defaults reproduce the four-tank setup."""

    system: LtiSystem = field(default_factory=four_tank)
    N: int = 400
    amplitude: float = 1.0
    eps: float = 0.002
    seed: int = 0
    L: int = 30
    n: int = 4
    Q: float = 3.0
    R: float = 1e-4
    lambda_alpha_eps: float = 0.1
    lambda_alpha: float | None = None
    lambda_sigma: float = 1000.0
    scheme: str = "robust"
    step: int = 1
    T: int = 300
    u_s: np.ndarray | None = None
    y_s: np.ndarray | None = None
    x0: np.ndarray | None = None
    sigma_mode: str = "none"
    sigma_c: float | None = None
    u_min: float | None = None
    u_max: float | None = None
    y_min: float | None = None
    y_max: float | None = None
    data: Trajectory | None = None  # measured data; collected from ``system`` if None

    def validate(self) -> None:
        """Raise ``ValueError`` on any inconsistent setting, before running anything."""
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        if self.N < 1 or self.T < 1:
            raise ValueError("N and T must be positive")
        if self.eps < 0 or self.amplitude < 0:
            raise ValueError("eps and amplitude must be nonnegative")
        if self.data is not None and (self.data.m, self.data.p) != (self.system.m, self.system.p):
            raise ValueError("data dimensions do not match the system")
        N = self.N if self.data is None else self.data.N
        if N < self.L + self.n:
            raise ValueError(f"need N >= L + n = {self.L + self.n}")
        cfg = self.mpc_config()
        cfg.validate(self.scheme)
        if not 1 <= self.step <= self.n:
            raise ValueError(f"step must lie in [1, n={self.n}]")
        if self.T < self.n:
            raise ValueError(f"T must be at least n={self.n}")

    def equilibrium(self) -> Equilibrium:
        u_s = np.ones(self.system.m) if self.u_s is None else np.asarray(self.u_s, float)
        eq = steady_state(self.system, u_s)
        if self.y_s is not None:
            eq = Equilibrium(u_s, np.asarray(self.y_s, float), eq.x_s)
        return eq

    def mpc_config(self) -> MpcConfig:
        eq = self.equilibrium()
        if self.lambda_alpha is not None:
            lam_a = self.lambda_alpha
        else:
            lam_a = self.lambda_alpha_eps / self.eps if self.eps > 0 else 0.0
        return MpcConfig(L=self.L, n=self.n, u_s=eq.u_s, y_s=eq.y_s, Q=self.Q, R=self.R,
                         lambda_alpha=lam_a, lambda_sigma=self.lambda_sigma, eps_bar=self.eps,
                         u_lo=self.u_min, u_hi=self.u_max, y_lo=self.y_min, y_hi=self.y_max,
                         sigma_mode=self.sigma_mode, sigma_bound_c=self.sigma_c)

    def collect(self) -> CollectedData:
        return collect_data(self.system, self.N, self.amplitude,
                            NoiseSpec(self.eps, self.seed, DATA_STREAM))

    def measured_data(self) -> Trajectory:
        return self.data if self.data is not None else self.collect().noisy

    def run_config(self, qps: QpSettings | None = None) -> RunConfig:
        data = build_data_matrices(self.measured_data(), self.L, self.n)
        return RunConfig(scheme=self.scheme, data=data, mpc=self.mpc_config(), T=self.T,
                         step_size=self.step, x0=self.x0,
                         noise=NoiseSpec(self.eps, self.seed, ONLINE_STREAM), qps=qps)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


def run_experiment(ec: ExperimentConfig, qps: QpSettings | None = None,
                   keep_solutions: bool = True) -> tuple[ClosedLoopLog, Metrics]:
    ec.validate()
    rc = ec.run_config(qps)
    rc.keep_solutions = keep_solutions
    log = run(ec.system, rc)
    return log, metrics(log, ec.equilibrium())

