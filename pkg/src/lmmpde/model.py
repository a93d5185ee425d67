"""LMM market data and the principal-component coordinate transform.

A flat-volatility lognormal forward-rate model on an equidistant tenor grid
T_i = alpha*(i-1), i = 1..N+1, under the terminal measure (numeraire: the
bond maturing at T_{N+1}). Correlation between log-rates decays
exponentially in tenor distance, rho_ij = exp(-phi*|i-j|). Freezing the
state-dependent drift at the initial curve makes log-rates Gaussian, and an
eigendecomposition of the covariance matrix then rotates them into
independent principal components z with per-component variances lambda_i.

In z coordinates the backward pricing equation becomes a pure heat equation
du/dtau = 1/2 sum_i lambda_i d2u/dz_i^2, which is the basis for the
low-dimensional solvers in :mod:`lmmpde.heatpde`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ConfigurationError, NumericalError


@dataclass(frozen=True)
class LmmConfig:
    """Market/model parameters for the flat-volatility LMM.

    l0 may be a scalar (flat initial curve) or a length-n vector of initial
    forward rates.
    """

    n: int
    alpha: float = 0.25
    phi: float = 0.0413
    c: float = 0.2
    l0: float | np.ndarray = 0.1
    numeraire: str = "terminal"

    def __post_init__(self):
        if self.n < 2:
            raise ConfigurationError(f"need at least 2 forward rates, got n={self.n}")
        if self.alpha <= 0 or self.phi <= 0 or self.c <= 0:
            raise ConfigurationError("alpha, phi and c must all be positive")
        if self.numeraire != "terminal":
            raise ConfigurationError("only the terminal-bond numeraire is supported")
        l0 = np.atleast_1d(np.asarray(self.l0, dtype=float))
        if l0.size == 1:
            l0 = np.full(self.n, l0[0])
        if l0.shape != (self.n,):
            raise ConfigurationError(f"l0 must be scalar or length {self.n}")
        if np.any(l0 <= 0):
            raise ConfigurationError("initial forward rates must be positive")
        l0.setflags(write=False)
        object.__setattr__(self, "l0", l0)

    @property
    def horizon(self) -> float:
        """Last fixing date T_N = alpha*(n-1)."""
        return self.alpha * (self.n - 1)

    def tenor(self, i: int) -> float:
        """T_i for 1 <= i <= n+1."""
        return self.alpha * (i - 1)

    @property
    def terminal_bond(self) -> float:
        """P(0, T_{N+1}) off the initial curve; converts terminal-relative
        values into time-0 prices."""
        return float(np.prod(1.0 / (1.0 + self.alpha * self.l0)))


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalues (descending) and orthonormal eigenvectors of the log-rate
    covariance matrix; column q[:, i] belongs to lam[i]."""

    lam: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        self.lam.setflags(write=False)
        self.q.setflags(write=False)

    @property
    def n(self) -> int:
        return self.lam.shape[0]


@dataclass(frozen=True)
class FrozenDrift:
    """Constant per-rate drift of ln L under the terminal measure, evaluated
    on the initial curve. mu[n-1] is exactly zero."""

    mu: np.ndarray

    def __post_init__(self):
        self.mu.setflags(write=False)


def build_correlation(phi: float, n: int) -> np.ndarray:
    """Exponential-decay correlation rho_ij = exp(-phi*|i-j|)."""
    if phi <= 0:
        raise ConfigurationError("phi must be positive")
    if n < 2:
        raise ConfigurationError("need n >= 2")
    idx = np.arange(n)
    return np.exp(-phi * np.abs(idx[:, None] - idx[None, :]))


def build_covariance(c: float, rho: np.ndarray) -> np.ndarray:
    """Covariance of log-rates for flat volatility c: sigma_ij = c^2 rho_ij."""
    rho = np.asarray(rho, dtype=float)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ConfigurationError("rho must be square")
    if not np.allclose(rho, rho.T, atol=1e-12, rtol=0.0):
        raise ConfigurationError("rho must be symmetric")
    if not np.allclose(np.diag(rho), 1.0, atol=1e-12):
        raise ConfigurationError("rho must have unit diagonal")
    return c * c * rho


def eigendecompose(sigma: np.ndarray, tol_factor: float = 1e-14,
                   max_sweeps: int = 60) -> Spectrum:
    """Eigendecomposition by cyclic Jacobi rotations.

    Eigenvalues are sorted in descending order (stable; ties keep original
    index order), tiny negative round-off values are clamped to zero, and
    each eigenvector's largest-magnitude entry is made positive so the
    decomposition is deterministic.
    """
    sigma = np.asarray(sigma, dtype=float)
    if not np.allclose(sigma, sigma.T, atol=1e-12, rtol=0.0):
        raise ConfigurationError("covariance matrix must be symmetric")
    n = sigma.shape[0]
    a = np.array(sigma, dtype=float, order="C")
    v = np.eye(n)
    tol = tol_factor * np.linalg.norm(sigma)
    off = kernels.jacobi_sweeps(a, v, tol, max_sweeps)
    if off < 0.0:
        raise NumericalError(
            f"Jacobi sweeps did not converge: off-diagonal norm {-off:.3e} "
            f"after {max_sweeps} sweeps (tolerance {tol:.3e})")
    lam = np.diag(a).copy()
    order = np.argsort(-lam, kind="stable")
    lam = lam[order]
    v = v[:, order]
    lam[(lam < 0) & (lam > -1e-10)] = 0.0
    if np.any(lam < 0):
        raise NumericalError(f"negative eigenvalue beyond round-off: {lam.min():.3e}")
    for i in range(n):
        col = v[:, i]
        if col[np.argmax(np.abs(col))] < 0:
            v[:, i] = -col
    recon = (v * lam) @ v.T
    resid = np.max(np.abs(recon - sigma))
    if resid > 1e-10:
        raise NumericalError(f"eigendecomposition residual {resid:.3e} exceeds 1e-10")
    return Spectrum(lam=lam, q=v)


def freeze_drift(config: LmmConfig, rho: np.ndarray) -> FrozenDrift:
    """Terminal-measure drift frozen at the initial curve:
    mu_i = -sum_{j>i} alpha*L_j(0)/(1+alpha*L_j(0)) * c^2 * rho_ij."""
    g = config.alpha * config.l0 / (1.0 + config.alpha * config.l0)
    w = g * config.c * config.c
    mu = -(np.triu(rho, 1) * w[None, :]).sum(axis=1)
    mu[-1] = 0.0
    return FrozenDrift(mu=mu)


@dataclass(frozen=True)
class ZTransform:
    """Coordinate change between log-rates and principal components.

    z = Q^T ln L + beta(tau) with tau the time to the horizon; the shift
    beta_i(tau) = -tau * sum_j Q_ji (c^2/2 - mu_j) absorbs the frozen drift
    and the lognormal convexity so that the transformed problem is a pure
    heat equation. At tau=0 the shift vanishes and z = Q^T ln L.
    """

    config: LmmConfig
    spectrum: Spectrum
    drift: FrozenDrift
    _beta_rate: np.ndarray = field(init=False)

    def __post_init__(self):
        rate = -(self.spectrum.q.T @ (0.5 * self.config.c ** 2 - self.drift.mu))
        rate.setflags(write=False)
        object.__setattr__(self, "_beta_rate", rate)

    def beta(self, tau: float) -> np.ndarray:
        return tau * self._beta_rate

    def z_from_libor(self, libor: np.ndarray, tau: float) -> np.ndarray:
        libor = np.asarray(libor, dtype=float)
        if np.any(libor <= 0):
            raise ConfigurationError("rates must be positive")
        if not 0.0 <= tau <= self.config.horizon + 1e-12:
            raise ConfigurationError(f"tau={tau} outside [0, horizon]")
        return self.spectrum.q.T @ np.log(libor) + self.beta(tau)

    def libor_from_z(self, z: np.ndarray, tau: float) -> np.ndarray:
        return np.exp(self.spectrum.q @ (np.asarray(z, dtype=float) - self.beta(tau)))

    @property
    def anchor(self) -> np.ndarray:
        """z-location of the initial curve at tau = horizon (the readout point)."""
        return self.z_from_libor(self.config.l0, self.config.horizon)


def build_transform(config: LmmConfig) -> ZTransform:
    """Convenience constructor: correlation -> covariance -> spectrum -> drift."""
    rho = build_correlation(config.phi, config.n)
    spectrum = eigendecompose(build_covariance(config.c, rho))
    drift = freeze_drift(config, rho)
    return ZTransform(config=config, spectrum=spectrum, drift=drift)
