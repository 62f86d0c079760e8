"""Control-variate estimation.

Adjusted samples are ``z_j = y_j - beta . (x_j - mu)`` with
``beta = Sigma_X^{-1} Sigma_XY``; this sign is the one that actually minimises
``Var(z)``, giving ``Var(z) = (1 - R^2) Var(y)``. All covariances use the n-1
divisor.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import linalg

#: Reciprocal condition number below which the control covariance is refused.
RCOND_MIN = 1e-12


class SingularCovariance(np.linalg.LinAlgError):
    """Control covariance is numerically singular (duplicated or degenerate controls)."""


class Unbounded(ValueError):
    """R^2 >= 1: the variance reduction ratio diverges."""


class DegenerateVariance(ValueError):
    """Controlled variance is not positive, so a variance ratio is undefined."""


@dataclass(frozen=True)
class CvSamples:
    y: np.ndarray
    x: np.ndarray
    mu: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).reshape(-1)
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        mu = np.asarray(self.mu, dtype=float).reshape(-1)
        n, k = x.shape
        if k < 1:
            raise ValueError("need at least one control")
        if y.size != n:
            raise ValueError(f"y has {y.size} samples but x has {n} rows")
        if mu.size != k:
            raise ValueError(f"mu has {mu.size} entries for {k} controls")
        if n < k + 2:
            raise ValueError(f"need n >= k + 2 samples, got n={n}, k={k}")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "mu", mu)

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def k(self) -> int:
        return self.x.shape[1]


@dataclass(frozen=True)
class BetaSolution:
    beta: np.ndarray
    sigma_x: np.ndarray
    sigma_xy: np.ndarray
    r_squared: float


class ControlledMean(NamedTuple):
    mean: float
    variance: float
    n: int


def solve_beta(sigma_x, sigma_xy) -> np.ndarray:
    """Solve ``sigma_x beta = sigma_xy`` by Cholesky, refusing ill-conditioned systems."""
    sigma_x = np.atleast_2d(np.asarray(sigma_x, dtype=float))
    sigma_xy = np.asarray(sigma_xy, dtype=float).reshape(-1)
    eig = np.linalg.eigvalsh(sigma_x)
    if not (eig[-1] > 0 and eig[0] / eig[-1] >= RCOND_MIN):
        raise SingularCovariance(f"control covariance is singular (eigenvalues {eig})")
    try:
        return linalg.cho_solve(linalg.cho_factor(sigma_x), sigma_xy)
    except linalg.LinAlgError as exc:
        raise SingularCovariance(str(exc)) from exc


def optimal_beta(samples: CvSamples) -> BetaSolution:
    cov = np.cov(np.column_stack([samples.x, samples.y]), rowvar=False, ddof=1)
    k = samples.k
    sigma_x = cov[:k, :k]
    sigma_xy = cov[:k, k]
    var_y = cov[k, k]
    beta = solve_beta(sigma_x, sigma_xy)
    r2 = float(sigma_xy @ beta / var_y) if var_y > 0 else 0.0
    return BetaSolution(beta=beta, sigma_x=sigma_x, sigma_xy=sigma_xy, r_squared=r2)


def adjusted_samples(samples: CvSamples, beta) -> np.ndarray:
    beta = np.asarray(beta, dtype=float).reshape(-1)
    if beta.size != samples.k:
        raise ValueError(f"beta has {beta.size} entries for {samples.k} controls")
    return samples.y - (samples.x - samples.mu) @ beta


def controlled_mean(samples: CvSamples, beta) -> ControlledMean:
    z = adjusted_samples(samples, beta)
    return ControlledMean(float(z.mean()), float(z.var(ddof=1)), z.size)


def r_squared_from_cov(sigma_x, sigma_xy, var_y: float) -> float:
    """Population R^2 = Sigma_XY' Sigma_X^{-1} Sigma_XY / sigma_Y^2."""
    sigma_xy = np.asarray(sigma_xy, dtype=float).reshape(-1)
    return float(sigma_xy @ solve_beta(sigma_x, sigma_xy) / var_y)


def theoretical_vrr(r_squared: float) -> float:
    if r_squared >= 1.0:
        raise Unbounded(f"R^2 = {r_squared} >= 1")
    if r_squared < 0.0:
        raise ValueError(f"R^2 must be non-negative, got {r_squared}")
    return 1.0 / (1.0 - r_squared)


def empirical_vrr(var_crude: float, var_controlled: float) -> float:
    if not var_controlled > 0:
        raise DegenerateVariance(f"controlled variance {var_controlled} is not positive")
    if var_crude < 0:
        raise ValueError(f"crude variance {var_crude} is negative")
    return var_crude / var_controlled
