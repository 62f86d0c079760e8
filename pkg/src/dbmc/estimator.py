"""Estimation stage: crude baseline and the two database-backed CV schemes.

I1 resamples stored inputs and re-simulates them at the target parameter,
reading control values straight from the database. I2 draws fresh inputs and
simulates the target and every nominal on them, using only the stored means.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .cv import CvSamples, controlled_mean, optimal_beta
from .database import Database, resample_indices
from .noise import GENERATOR_ID
from .tdgl import ModelConfig, Observable, simulate_paths

#: Distance beyond the outermost nominal past which an estimate is flagged.
LOCALITY_MARGIN = 0.5


@dataclass(frozen=True, eq=False)
class ControlledEstimate:
    estimate: float
    beta: np.ndarray
    sample_variance: float
    std_error: float
    n: int
    scheme: str
    theta: float
    r_squared: float | None = None

    def __eq__(self, other):
        if not isinstance(other, ControlledEstimate):
            return NotImplemented
        return (np.array_equal(self.beta, other.beta)
                and (self.estimate, self.sample_variance, self.std_error, self.n, self.scheme, self.theta,
                     self.r_squared)
                == (other.estimate, other.sample_variance, other.std_error, other.n, other.scheme, other.theta,
                    other.r_squared))


def controlled_estimate(y, x, mu, theta: float, scheme: str, beta=None) -> ControlledEstimate:
    """Control-variate estimate from paired samples.

    With ``x`` of zero width the result is the crude sample mean. ``beta``
    fixes the coefficients; otherwise they are fitted on the same samples.
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    x = np.asarray(x, dtype=float).reshape(y.size, -1)
    n = y.size
    if x.shape[1] == 0:
        var = float(y.var(ddof=1)) if n > 1 else 0.0
        return ControlledEstimate(float(y.mean()), np.zeros(0), var, float(np.sqrt(var / n)), n, scheme, theta)
    samples = CvSamples(y, x, mu)
    r2 = None
    if beta is None:
        sol = optimal_beta(samples)
        beta, r2 = sol.beta, sol.r_squared
    beta = np.asarray(beta, dtype=float).reshape(-1)
    cm = controlled_mean(samples, beta)
    return ControlledEstimate(cm.mean, beta, cm.variance, float(np.sqrt(cm.variance / n)), n, scheme, theta, r2)


def _check_locality(theta: float, nominals) -> None:
    lo, hi = float(np.min(nominals)), float(np.max(nominals))
    if theta < lo - LOCALITY_MARGIN or theta > hi + LOCALITY_MARGIN:
        warnings.warn(f"theta={theta} is far from the nominals [{lo}, {hi}]; expect little variance reduction",
                      stacklevel=3)


def _subset(controls, k: int) -> np.ndarray:
    idx = np.arange(k) if controls is None else np.asarray(controls, dtype=int).reshape(-1)
    if idx.size and (idx.min() < 0 or idx.max() >= k):
        raise IndexError(f"control subset {idx.tolist()} out of range for {k} nominals")
    return idx


def estimate_crude(model: ModelConfig, theta: float, n: int, seed: int, observable="P3",
                   workers: int = 1) -> ControlledEstimate:
    """Plain sample mean over ``n`` fresh paths (streams ``(seed, 0..n-1)``)."""
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    kind = Observable.parse(observable)
    y = simulate_paths(model, [theta], seed, np.arange(n), workers=workers)[:, 0, kind - 1]
    return controlled_estimate(y, np.empty((n, 0)), np.empty(0), float(theta), "crude")


def resimulate(db: Database, theta: float, indices, workers: int = 1) -> np.ndarray:
    """Observable of database rows ``indices`` re-simulated at ``theta``.

    Each distinct row is simulated once; repeats reuse the value.
    """
    if db.generator_id != GENERATOR_ID:
        raise ValueError(f"database generator id {db.generator_id} cannot be replayed by generator {GENERATOR_ID}")
    uniq, inverse = np.unique(np.asarray(indices, dtype=np.int64), return_inverse=True)
    obs = simulate_paths(db.model, [theta], db.master_seed, uniq, workers=workers)
    return obs[:, 0, db.observable_kind - 1][inverse.reshape(-1)]


def estimate_cv_i1(db: Database, theta: float, n: int, resample_seed: int, controls=None, beta=None,
                   workers: int = 1) -> ControlledEstimate:
    """Controlled estimate by resampling stored inputs (scheme I1).

    ``controls`` selects nominal columns (default: all); ``beta`` fixes the
    coefficients instead of fitting them on the resample.
    """
    idx_c = _subset(controls, db.k)
    if n < idx_c.size + 2:
        raise ValueError(f"n must be >= k + 2 = {idx_c.size + 2}, got {n}")
    _check_locality(theta, db.nominals[idx_c] if idx_c.size else db.nominals)
    rows = resample_indices(db, n, resample_seed)
    y = resimulate(db, theta, rows, workers=workers)
    x = db.controls[np.ix_(rows, idx_c)]
    return controlled_estimate(y, x, db.means[idx_c], float(theta), "I1", beta=beta)


def estimate_cv_i2(model: ModelConfig, theta: float, nominals, means, n: int, seed: int, observable="P3",
                   beta=None, workers: int = 1) -> ControlledEstimate:
    """Controlled estimate on fresh inputs using stored control means (scheme I2).

    The target and each nominal are simulated separately on the same stream
    addresses ``(seed, 0..n-1)``, so every sample costs k + 1 path simulations.
    """
    nominals = np.asarray(nominals, dtype=float).reshape(-1)
    means = np.asarray(means, dtype=float).reshape(-1)
    if nominals.size != means.size or nominals.size == 0:
        raise ValueError("need one stored mean per nominal")
    if n < nominals.size + 2:
        raise ValueError(f"n must be >= k + 2 = {nominals.size + 2}, got {n}")
    _check_locality(theta, nominals)
    kind = Observable.parse(observable)
    paths = np.arange(n)
    y = simulate_paths(model, [theta], seed, paths, workers=workers)[:, 0, kind - 1]
    x = np.column_stack([simulate_paths(model, [t], seed, paths, workers=workers)[:, 0, kind - 1]
                         for t in nominals])
    return controlled_estimate(y, x, means, float(theta), "I2", beta=beta)
