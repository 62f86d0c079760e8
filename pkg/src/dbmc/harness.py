"""Experiment harness: micro/macro variance estimation and VRR sweeps.

A cell of a sweep is one (estimator, theta) pair. Each of ``n_macro``
replications draws ``n_micro`` samples per arm; the reported VRR is the ratio
of the macro-averaged sample variances of the crude and controlled arms.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .cv import (CvSamples, DegenerateVariance, controlled_mean, empirical_vrr, optimal_beta,
                 r_squared_from_cov, theoretical_vrr)
from .database import Database, build_database, resample_indices
from .estimator import ControlledEstimate, controlled_estimate, estimate_crude, resimulate
from .tdgl import simulate_paths

log = logging.getLogger(__name__)

CSV_COLUMNS = ("estimator", "theta", "vrr", "vrr_stderr", "mean", "crude_var", "cv_var", "n_micro", "n_macro")

#: Default parameter grid for VRR sweeps.
TABLE_GRID = (1.150, 1.175, 1.225, 1.250, 1.265, 1.300, 1.325, 1.375, 1.400)

# spawn-key slots for per-cell seeds
_RESAMPLE, _CRUDE, _FRESH, _REBUILD = range(4)


class MacroReplicationError(RuntimeError):
    def __init__(self, macro: int, cause: BaseException):
        self.macro = macro
        super().__init__(f"macro replication {macro} failed: {cause}")


@dataclass(frozen=True)
class MacroMicroResult:
    mean: float
    variance: float
    variance_of_variance: float
    macro_means: np.ndarray
    macro_variances: np.ndarray


def summarize_macros(estimates: list[ControlledEstimate]) -> MacroMicroResult:
    means = np.array([e.estimate for e in estimates])
    variances = np.array([e.sample_variance for e in estimates])
    return MacroMicroResult(float(means.mean()), float(variances.mean()), float(variances.var(ddof=1)),
                            means, variances)


def macro_micro_variance(estimate_fn: Callable[[int, int], ControlledEstimate], n_macro: int,
                         n_micro: int) -> MacroMicroResult:
    """Run ``estimate_fn(macro_index, n_micro)`` for every macro replication and pool the results."""
    if n_macro < 2:
        raise ValueError(f"n_macro must be >= 2, got {n_macro}")
    estimates = []
    for m in range(n_macro):
        try:
            estimates.append(estimate_fn(m, n_micro))
        except Exception as exc:
            raise MacroReplicationError(m, exc) from exc
    return summarize_macros(estimates)


def cell_seed(seed: int, theta_index: int, macro: int, slot: int) -> int:
    ss = np.random.SeedSequence(seed, spawn_key=(theta_index, macro, slot))
    return int(ss.generate_state(1, np.uint64)[0])


def default_estimators(nominals) -> list[tuple[str, tuple[int, ...]]]:
    ests = [("crude", ())]
    ests += [(f"CV{t:g}", (i,)) for i, t in enumerate(nominals)]
    if len(nominals) == 2:
        ests.append(("CV2C", (0, 1)))
    elif len(nominals) > 2:
        ests.append((f"CV{len(nominals)}C", tuple(range(len(nominals)))))
    return ests


@dataclass
class SweepConfig:
    theta_grid: tuple[float, ...] = TABLE_GRID
    estimators: list[tuple[str, tuple[int, ...]]] | None = None
    n_micro: int = 256
    n_macro: int = 40
    seed: int = 1
    scheme: str = "i1"
    rebuild_per_macro: bool = False
    workers: int = 1
    db_path: str | None = None
    output: str | None = None

    def __post_init__(self):
        self.theta_grid = tuple(float(t) for t in self.theta_grid)
        if not self.theta_grid:
            raise ValueError("theta_grid is empty")
        if self.n_macro < 2:
            raise ValueError(f"n_macro must be >= 2, got {self.n_macro}")
        if self.scheme not in ("i1", "i2"):
            raise ValueError(f"scheme must be 'i1' or 'i2', got {self.scheme!r}")
        if self.estimators is not None:
            self.estimators = [(str(lbl), tuple(int(i) for i in sub)) for lbl, sub in self.estimators]
            kmax = max((len(sub) for _, sub in self.estimators), default=0)
            if self.n_micro < kmax + 2:
                raise ValueError(f"n_micro must be >= k + 2 = {kmax + 2}")
        elif self.n_micro < 3:
            raise ValueError("n_micro must be >= 3")


@dataclass
class VrrRow:
    estimator: str
    theta: float
    vrr: float
    vrr_stderr: float
    mean: float
    crude_var: float
    cv_var: float
    n_micro: int
    n_macro: int
    error: str | None = None


@dataclass
class VrrReport:
    rows: list[VrrRow] = field(default_factory=list)

    def row(self, estimator: str, theta: float) -> VrrRow:
        for r in self.rows:
            if r.estimator == estimator and math.isclose(r.theta, theta, abs_tol=1e-12):
                return r
        raise KeyError((estimator, theta))

    @property
    def estimators(self) -> list[str]:
        return list(dict.fromkeys(r.estimator for r in self.rows))

    @property
    def thetas(self) -> list[float]:
        return list(dict.fromkeys(r.theta for r in self.rows))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_COLUMNS)
            for r in self.rows:
                w.writerow([r.estimator] + [repr(float(getattr(r, c))) for c in CSV_COLUMNS[1:7]]
                           + [r.n_micro, r.n_macro])

    def to_plot_table(self, path) -> None:
        """Whitespace table, one column of VRR per estimator, for log-scale plots."""
        ests = self.estimators
        with open(path, "w") as fh:
            fh.write("# theta " + " ".join(ests) + "\n")
            for t in self.thetas:
                vals = [self.row(e, t).vrr for e in ests]
                fh.write(f"{t:.6g} " + " ".join(f"{v:.6g}" if math.isfinite(v) else "nan" for v in vals) + "\n")

    def summary(self) -> str:
        ests = self.estimators
        lines = ["theta    " + "".join(f"{e:>12s}" for e in ests)]
        for t in self.thetas:
            cells = []
            for e in ests:
                v = self.row(e, t).vrr
                cells.append(f"{v:12.4g}" if math.isfinite(v) else f"{'error':>12s}")
            lines.append(f"{t:<9.4g}" + "".join(cells))
        return "\n".join(lines)


def read_csv(path) -> VrrReport:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ValueError(f"unexpected CSV columns {reader.fieldnames}")
        for rec in reader:
            rows.append(VrrRow(rec["estimator"], *(float(rec[c]) for c in CSV_COLUMNS[1:7]),
                               int(rec["n_micro"]), int(rec["n_macro"])))
    return VrrReport(rows)


def _error_row(label, theta, cfg, msg) -> VrrRow:
    nan = float("nan")
    return VrrRow(label, theta, nan, nan, nan, nan, nan, cfg.n_micro, cfg.n_macro, error=msg)


def _macro_samples(cfg: SweepConfig, db: Database, ti: int, theta: float, m: int, needed):
    """Target samples and control matrix (all nominals) for one macro replication."""
    if cfg.rebuild_per_macro:
        db = build_database(db.model, db.nominals, db.observable_kind, db.n_paths,
                            cell_seed(cfg.seed, ti, m, _REBUILD), workers=cfg.workers)
    if cfg.scheme == "i1":
        rows = resample_indices(db, cfg.n_micro, cell_seed(cfg.seed, ti, m, _RESAMPLE))
        y = resimulate(db, theta, rows, workers=cfg.workers)
        return y, db.controls[rows], db.means
    seed = cell_seed(cfg.seed, ti, m, _FRESH)
    paths = np.arange(cfg.n_micro)
    kind = db.observable_kind - 1
    y = simulate_paths(db.model, [theta], seed, paths, workers=cfg.workers)[:, 0, kind]
    x = np.full((cfg.n_micro, db.k), np.nan)
    for i in needed:
        x[:, i] = simulate_paths(db.model, [db.nominals[i]], seed, paths, workers=cfg.workers)[:, 0, kind]
    return y, x, db.means


def vrr_sweep(cfg: SweepConfig, db: Database) -> VrrReport:
    """Run every (estimator, theta) cell of the sweep against ``db``.

    Controlled estimators within one macro replication share the same target
    samples; the crude arm always uses fresh streams.
    """
    estimators = cfg.estimators if cfg.estimators is not None else default_estimators(db.nominals)
    needed = sorted({i for _, sub in estimators for i in sub})
    if needed and needed[-1] >= db.k:
        raise ValueError(f"estimator refers to control {needed[-1]} but the database has {db.k}")
    scheme = cfg.scheme.upper()
    report = VrrReport()
    for ti, theta in enumerate(cfg.theta_grid):
        crude_arm: list[ControlledEstimate] = []
        arms: dict[str, list] = {lbl: [] for lbl, _ in estimators}
        failed: dict[str, str] = {}
        try:
            for m in range(cfg.n_macro):
                crude_arm.append(estimate_crude(db.model, theta, cfg.n_micro, cell_seed(cfg.seed, ti, m, _CRUDE),
                                                db.observable_kind, workers=cfg.workers))
                y, x, mu = _macro_samples(cfg, db, ti, theta, m, needed)
                for lbl, sub in estimators:
                    if lbl in failed:
                        continue
                    try:
                        sub = list(sub)
                        arms[lbl].append(controlled_estimate(y, x[:, sub], mu[sub], theta, scheme))
                    except Exception as exc:
                        failed[lbl] = f"macro {m}: {type(exc).__name__}: {exc}"
        except Exception as exc:
            msg = f"{type(exc).__name__}: {exc}"
            log.warning("theta=%g failed: %s", theta, msg)
            report.rows.extend(_error_row(lbl, theta, cfg, msg) for lbl, _ in estimators)
            continue
        crude = summarize_macros(crude_arm)
        for lbl, _ in estimators:
            if lbl in failed:
                log.warning("%s at theta=%g failed: %s", lbl, theta, failed[lbl])
                report.rows.append(_error_row(lbl, theta, cfg, failed[lbl]))
                continue
            ctrl = summarize_macros(arms[lbl])
            try:
                vrr = empirical_vrr(crude.variance, ctrl.variance)
                per_macro = crude.macro_variances / ctrl.macro_variances
            except DegenerateVariance as exc:
                report.rows.append(_error_row(lbl, theta, cfg, str(exc)))
                continue
            report.rows.append(VrrRow(lbl, theta, vrr, float(np.std(per_macro, ddof=1)), ctrl.mean,
                                      crude.variance, ctrl.variance, cfg.n_micro, cfg.n_macro))
        log.info("theta=%g done", theta)
    return report


@dataclass(frozen=True)
class OracleCheck:
    name: str
    value: float
    expected: float
    delta: float
    passed: bool


def _gaussian(rng, cov, n):
    return rng.multivariate_normal(np.zeros(len(cov)), cov, size=n, method="cholesky")


def _vrr_two_arm(rng, cov, n) -> float:
    """Crude arm and controlled arm on independent draws, known control means of 0."""
    crude = _gaussian(rng, cov, n)[:, 0]
    arm = _gaussian(rng, cov, n)
    samples = CvSamples(arm[:, 0], arm[:, 1:], np.zeros(len(cov) - 1))
    cm = controlled_mean(samples, optimal_beta(samples).beta)
    return empirical_vrr(float(crude.var(ddof=1)), cm.variance)


def regression_vrr_oracle(rng, cov, n) -> float:
    """Brute-force VRR: least-squares regression of Y on the controls, var(Y)/var(residual)."""
    d = _gaussian(rng, cov, n)
    design = np.column_stack([np.ones(n), d[:, 1:]])
    coef, *_ = np.linalg.lstsq(design, d[:, 0], rcond=None)
    resid = d[:, 0] - design @ coef
    return float(d[:, 0].var() / resid.var())


TWO_CONTROL_COV = np.array([[1.0, 0.8, 0.6],
                            [0.8, 1.0, 0.5],
                            [0.6, 0.5, 1.0]])


def gaussian_oracle_suite(seed: int = 0, n: int = 100_000, n_oracle: int = 1_000_000) -> list[OracleCheck]:
    """Control-variate maths against closed-form Gaussian answers."""
    rng = np.random.default_rng(seed)
    checks = []

    v = _vrr_two_arm(rng, np.array([[1.0, 0.0], [0.0, 1.0]]), n)
    checks.append(OracleCheck("rho=0 empirical VRR", v, 1.0, v - 1.0, 0.9 <= v <= 1.1))

    rho = 0.9
    target = theoretical_vrr(rho**2)
    v = _vrr_two_arm(rng, np.array([[1.0, rho], [rho, 1.0]]), n)
    checks.append(OracleCheck("rho=0.9 empirical VRR", v, target, v / target - 1, abs(v / target - 1) <= 0.10))

    c = TWO_CONTROL_COV
    theory = theoretical_vrr(r_squared_from_cov(c[1:, 1:], c[1:, 0], c[0, 0]))
    brute = regression_vrr_oracle(rng, c, n_oracle)
    checks.append(OracleCheck("two-control theoretical VRR vs regression", theory, brute, theory / brute - 1,
                              abs(theory / brute - 1) <= 0.05))

    v = _vrr_two_arm(rng, c, n)
    checks.append(OracleCheck("two-control empirical VRR", v, theory, v / theory - 1, abs(v / theory - 1) <= 0.10))

    d = _gaussian(rng, c, 1000) + np.array([3.0, -1.0, 2.0])
    mu = np.array([-1.2, 1.7])
    samples = CvSamples(d[:, 0], d[:, 1:], mu)
    cv = controlled_mean(samples, optimal_beta(samples).beta).mean
    design = np.column_stack([np.ones(len(d)), d[:, 1:] - mu])
    intercept = np.linalg.lstsq(design, d[:, 0], rcond=None)[0][0]
    rel = abs(cv - intercept) / abs(intercept)
    checks.append(OracleCheck("controlled mean equals OLS intercept", cv, float(intercept), float(rel), bool(rel <= 1e-10)))
    return checks
