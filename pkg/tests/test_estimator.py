import time
import warnings

import numpy as np
import pytest

from dbmc.cv import SingularCovariance
from dbmc.database import build_database, resample_indices
from dbmc.estimator import (controlled_estimate, estimate_crude, estimate_cv_i1, estimate_cv_i2, resimulate)
from dbmc.noise import make_stream
from dbmc.tdgl import ModelConfig, simulate_path, simulate_paths


def test_crude_constant_observable_has_zero_variance():
    m = ModelConfig(lattice_size=8, n_steps=10, point_time_step=0)
    est = estimate_crude(m, 1.2, 16, seed=1, observable="P1")
    assert est.estimate == 0.0 and est.sample_variance == 0.0 and est.std_error == 0.0
    assert est.scheme == "crude" and est.beta.size == 0


def test_crude_is_deterministic(tiny_model):
    assert estimate_crude(tiny_model, 1.3, 20, 5) == estimate_crude(tiny_model, 1.3, 20, 5)
    assert estimate_crude(tiny_model, 1.3, 20, 5) != estimate_crude(tiny_model, 1.3, 20, 6)


def test_crude_std_error_matches_reference(small_model):
    ref = simulate_paths(small_model, [1.2], 900, np.arange(10_000))[:, 0, 2]
    predicted = ref.std(ddof=1) / np.sqrt(256)
    est = estimate_crude(small_model, 1.2, 256, 901)
    assert predicted / 3 < est.std_error < 3 * predicted


def test_crude_invariant_stderr(tiny_model):
    est = estimate_crude(tiny_model, 1.25, 30, 2)
    assert est.std_error**2 * est.n == pytest.approx(est.sample_variance, rel=1e-12)


def test_i1_at_nominal_is_self_controlled(tiny_db):
    est = estimate_cv_i1(tiny_db, 1.2, 64, 3, controls=[0])
    assert est.r_squared > 0.999
    assert est.sample_variance < 1e-18 * np.var(tiny_db.controls[:, 0])
    assert est.estimate == pytest.approx(tiny_db.means[0], rel=1e-12)


def test_i1_resimulation_is_bitwise(tiny_db):
    rows = resample_indices(tiny_db, 256, 17)
    for i, t in enumerate(tiny_db.nominals):
        y = resimulate(tiny_db, t, rows)
        assert np.array_equal(y, tiny_db.controls[rows, i])


def test_i1_zero_beta_is_resampled_mean(tiny_db, tiny_model):
    n, seed = 24, 9
    est = estimate_cv_i1(tiny_db, 1.27, n, seed, beta=[0.0, 0.0])
    rows = resample_indices(tiny_db, n, seed)
    y = [simulate_path(tiny_model.with_theta(1.27), make_stream(tiny_db.master_seed, int(j))).spacetime_mag
         for j in rows]
    assert est.estimate == np.mean(y)


def test_i1_reduces_variance(tiny_db):
    est = estimate_cv_i1(tiny_db, 1.225, 64, 4, controls=[0])
    crude = estimate_crude(tiny_db.model, 1.225, 64, 4)
    assert crude.sample_variance / est.sample_variance > 10


def test_i1_duplicate_controls_raise(tiny_db):
    with pytest.raises(SingularCovariance):
        estimate_cv_i1(tiny_db, 1.25, 32, 1, controls=[0, 0])


def test_i1_sample_size_check(tiny_db):
    with pytest.raises(ValueError):
        estimate_cv_i1(tiny_db, 1.25, 3, 1)


def test_far_theta_warns(tiny_db):
    with pytest.warns(UserWarning, match="far from the nominals"):
        estimate_cv_i1(tiny_db, 2.0, 8, 1)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        estimate_cv_i1(tiny_db, 1.5, 8, 1)


def test_i2_at_nominal_returns_stored_mean(tiny_db, tiny_model):
    est = estimate_cv_i2(tiny_model, 1.2, [1.2], tiny_db.means[:1], 32, 55)
    assert est.sample_variance < 1e-18
    assert est.estimate == pytest.approx(tiny_db.means[0], rel=1e-12)


def test_i2_zero_beta_is_crude(tiny_db, tiny_model):
    est = estimate_cv_i2(tiny_model, 1.3, tiny_db.nominals, tiny_db.means, 32, 55, beta=[0, 0])
    crude = estimate_crude(tiny_model, 1.3, 32, 55)
    assert est.estimate == crude.estimate
    assert est.sample_variance == crude.sample_variance


def test_i1_and_i2_agree(tiny_db, tiny_model):
    a = estimate_cv_i1(tiny_db, 1.28, 64, 1)
    b = estimate_cv_i2(tiny_model, 1.28, tiny_db.nominals, tiny_db.means, 64, 1234)
    # both carry the database-mean error, so compare on the stated standard errors plus that term
    spread = np.sqrt(a.std_error**2 + b.std_error**2)
    assert abs(a.estimate - b.estimate) < 4 * spread + 1e-9 * abs(a.estimate)


def test_i1_fixed_beta_unbiased_given_database(tiny_db):
    theta, beta = 1.25, np.array([0.6, 0.4])
    population = resimulate(tiny_db, theta, np.arange(tiny_db.n_paths))
    target = population.mean() - (tiny_db.controls.mean(axis=0) - tiny_db.means) @ beta
    ests = np.array([estimate_cv_i1(tiny_db, theta, 8, s, beta=beta).estimate for s in range(400)])
    se = ests.std(ddof=1) / np.sqrt(ests.size)
    assert abs(ests.mean() - target) < 4 * se


def test_i1_bias_within_database_interval(small_model):
    db = build_database(small_model, [1.2, 1.35], "P3", 512, master_seed=31)
    theta = 1.27
    fresh = simulate_paths(small_model, [theta], 32, np.arange(4096))[:, 0, 2]
    ests = np.array([estimate_cv_i1(db, theta, 16, s).estimate for s in range(60)])
    bound = 1.96 * fresh.std(ddof=1) / np.sqrt(db.n_paths)
    mc = 4 * (ests.std(ddof=1) / np.sqrt(ests.size) + fresh.std(ddof=1) / np.sqrt(fresh.size))
    assert abs(ests.mean() - fresh.mean()) <= bound + mc


def test_controlled_estimate_crude_branch():
    est = controlled_estimate([1.0, 2.0, 3.0], np.empty((3, 0)), [], 1.0, "crude")
    assert est.estimate == 2.0 and est.sample_variance == 1.0


def _best_time(fn, repeats=3):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def test_i2_cost_is_k_plus_one_crude():
    m = ModelConfig(lattice_size=16, n_steps=300)
    estimate_crude(m, 1.25, 4, 0)
    crude = _best_time(lambda: estimate_crude(m, 1.25, 48, 0))
    i2 = _best_time(lambda: estimate_cv_i2(m, 1.25, [1.2, 1.35], [0.0, 0.0], 48, 0))
    assert i2 / crude == pytest.approx(3.0, rel=0.30)
