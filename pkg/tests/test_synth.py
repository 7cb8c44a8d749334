"""Synthetic designs: calibration, composition and scenario pairing."""

import math

import numpy as np
import pytest

from ctiv import design_spec, generate, generate_robustness
from ctiv.errors import CalibrationError, InputError
from ctiv.synth import (
    CALIBRATION_CHECK_MIN_N,
    CORRELATION_TOLERANCE,
    COVARIATE_VARIANCE,
    DEFAULT_COR_WETA,
    DEFAULT_COR_WZ,
    DIRECT_EFFECT_COEF,
    latent_receipt_coefficients,
)


def replay(design_id, n, seed, scenario=None, cor_wz=DEFAULT_COR_WZ,
           cor_weta=DEFAULT_COR_WETA):
    """Independent replay of the documented draw order and formulas."""
    k = 1 if design_id == 1 else 10
    rng = np.random.default_rng(seed)
    x = rng.normal(0.0, math.sqrt(COVARIATE_VARIANCE), size=(n, k))
    z = (rng.random(n) < 0.5).astype(np.int8)
    eta = rng.standard_normal(n)
    u = rng.standard_normal(n)
    if design_id == 3:
        eps = rng.exponential(scale=0.1, size=n) - 0.1
    elif design_id == 4:
        eps = rng.random(n) - 0.5
    else:
        eps = rng.standard_normal(n)
    a, b, c, t = latent_receipt_coefficients(cor_wz, cor_weta)
    w = (a * z + b * eta + c * u > t).astype(np.int8)
    f = x[:, 0] if design_id == 1 else x.sum(axis=1)
    if design_id == 1:
        g = x[:, 0]
    elif design_id == 5:
        g = x[:, 8] * x[:, 9]
    else:
        g = x[:, 8] + x[:, 9]
    base = 1.0 + f + eta + eps
    if scenario == 2:
        base = base + DIRECT_EFFECT_COEF * z * (x[:, 9] >= 0.0)
    tc = 1.0 + g
    y = np.where(w == 1, base + tc, base)
    return x, z, w, y, tc


@pytest.mark.parametrize("design_id", [1, 2, 3, 4, 5])
def test_generate_matches_replay_bitwise(design_id):
    sample = generate(design_spec(design_id, 800, seed=41))
    x, z, w, y, tc = replay(design_id, 800, 41)
    ds = sample.dataset
    assert np.array_equal(ds.covariates, x)
    assert np.array_equal(ds.z, z)
    assert np.array_equal(ds.w, w)
    assert np.array_equal(ds.y, y)
    assert np.array_equal(sample.true_cate, tc)


@pytest.mark.parametrize("design_id", [1, 2, 3, 4, 5])
def test_calibration_window(design_id):
    sample = generate(design_spec(design_id, 20_000, seed=42))
    assert abs(sample.realized_cor_wz - DEFAULT_COR_WZ) <= CORRELATION_TOLERANCE
    assert abs(sample.realized_cor_weta - DEFAULT_COR_WETA) <= CORRELATION_TOLERANCE


def test_weak_instrument_scenario_calibration():
    weak = generate_robustness(1, 20_000, seed=43)
    assert abs(weak.realized_cor_wz - 0.5) <= CORRELATION_TOLERANCE
    strong = generate(design_spec(2, 20_000, seed=43))
    assert weak.realized_cor_wz < strong.realized_cor_wz


def test_marginal_moments():
    sample = generate(design_spec(2, 20_000, seed=44))
    ds = sample.dataset
    assert abs(ds.z.mean() - 0.5) < 0.02
    assert abs(ds.w.mean() - 0.5) < 0.02  # threshold chosen for a balanced receipt
    assert np.allclose(ds.covariates.var(axis=0), COVARIATE_VARIANCE, rtol=0.1)
    assert np.all(np.isfinite(ds.y))


def test_true_cate_forms():
    s1 = generate(design_spec(1, 300, seed=45))
    assert np.array_equal(s1.true_cate, 1.0 + s1.dataset.covariates[:, 0])
    s2 = generate(design_spec(2, 300, seed=45))
    x = s2.dataset.covariates
    assert np.array_equal(s2.true_cate, 1.0 + (x[:, 8] + x[:, 9]))
    s5 = generate(design_spec(5, 300, seed=45))
    x = s5.dataset.covariates
    assert np.array_equal(s5.true_cate, 1.0 + x[:, 8] * x[:, 9])


def test_potential_outcomes_consistent():
    sample = generate(design_spec(3, 2000, seed=46))
    ds = sample.dataset
    picked = np.where(ds.w == 1, sample.y_if_treated, sample.y_if_untreated)
    assert np.array_equal(ds.y, picked)
    gap = sample.y_if_treated - sample.y_if_untreated
    assert np.allclose(gap, sample.true_cate, atol=1e-12, rtol=0.0)


def test_reproducible_and_seed_sensitive():
    a = generate(design_spec(4, 500, seed=47))
    b = generate(design_spec(4, 500, seed=47))
    assert a.dataset.equals(b.dataset)
    assert np.array_equal(a.true_cate, b.true_cate)
    c = generate(design_spec(4, 500, seed=48))
    assert not np.array_equal(a.dataset.y, c.dataset.y)


def test_scenario2_paired_with_design2():
    plain = generate(design_spec(2, 3000, seed=49))
    twisted = generate_robustness(2, 3000, seed=49)
    x = plain.dataset.covariates
    assert np.array_equal(twisted.dataset.covariates, x)
    assert np.array_equal(twisted.dataset.z, plain.dataset.z)
    assert np.array_equal(twisted.dataset.w, plain.dataset.w)
    assert np.array_equal(twisted.true_cate, plain.true_cate)
    untouched = x[:, 9] < 0.0
    assert np.array_equal(twisted.dataset.y[untouched],
                          plain.dataset.y[untouched])
    bumped = (x[:, 9] >= 0.0) & (plain.dataset.z == 1)
    assert bumped.any()
    diff = twisted.dataset.y[bumped] - plain.dataset.y[bumped]
    assert np.allclose(diff, DIRECT_EFFECT_COEF, atol=1e-12)


def test_scenario_labels():
    assert design_spec(3, 10, 0).label == "3"
    assert design_spec(2, 10, 0, scenario=1).label == "s1"
    assert design_spec(2, 10, 0, scenario=2).label == "s2"


def test_coefficients_hit_targets_analytically():
    a, b, c, t = latent_receipt_coefficients(0.65, 0.50)
    assert a == pytest.approx(2 * t, abs=1e-15)
    assert b * b + c * c == pytest.approx(1.0, abs=1e-12)
    # a huge sample realizes the targets well inside the tolerance
    sample = generate(design_spec(2, 200_000, seed=50))
    assert abs(sample.realized_cor_wz - 0.65) < 0.01
    assert abs(sample.realized_cor_weta - 0.50) < 0.01


def test_infeasible_targets_raise():
    with pytest.raises(CalibrationError):
        latent_receipt_coefficients(0.65, 0.60)
    with pytest.raises(CalibrationError):
        latent_receipt_coefficients(0.65, 0.0)


def test_bad_design_and_scenario_ids():
    with pytest.raises(InputError):
        design_spec(0, 100, 1)
    with pytest.raises(InputError):
        design_spec(6, 100, 1)
    with pytest.raises(InputError):
        generate_robustness(3, 100, 1)


def test_small_samples_skip_calibration_gate():
    # the realized-correlation check only applies at scale
    assert CALIBRATION_CHECK_MIN_N == 5000
    for seed in range(5):
        generate(design_spec(2, 60, seed=seed))


def test_feature_names():
    assert generate(design_spec(1, 50, seed=51)).dataset.feature_names == ("x1",)
    names = generate(design_spec(2, 50, seed=51)).dataset.feature_names
    assert names == tuple(f"x{i}" for i in range(1, 11))
