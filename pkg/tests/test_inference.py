"""Bands and model confidence sets."""

import json

import numpy as np
import pytest
from scipy.special import ndtri

from cvconf.covariance import (
    CovEstimate,
    aggregate_covariance,
    difference_covariance,
    variance_floor,
)
from cvconf.cv_engine import RiskVector, cv_risk
from cvconf.datamodel import DomainError, LossMatrix, make_folds
from cvconf.inference import (
    BandSet,
    ModelConfidenceSet,
    check_coverage,
    cvc_set,
    naive_set,
    pointwise_band,
    simultaneous_band,
)


def _risk(values, n=100):
    values = np.asarray(values, dtype=float)
    labels = tuple(f"m{r}" for r in range(values.shape[0]))
    return RiskVector(values=values, n=n, model_labels=labels)


def _cov(diag, off=None):
    diag = np.asarray(diag, dtype=float)
    sigma = np.diag(diag) if off is None else np.asarray(off, dtype=float)
    return CovEstimate(sigma=sigma, lambda_diag=diag)


def _loss_matrix(values, V):
    values = np.asarray(values, dtype=float)
    plan = make_folds(values.shape[0], V)
    labels = tuple(f"m{r}" for r in range(values.shape[1]))
    return LossMatrix(values, plan, labels)


def _random_loss(rng, n, p, V):
    base = rng.normal(size=(n, 1))
    vals = base + rng.normal(scale=rng.uniform(0.5, 2.0, size=p), size=(n, p)) ** 2
    return _loss_matrix(vals, V)


# ------------------------------------------------------------------ bands


def test_simultaneous_injected_zero_collapses_to_center():
    band = simultaneous_band(_risk([0.3, 0.7]), _cov([1.0, 2.0]), alpha=0.1, z_hat=0.0)
    np.testing.assert_array_equal(band.lower, [0.3, 0.7])
    np.testing.assert_array_equal(band.upper, [0.3, 0.7])
    assert band.kind == "simultaneous"


def test_simultaneous_single_model_hand_width():
    # half-width sqrt(4) * 2 / sqrt(100) = 0.4
    band = simultaneous_band(_risk([1.0], n=100), _cov([4.0]), alpha=0.05, z_hat=2.0)
    assert band.lower[0] == pytest.approx(0.6)
    assert band.upper[0] == pytest.approx(1.4)


def test_simultaneous_sampled_single_model_matches_normal_quantile():
    band = simultaneous_band(
        _risk([0.0], n=400), _cov([1.0]), alpha=0.05, seed=21, draws=40_000
    )
    assert band.z_used == pytest.approx(ndtri(0.975), abs=0.05)


def test_simultaneous_degenerate_coordinate_gets_zero_width():
    band = simultaneous_band(_risk([0.2, 0.8]), _cov([1.0, 0.0]), alpha=0.1, seed=3)
    assert band.upper[1] == band.lower[1] == 0.8
    assert band.upper[0] > band.lower[0]


def test_simultaneous_all_degenerate_returns_point_band():
    band = simultaneous_band(_risk([0.2, 0.8]), _cov([0.0, 0.0]), alpha=0.1, seed=3)
    np.testing.assert_array_equal(band.lower, band.upper)


def test_simultaneous_scaling_losses_scales_endpoints_exactly():
    rng = np.random.default_rng(5)
    lm = _random_loss(rng, 60, 3, V=5)
    lm4 = LossMatrix(4.0 * lm.values, lm.plan, lm.model_labels)
    kw = dict(alpha=0.1, seed=11, draws=5000)
    b1 = simultaneous_band(cv_risk(lm), aggregate_covariance(lm), **kw)
    b4 = simultaneous_band(cv_risk(lm4), aggregate_covariance(lm4), **kw)
    assert b4.z_used == b1.z_used
    np.testing.assert_array_equal(b4.lower, 4.0 * b1.lower)
    np.testing.assert_array_equal(b4.upper, 4.0 * b1.upper)


def test_pointwise_multiplier_is_two_sided_normal_quantile():
    band = pointwise_band(_risk([0.0], n=100), _cov([1.0]), alpha=0.05)
    assert band.z_used == pytest.approx(1.959963984540054, abs=1e-12)
    assert band.upper[0] == pytest.approx(1.959963984540054 / 10.0)
    assert band.kind == "pointwise"


def test_pointwise_width_vanishes_as_alpha_approaches_one():
    band = pointwise_band(_risk([0.5]), _cov([1.0]), alpha=1.0 - 1e-12)
    assert band.upper[0] - band.lower[0] < 1e-6


def test_pointwise_never_wider_than_simultaneous():
    rng = np.random.default_rng(7)
    for p in (2, 3, 5):
        lm = _random_loss(rng, 80, p, V=4)
        risks, cov = cv_risk(lm), aggregate_covariance(lm)
        pw = pointwise_band(risks, cov, alpha=0.1)
        sim = simultaneous_band(risks, cov, alpha=0.1, seed=int(p), draws=20_000)
        assert np.all(pw.upper - pw.lower <= sim.upper - sim.lower + 1e-12)


def test_band_serializes_to_json():
    band = simultaneous_band(_risk([0.3, 0.7]), _cov([1.0, 2.0]), alpha=0.1, z_hat=1.5)
    blob = json.loads(json.dumps(band.to_dict()))
    assert blob["kind"] == "simultaneous"
    assert len(blob["lower"]) == 2
    assert blob["alpha"] == 0.1


# -------------------------------------------------------------- naive set


def test_naive_rejects_pointwise_band():
    band = pointwise_band(_risk([0.1]), _cov([1.0]), alpha=0.1)
    with pytest.raises(DomainError):
        naive_set(band)


def test_naive_single_model():
    band = simultaneous_band(_risk([0.4]), _cov([1.0]), alpha=0.1, z_hat=1.0)
    assert naive_set(band).members == (0,)


def test_naive_hand_case():
    # lower bounds (-.3, .2, .7); min upper bound 0.3 -> members {0, 1}
    band = BandSet(
        lower=np.array([-0.3, 0.2, 0.7]),
        upper=np.array([0.3, 0.8, 1.3]),
        center=np.array([0.0, 0.5, 1.0]),
        alpha=0.1,
        z_used=1.0,
        kind="simultaneous",
        n=100,
    )
    assert naive_set(band).members == (0, 1)


def test_naive_identical_models_keep_everything():
    band = simultaneous_band(_risk([0.5] * 4), _cov([1.0] * 4), alpha=0.1, z_hat=1.0)
    assert naive_set(band).members == (0, 1, 2, 3)


def test_naive_always_contains_empirical_minimizer():
    rng = np.random.default_rng(13)
    for trial in range(25):
        p = int(rng.integers(1, 7))
        risks = rng.normal(size=p)
        diag = rng.uniform(0.0, 2.0, size=p)
        band = simultaneous_band(_risk(risks), _cov(diag), alpha=0.1, z_hat=float(rng.uniform(0, 3)))
        members = naive_set(band).members
        assert int(np.argmin(risks)) in members


# ---------------------------------------------------------------- cvc set


def test_cvc_single_model_short_circuits():
    lm = _loss_matrix(np.abs(np.random.default_rng(0).normal(size=(20, 1))), V=4)
    out = cvc_set(lm, alpha=0.05, seed=1)
    assert out.members == (0,)
    assert out.method == "cvc"


def test_cvc_identical_columns_keeps_both():
    rng = np.random.default_rng(2)
    col = rng.normal(size=(24, 1)) ** 2
    lm = _loss_matrix(np.hstack([col, col]), V=4)
    out = cvc_set(lm, alpha=0.05, seed=5)
    assert out.members == (0, 1)


def _cvc_oracle(lm, z_by_candidate):
    """Direct evaluation of the membership inequalities."""
    risks = lm.values.mean(axis=0)
    n, p = lm.values.shape
    members = []
    for r in range(p):
        diff = difference_covariance(lm, r)
        floor = variance_floor(diff.lambda_diag)
        ok = True
        for a, s in enumerate(diff.others):
            gap = risks[r] - risks[s]
            if diff.lambda_diag[a] > floor:
                stat = np.sqrt(n) * gap / np.sqrt(diff.lambda_diag[a])
                if stat > z_by_candidate[r]:
                    ok = False
            elif gap > 0.0:
                ok = False
        if ok:
            members.append(r)
    return tuple(members)


def test_cvc_matches_brute_force_oracle_with_injected_quantiles():
    rng = np.random.default_rng(17)
    for trial in range(30):
        lm = _random_loss(rng, 40, 5, V=4)
        # shrink some gaps so membership is nontrivial
        lm = _loss_matrix(lm.values - 0.8 * lm.values.mean(axis=0), V=4)
        z = rng.uniform(0.2, 2.0, size=5)
        out = cvc_set(lm, alpha=0.05, z_inject=z)
        assert out.members == _cvc_oracle(lm, z)
        assert len(out.members) > 0 or np.any(z < 0.0)


def test_cvc_duplicate_column_cases_match_oracle():
    rng = np.random.default_rng(19)
    for trial in range(10):
        lm = _random_loss(rng, 40, 4, V=4)
        vals = lm.values.copy()
        vals[:, 3] = vals[:, 0]
        lm = _loss_matrix(vals, V=4)
        z = rng.uniform(0.2, 2.0, size=4)
        out = cvc_set(lm, alpha=0.05, z_inject=z)
        assert out.members == _cvc_oracle(lm, z)


def test_cvc_zero_quantile_with_separated_risks_keeps_only_argmin():
    rng = np.random.default_rng(23)
    vals = rng.normal(size=(40, 3)) ** 2 + np.array([0.0, 5.0, 10.0])
    lm = _loss_matrix(vals, V=4)
    out = cvc_set(lm, alpha=0.05, z_inject=0.0)
    assert out.members == (int(np.argmin(vals.mean(axis=0))),)


def test_cvc_infinite_quantile_keeps_everything():
    rng = np.random.default_rng(29)
    lm = _random_loss(rng, 40, 4, V=4)
    out = cvc_set(lm, alpha=0.05, z_inject=np.inf)
    assert out.members == (0, 1, 2, 3)


def test_cvc_sampled_path_contains_argmin():
    rng = np.random.default_rng(31)
    for trial in range(5):
        lm = _random_loss(rng, 60, 4, V=5)
        out = cvc_set(lm, alpha=0.05, seed=trial, draws=2000)
        r_star = int(np.argmin(lm.values.mean(axis=0)))
        assert out.z_alpha[r_star] >= 0.0
        assert r_star in out.members


def test_cvc_rescaling_all_columns_is_a_noop():
    rng = np.random.default_rng(37)
    lm = _random_loss(rng, 60, 4, V=5)
    lm4 = _loss_matrix(4.0 * lm.values, V=5)
    a = cvc_set(lm, alpha=0.05, seed=101, draws=3000)
    b = cvc_set(lm4, alpha=0.05, seed=101, draws=3000)
    assert a.members == b.members
    np.testing.assert_array_equal(a.z_alpha, b.z_alpha)


def test_cvc_input_checks():
    lm = _loss_matrix(np.ones((8, 2)), V=4)  # n == 2V ok
    cvc_set(lm, alpha=0.05, seed=0)
    small = _loss_matrix(np.ones((6, 2)), V=3)  # n == 2V ok
    cvc_set(small, alpha=0.05, seed=0)
    short = _loss_matrix(np.ones((4, 2)), V=4)
    with pytest.raises(DomainError):
        cvc_set(short, alpha=0.05, seed=0)
    with pytest.raises(DomainError):
        cvc_set(lm, alpha=0.05)  # no seed, no injection


def test_cvc_serializes_to_json():
    rng = np.random.default_rng(41)
    lm = _random_loss(rng, 40, 3, V=4)
    out = cvc_set(lm, alpha=0.1, seed=7, draws=2000)
    blob = json.loads(json.dumps(out.to_dict()))
    assert blob["method"] == "cvc"
    assert set(blob["members"]) == set(out.members)
    assert len(blob["z_alpha"]) == 3


# ----------------------------------------------------------- check_coverage


def test_coverage_zero_width_band_requires_exact_hit():
    band = simultaneous_band(_risk([0.3, 0.7]), _cov([1.0, 2.0]), alpha=0.1, z_hat=0.0)
    assert check_coverage(band, np.array([0.3, 0.7]))
    assert not check_coverage(band, np.array([0.3, 0.7 + 1e-9]))


def test_coverage_center_always_covered():
    band = simultaneous_band(_risk([0.3, 0.7]), _cov([1.0, 2.0]), alpha=0.1, z_hat=1.7)
    assert check_coverage(band, np.array([0.3, 0.7]))


def test_coverage_set_with_explicit_index():
    mcs = ModelConfidenceSet(members=(1, 2), method="naive", alpha=0.1, p=3)
    assert check_coverage(mcs, 2)
    assert not check_coverage(mcs, 0)


def test_coverage_set_with_target_vector_breaks_ties_low():
    mcs = ModelConfidenceSet(members=(1, 2), method="cvc", alpha=0.1, p=3)
    assert check_coverage(mcs, np.array([1.0, 0.0, 0.0]))  # r* = 1
    assert not check_coverage(mcs, np.array([0.0, 0.0, 0.0]))  # r* = 0
    with pytest.raises(DomainError):
        check_coverage(mcs, np.array([1.0, 0.0]))
