"""Seeded synthetic data generators and RNG substream derivation."""

import numpy as np
import pytest

from cvconf.datamodel import DomainError
from cvconf.simgen import (
    SeriesGen,
    SparseLinearGen,
    derive_substream,
    gen_series,
    gen_sparse_linear,
)


def test_sparse_linear_noise_variance_rule():
    cfg = SparseLinearGen(n=50, d=20, s=5, nu=1000.0, seed=3)
    _, truth = gen_sparse_linear(cfg)
    assert truth.noise_var == pytest.approx(0.005)
    assert truth.beta.tolist() == [1.0] * 5 + [0.0] * 15


def test_sparse_linear_infinite_nu_is_noiseless():
    cfg = SparseLinearGen(n=40, d=4, s=2, nu=np.inf, seed=1)
    ds, truth = gen_sparse_linear(cfg)
    assert truth.noise_var == 0.0
    np.testing.assert_array_equal(ds.response, ds.features @ truth.beta)


def test_sparse_linear_moments():
    # column means shrink like 1/sqrt(n); Var(Y) = s + sigma^2
    cfg = SparseLinearGen(n=200_000, d=4, s=2, nu=10.0, seed=11)
    ds, truth = gen_sparse_linear(cfg)
    assert np.abs(ds.features.mean(axis=0)).max() < 5 / np.sqrt(cfg.n)
    y = ds.response
    target = cfg.s + truth.noise_var
    centred_sq = (y - y.mean()) ** 2
    se = centred_sq.std() / np.sqrt(cfg.n)
    assert abs(centred_sq.mean() - target) < 5 * se


def test_sparse_linear_is_pure_and_ignores_global_state():
    cfg = SparseLinearGen(n=30, d=3, s=1, nu=5.0, seed=9)
    ds1, _ = gen_sparse_linear(cfg)
    np.random.seed(0)
    np.random.normal(size=100)
    ds2, _ = gen_sparse_linear(cfg)
    assert np.array_equal(ds1.features, ds2.features)
    assert np.array_equal(ds1.response, ds2.response)


def test_sparse_linear_domain_checks():
    with pytest.raises(DomainError):
        gen_sparse_linear(SparseLinearGen(n=10, d=3, s=4, nu=1.0, seed=0))
    with pytest.raises(DomainError):
        gen_sparse_linear(SparseLinearGen(n=10, d=3, s=0, nu=1.0, seed=0))
    with pytest.raises(DomainError):
        gen_sparse_linear(SparseLinearGen(n=10, d=3, s=2, nu=0.0, seed=0))


def test_series_coefficients_exact():
    cfg = SeriesGen(n=20, j_max=8, decay=1.0, noise_sd=0.5, seed=2)
    with pytest.warns(UserWarning):
        _, truth = gen_series(cfg)
    assert truth.beta[0] == 1.0
    # coefficient j is j ** (-(1 + decay) / 2), so the 4-vs-2 ratio halves once
    assert truth.beta[3] / truth.beta[1] == pytest.approx(2.0 ** (-(1 + cfg.decay) / 2))
    expected = np.array([float(j) ** (-(1 + cfg.decay) / 2) for j in range(1, 9)])
    np.testing.assert_allclose(truth.beta, expected, rtol=0, atol=0)


def test_series_response_variance():
    cfg = SeriesGen(n=150_000, j_max=12, decay=2.0, noise_sd=0.7, seed=5)
    ds, truth = gen_series(cfg)
    target = float(truth.beta @ truth.beta) + cfg.noise_sd**2
    y = ds.response
    centred_sq = (y - y.mean()) ** 2
    se = centred_sq.std() / np.sqrt(cfg.n)
    assert abs(centred_sq.mean() - target) < 5 * se


def test_series_tail_energy_report():
    # slow decay with tiny j_max leaves > 1% of the energy in the tail
    small = SeriesGen(n=10, j_max=2, decay=0.1, noise_sd=0.1, seed=0)
    with pytest.warns(UserWarning):
        _, truth = gen_series(small)
    assert truth.tail_energy_ratio >= 0.01

    big = SeriesGen(n=10, j_max=64, decay=2.0, noise_sd=0.1, seed=0)
    _, truth2 = gen_series(big)
    assert truth2.tail_energy_ratio < 0.01


def test_derive_substream_deterministic_and_distinct():
    a = derive_substream(42, "unit", 1, 2).standard_normal(8)
    b = derive_substream(42, "unit", 1, 2).standard_normal(8)
    c = derive_substream(42, "unit", 1, 3).standard_normal(8)
    d = derive_substream(42, "other", 1, 2).standard_normal(8)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d)


def test_derive_substream_cross_correlation():
    n = 100_000
    x = derive_substream(7, "corr", 0).standard_normal(n)
    y = derive_substream(7, "corr", 1).standard_normal(n)
    r = float(np.corrcoef(x, y)[0, 1])
    assert abs(r) < 4 / np.sqrt(n)
