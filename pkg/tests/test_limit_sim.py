import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rcshape.datagen import get_scenario, sample_dgp
from rcshape.design_density import fit_design
from rcshape.geometry import normalize
from rcshape.kernels import KernelTable, TestPoint
from rcshape.limit_sim import (NoiseGrid, NoiseSpec, QuantileCache, QuantileResult, calibrated_quantiles,
                               calibrated_threshold, default_noise_grid, draw_x_hat, integrand_matrix, quantile_kappa,
                               refinement_check)
from rcshape.statistics import sigma_hat_family

from test_statistics import flat_design


@pytest.fixture(scope="module")
def design2():
    sample = normalize(sample_dgp(get_scenario("bimodal"), n=1000, seed=21), seed=22)
    return fit_design(sample)


@pytest.fixture(scope="module")
def design3():
    sample = normalize(sample_dgp(get_scenario("cauchy-intercept-null"), n=500, seed=23), seed=24)
    return fit_design(sample)


def test_zero_kernel_gives_zero(kt3):
    zero = KernelTable(3, kt3.grid, np.zeros_like(kt3.psi_values), 0.0, 0.0, 0.0, 0.0)
    design = flat_design(3)
    tp = TestPoint((0, 0, 0), 1.0, (1, 0, 0))
    grid = default_noise_grid([tp], design, zero)
    assert draw_x_hat(grid.draw(np.random.default_rng(0)), design, zero, tp) == 0.0


@given(st.integers(0, 10_000), st.integers(1, 20), st.integers(21, 40))
def test_noise_additivity(seed, k1, k2):
    grid = NoiseGrid.build(2, -3, 3, 0.1, 64)
    field = grid.draw(np.random.default_rng(seed))
    m1 = np.zeros(grid.shape, bool)
    m2 = np.zeros(grid.shape, bool)
    m1[:, :k1] = True
    m2[:, k2:] = True
    assert field.total(m1 | m2) == pytest.approx(field.total(m1) + field.total(m2), abs=1e-12)
    assert field.coarsen(2).total() == pytest.approx(field.total(), abs=1e-10)
    assert np.all(grid.measure > 0)


def test_variance_matches_flat_sigma(kt3):
    design = flat_design(3)
    tp = TestPoint((0.5, 0, 0), 1.0, (0, 0, 1))
    grid = default_noise_grid([tp], design, kt3)
    a = integrand_matrix(grid, design, kt3, [tp])[0]
    rng = np.random.default_rng(3)
    fields = [grid.draw(rng) for _ in range(2000)]
    draws = np.array([a @ f.values.ravel() for f in fields])
    sig = sigma_hat_family(design, kt3, [tp])[0]
    assert draws.var() == pytest.approx(sig**2, rel=0.1)
    assert draw_x_hat(fields[0], design, kt3, tp) == pytest.approx(draws[0])


def test_disjoint_supports_uncorrelated(kt3):
    design = flat_design(3)
    tps = [TestPoint((3, 0, 0), 0.5, (1, 0, 0)), TestPoint((-3, 0, 0), 0.5, (1, 0, 0))]
    grid = default_noise_grid(tps, design, kt3)
    A = integrand_matrix(grid, design, kt3, tps)
    rng = np.random.default_rng(4)
    X = np.array([A @ grid.draw(rng).values.ravel() for _ in range(2000)])
    assert abs(np.corrcoef(X.T)[0, 1]) < 0.05


def test_ito_isometry(design2, kt2):
    rng = np.random.default_rng(5)
    tps = [TestPoint(rng.uniform(-1, 1, 2), rng.uniform(0.5, 1.5), rng.normal(size=2)) for _ in range(5)]
    grid = default_noise_grid(tps, design2, kt2, NoiseSpec(128))
    A = integrand_matrix(grid, design2, kt2, tps)
    root = np.sqrt(grid.measure).ravel()
    X = (rng.standard_normal((5000, root.size)) * root) @ A.T
    exact = (A**2 * grid.measure.ravel()).sum(axis=1)
    assert np.allclose(X.var(axis=0), exact, rtol=0.07)


def test_under_coverage_rejected(kt3):
    design = flat_design(3)
    tp = TestPoint((5, 0, 0), 1.0, (1, 0, 0))
    grid = NoiseGrid.build(3, -1, 1, 0.1, 50)
    with pytest.raises(ValueError, match="does not cover"):
        integrand_matrix(grid, design, kt3, [tp])


def test_half_normal_quantile(kt2):
    design = flat_design(2)
    res = quantile_kappa([TestPoint((0, 0), 1.0, (1, 0))], design, kt2, 0.05, n_mc=2000, seed=1)
    assert res.kappa_alpha == pytest.approx(1.96, abs=0.1)


def test_quantile_monotone_and_deterministic(design3, kt3):
    tps = [TestPoint(v, 1.0, v) for v in np.vstack([np.eye(3), -np.eye(3)])]
    a = quantile_kappa(tps, design3, kt3, 0.05, n_mc=1000, seed=7)
    b = quantile_kappa(tps, design3, kt3, 0.05, n_mc=1000, seed=7)
    assert a.kappa_alpha == b.kappa_alpha and np.array_equal(a.draws, b.draws)
    assert a.quantile_at(0.5) <= a.kappa_alpha
    assert all(k > 0 for k in a.per_test)
    with pytest.raises(ValueError):
        quantile_kappa(tps, design3, kt3, 1.0)
    with pytest.raises(ValueError):
        quantile_kappa(tps, design3, kt3, 0.05, n_mc=50)


@pytest.mark.parametrize("fixture", ["design2", "design3"])
def test_gram_and_noise_agree(fixture, request, kt2, kt3):
    design = request.getfixturevalue(fixture)
    d = design.d
    kt = kt2 if d == 2 else kt3
    tps = [TestPoint(v, 1.0, v) for v in np.vstack([np.eye(d), -np.eye(d)])]
    g = quantile_kappa(tps, design, kt, 0.05, n_mc=2000, seed=1, method="gram")
    n = quantile_kappa(tps, design, kt, 0.05, n_mc=2000, seed=2, method="noise", noise=NoiseSpec(128))
    assert g.kappa_alpha == pytest.approx(n.kappa_alpha, rel=0.05)


def test_refinement_stability(design2, kt2):
    tps = [TestPoint(v, 1.0, v) for v in np.vstack([np.eye(2), -np.eye(2)])]
    coarse, fine = refinement_check(tps, design2, kt2, 0.05, n_mc=2000, seed=3, noise=NoiseSpec(128))
    assert fine == pytest.approx(coarse, rel=0.03)


def test_calibrated_threshold_boundaries():
    pool = np.array([3.0, -1.0, 2.0, 0.5])
    assert calibrated_threshold(pool, 1.0) == -1.0
    assert calibrated_threshold(pool, 0.25) == 2.0
    with pytest.raises(ValueError):
        calibrated_threshold(pool, 0.0)


def test_calibrated_quantiles_guards():
    spec = get_scenario("cauchy-intercept-null")
    tps = [TestPoint((1, 0, 0), 1.0, (1, 0, 0))]
    with pytest.raises(ValueError, match="200"):
        calibrated_quantiles(tps, spec, 0.05, n_reps=100)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res = calibrated_quantiles(tps, spec, 0.01, n_reps=200, n=100)
    assert any("unstable" in str(w.message) for w in caught)
    assert res.mode == "calibrated" and res.n_mc == 200
    th = res.thresholds([2.0, 4.0], 100)
    assert th == pytest.approx([2.0 * res.kappa_alpha / 10, 4.0 * res.kappa_alpha / 10])


def test_result_round_trip_and_cache(tmp_path, design3, kt3):
    tps = [TestPoint((1, 0, 0), 1.0, (1, 0, 0))]
    res = quantile_kappa(tps, design3, kt3, 0.05, n_mc=200, seed=0)
    back = QuantileResult.from_dict(res.to_dict())
    assert back.kappa_alpha == res.kappa_alpha and back.per_test == res.per_test
    cache = QuantileCache(tmp_path / "q.json")
    key = QuantileCache.key(tps, design3.fingerprint(), 0.05, 200, 0)
    assert cache.get(key) is None
    cache.put(key, res)
    assert cache.get(key).kappa_alpha == res.kappa_alpha
    assert key != QuantileCache.key(tps, design3.fingerprint(), 0.1, 200, 0)


def test_per_test_thresholds_formula(design3, kt3):
    tps = [TestPoint((0.5, 0, 0), 0.5, (1, 0, 0))]
    res = quantile_kappa(tps, design3, kt3, 0.05, n_mc=200, seed=0)
    a = math.sqrt(8 * math.log(2))
    b = math.sqrt(math.log(math.e * 2)) / math.log(math.log(math.exp(math.e) * 2))
    expected = res.sigma[0] / math.sqrt(design3.n) * (res.kappa_alpha / b + a)
    assert res.per_test[0] == pytest.approx(expected)
