import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rcshape.datagen import BetaSpec, DesignSpec, DGPSpec, get_scenario, sample_design, sample_dgp
from rcshape.design_density import (DesignConfig, cauchy_ftheta, default_bandwidths, epanechnikov, fit_design,
                                    ftheta_from_fx, hemisphere_normalizer_C, joint_kde, normalizer_C, spherical_kde,
                                    uniform_box_ftheta)
from rcshape.geometry import ProjectedSample, normalize, sphere_grid, sphere_quadrature


def uniform_sphere(n, d, seed):
    z = np.random.default_rng(seed).standard_normal((n, d))
    return z / np.linalg.norm(z, axis=1)[:, None]


def as_sample(S, Theta, intercept=False):
    return ProjectedSample(np.asarray(S, float), Theta, np.ones(len(Theta)), len(Theta), intercept)


def circle_integral(h, theta_angle, m=2_000_000):
    a = 2 * np.pi * np.arange(m) / m
    return np.sum(epanechnikov((1 - np.cos(a - theta_angle)) / h**2)) * 2 * np.pi / m


def test_degenerate_sample():
    theta = np.array([0.0, 0.6, 0.8])
    h = 0.3
    val = spherical_kde(np.tile(theta, (25, 1)), h, theta)
    assert val[0] == pytest.approx(normalizer_C(h, 3) * 0.75 / h**2)


def test_uniform_s2_recovered():
    Theta = uniform_sphere(10_000, 3, 0)
    h, _ = default_bandwidths(10_000, 3)
    est = spherical_kde(Theta, h, sphere_grid(3, 200))
    assert np.max(np.abs(est - 1 / (4 * np.pi))) <= 0.15 / (4 * np.pi)


def test_compact_support():
    Theta = uniform_sphere(500, 3, 1)
    Theta[:, 2] = np.abs(Theta[:, 2])
    assert spherical_kde(Theta, 0.2, [[0.0, 0.0, -1.0]])[0] == 0.0
    assert joint_kde(np.zeros(500), Theta, 0.2, [0.0], [[0.0, 0.0, -1.0]])[0] == 0.0


def test_normalizer_matches_dense_sum_and_is_rotation_invariant():
    h = 0.3
    rng = np.random.default_rng(2)
    ref = h / normalizer_C(h, 2)
    for ang in rng.uniform(0, 2 * np.pi, 5):
        assert circle_integral(h, ang) == pytest.approx(ref, rel=1e-8)


def test_normalizer_limit():
    for d in (2, 3):
        for h in (0.05, 0.02, 0.01):
            assert normalizer_C(h / 2, d) / normalizer_C(h, d) == pytest.approx(1.0, abs=0.1)
    assert normalizer_C(0.01, 3) == pytest.approx(1 / np.pi, rel=1e-3)


def test_hemisphere_normalizer_at_equator_doubles():
    h = 0.3
    assert hemisphere_normalizer_C(h, 3, 0.0) == pytest.approx(2 * normalizer_C(h, 3), rel=1e-6)
    assert hemisphere_normalizer_C(h, 3, 1.0) == pytest.approx(normalizer_C(h, 3), rel=1e-6)


def test_joint_mass_and_marginal():
    n = 10_000
    Theta = uniform_sphere(n, 2, 3)
    S = np.random.default_rng(4).normal(0, 1, n)
    design = fit_design(as_sample(S, Theta), DesignConfig(h_star=0.3, h_plus=0.3, cutoff=False))
    nodes, w = design.sphere_nodes()
    lat = design.joint_lattice()
    step = design.lattice_step
    assert np.sum(w[:, None] * lat) * step == pytest.approx(1.0, abs=0.03)
    rng = np.random.default_rng(5)
    ang = rng.uniform(0, 2 * np.pi, 20)
    th = np.column_stack([np.cos(ang), np.sin(ang)])
    marg = design.joint_on_grid(th, design.s_lattice).sum(axis=1) * step
    assert np.allclose(marg, design.f_theta_hat(th), rtol=0.1)


def test_floors():
    spec = get_scenario("normal-design-null")
    sample = normalize(sample_dgp(spec, n=300, seed=1), seed=2)
    design = fit_design(sample)
    grid = sphere_grid(3, 2000)
    assert np.min(design.f_theta(grid)) >= 1 / math.log(300)
    low = design.f_theta_hat(grid) < design.floor_theta
    assert low.any()
    assert np.all(design.f_theta(grid)[low] == 1 / math.log(300))
    s = np.linspace(-20, 20, 7)
    assert np.min(design.f_joint(s, grid[:7])) >= 1 / math.log(300) ** 2


def test_intercept_symmetry_and_flatness():
    spec = get_scenario("cauchy-intercept-null")
    sample = normalize(sample_dgp(spec, n=5000, seed=11), seed=12)
    design = fit_design(sample)
    grid = sphere_grid(3, 200)
    assert np.max(np.abs(design.f_theta(grid) - design.f_theta(-grid))) <= 1e-12
    assert np.max(np.abs(design.f_theta_hat(grid) - design.f_theta_hat(-grid))) <= 1e-12
    assert design.f_theta(grid).max() / design.f_theta(grid).min() <= 1.5
    raw = design.f_theta_hat(grid)
    assert raw.max() / raw.min() <= 1.5


def test_known_mode_is_exact():
    sample = normalize(sample_dgp(get_scenario("cauchy-intercept-null"), n=100, seed=1), seed=1)
    design = fit_design(sample, DesignConfig(known_ftheta=cauchy_ftheta))
    grid = sphere_grid(3, 50)
    assert np.array_equal(design.f_theta(grid), cauchy_ftheta(grid))


def test_fit_rejects_small_samples():
    with pytest.raises(ValueError, match="at least 50"):
        fit_design(as_sample(np.zeros(20), uniform_sphere(20, 2, 0)))


def test_cauchy_standard_is_flat():
    assert np.allclose(cauchy_ftheta(sphere_grid(3, 100)), 1 / (4 * np.pi))
    with pytest.raises(ValueError):
        cauchy_ftheta(sphere_grid(3, 5), Sigma=[[1, 2], [2, 1]])


@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(0.3, 2), st.floats(-0.5, 0.5))
def test_cauchy_integrates_to_one(m1, m2, s, rho):
    Sigma = np.array([[s, rho * math.sqrt(s)], [rho * math.sqrt(s), 1.0]])
    nodes, w = sphere_quadrature(3, 20_000)
    assert np.sum(w * cauchy_ftheta(nodes, (m1, m2), Sigma)) == pytest.approx(1.0, abs=1e-3)


def test_cauchy_matches_histogram():
    # intercept model d=2: Theta = zeta (1, X) / |(1, X)| with X standard Cauchy
    rng = np.random.default_rng(7)
    n = 100_000
    X = sample_design(DesignSpec("cauchy", mean=(0.0,), cov=np.eye(1)), n, 1, rng)[:, 0]
    zeta = rng.choice([-1.0, 1.0], n)
    ang = np.arctan2(zeta * X, zeta)
    counts, edges = np.histogram(ang, bins=60, range=(-np.pi, np.pi))
    hist = counts / (n * np.diff(edges))
    mid = 0.5 * (edges[1:] + edges[:-1])
    exact = cauchy_ftheta(np.column_stack([np.cos(mid), np.sin(mid)]))
    assert np.max(np.abs(hist - exact)) <= 0.1 * exact.max()


def test_ftheta_from_fx_examples():
    cauchy1 = lambda x: 1 / (np.pi * (1 + x[0] ** 2))
    th = np.array([[1 / math.sqrt(2), 1 / math.sqrt(2)]])
    assert ftheta_from_fx(cauchy1, th, intercept=True)[0] == pytest.approx(1 / (2 * np.pi))
    grid = sphere_grid(2, 40)
    assert np.allclose(ftheta_from_fx(cauchy1, grid[np.abs(grid[:, 0]) > 1e-9], intercept=True),
                       cauchy_ftheta(grid[np.abs(grid[:, 0]) > 1e-9]), atol=1e-6)
    box = lambda x: float(np.all(np.abs(x) <= 5)) / 10**3
    vals = ftheta_from_fx(box, sphere_grid(3, 30), r_max=5 * math.sqrt(3))
    assert np.all(vals > 0)
    assert np.allclose(vals, uniform_box_ftheta(sphere_grid(3, 30)), rtol=1e-6)


def test_ftheta_from_fx_reports_nonconvergence():
    heavy = lambda x: 1.0 / (1.0 + np.linalg.norm(x)) ** 1.5
    with pytest.raises(RuntimeError, match="did not converge"):
        ftheta_from_fx(heavy, [[1.0, 0.0, 0.0]])


def test_cauchy_estimate_improves_with_n():
    errs = []
    spec = get_scenario("cauchy-intercept-null")
    grid = sphere_grid(3, 200)
    for n in (1_000, 10_000, 100_000):
        design = fit_design(normalize(sample_dgp(spec, n=n, seed=3), seed=4))
        errs.append(np.max(np.abs(design.f_theta_hat(grid) - 1 / (4 * np.pi))))
    assert errs[0] > errs[1] > errs[2]


def test_diagnostics_flag_uncovered_directions():
    Theta = uniform_sphere(400, 2, 9)
    Theta = Theta[Theta[:, 0] > 0.2]
    design = fit_design(as_sample(np.zeros(len(Theta)), Theta), DesignConfig(h_star=0.2))
    diag = design.diagnostics()
    assert diag["directions_without_data"] > 0 and not design.positivity_ok()
    assert set(diag) >= {"floor_theta", "ftheta_hat_mass", "fraction_below_floor"}
