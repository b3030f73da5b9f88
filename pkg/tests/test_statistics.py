import math
from dataclasses import dataclass

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from rcshape.datagen import get_scenario, sample_dgp
from rcshape.design_density import DesignConfig, FittedDesign, fit_design
from rcshape.geometry import ProjectedSample, normalize
from rcshape.kernels import TestPoint, build_kernel_table, sphere_volume
from rcshape.statistics import (QuadSpec, StatResult, alpha_beta, calibration_terms, evaluate_family, sigma_hat,
                                sigma_hat_family, t_hat)


@dataclass(eq=False)
class FlatDesign(FittedDesign):
    """Plug-ins with f_{S,Theta} / f_Theta^2 == 1."""

    def f_theta(self, theta):
        return np.ones(len(np.atleast_2d(theta)))

    def joint_at(self, s, resolution=None):
        return np.ones_like(s)

    def joint_on_grid(self, nodes, grid):
        return np.ones((len(nodes), len(grid)))


def flat_design(d, n=1000, res=None):
    theta = np.eye(d)[:1]
    return FlatDesign(np.zeros(1), theta, n, 0.5, 0.5, False, sphere_resolution=res or {2: 256, 3: 500}[d])


def known_uniform(d):
    return lambda th: np.full(len(np.atleast_2d(th)), 1 / sphere_volume(d - 1))


def one_sample(S, Theta):
    S = np.atleast_1d(np.asarray(S, float))
    return ProjectedSample(S, np.atleast_2d(Theta), np.ones(S.size), S.size)


def test_t_hat_zero_outside_support(kt3):
    design = flat_design(3)
    sample = one_sample([5.0, -4.0], [[1.0, 0, 0], [0, 1.0, 0]])
    assert t_hat(sample, design, kt3, TestPoint((0, 0, 0), 1.0, (1, 0, 0))) == 0.0


def test_t_hat_single_observation(kt3):
    design = fit_design(one_sample(np.zeros(60), np.tile([0, 0, 1.0], (60, 1))),
                        DesignConfig(known_ftheta=known_uniform(3)))
    th = np.array([0.6, 0.0, 0.8])
    sample = one_sample([0.3], th)
    tp = TestPoint((0.1, -0.2, 0.4), 0.5, (0, 0, 1))
    u = (0.3 - th @ np.array(tp.t)) / 0.5
    expected = (1 / math.sqrt(0.5)) * 0.8 * 4 * math.pi * float(kt3(u))
    assert t_hat(sample, design, kt3, tp) == pytest.approx(expected, rel=1e-12)


def test_sigma_flat_d3(kt3):
    design = flat_design(3)
    values = [sigma_hat(design, kt3, TestPoint((0.2, 0, 0), 0.7, v)) ** 2
              for v in [(1, 0, 0), (0, 1, 0), (0, 0, 1), (1, 1, 1), (-0.3, 0.5, 0.2)]]
    assert values[0] == pytest.approx(4 * math.pi / 3 * kt3.l2_norm_sq, rel=1e-3)
    assert np.ptp(np.sqrt(values)) <= 1e-6


def test_sigma_flat_d2(kt2):
    design = flat_design(2)
    val = sigma_hat(design, kt2, TestPoint((0.0, 0.0), 1.0, (1, 0))) ** 2
    assert val == pytest.approx(sphere_volume(1) / 2 * kt2.l2_norm_sq, rel=1e-3)


@pytest.mark.parametrize("d", [2, 3])
def test_sigma_refinement(d):
    name = "bimodal" if d == 2 else "uniform-design-power"
    sample = normalize(sample_dgp(get_scenario(name), n=2000, seed=5), seed=6)
    design = fit_design(sample)
    kt = build_kernel_table(d)
    tps = [TestPoint(np.eye(d)[0], 1.0, np.eye(d)[0]), TestPoint(-0.5 * np.eye(d)[1], 0.5, -np.eye(d)[1])]
    coarse = sigma_hat_family(design, kt, tps)
    fine = sigma_hat_family(design, kt, tps, QuadSpec(design.sphere_resolution).refined())
    assert np.all(coarse > 0)
    assert np.max(np.abs(fine / coarse - 1)) < 1e-3


def test_sigma_degenerate_reported(kt3):
    design = flat_design(3)
    design.joint_at = lambda s, resolution=None: np.zeros_like(s)
    with pytest.raises(FloatingPointError, match="degenerate"):
        sigma_hat(design, kt3, TestPoint((0, 0, 0), 1.0, (1, 0, 0)))


def test_alpha_beta_examples():
    assert alpha_beta(1.0, 3) == (0.0, 1.0)
    assert alpha_beta(math.exp(-1), 3)[0] == pytest.approx(math.sqrt(8))
    hs = np.linspace(0.01, 1, 100)
    betas = [alpha_beta(h, 2)[1] for h in hs]
    assert np.all(np.diff(betas) < 0)
    with pytest.raises(ValueError):
        alpha_beta(1.5, 2)
    assert calibration_terms(2.5, 2) == alpha_beta(1.0, 2)


@given(arrays(float, (30, 2), elements=st.floats(-1, 1)), arrays(float, 30, elements=st.floats(-2, 2)),
       st.floats(0.2, 2.0), st.floats(0, 2 * math.pi), arrays(float, 2, elements=st.floats(-1, 1)))
def test_t_hat_antisymmetry_and_equivariance(Th, S, h, ang, delta):
    Th = Th + np.array([1e-3, 0])
    Th /= np.linalg.norm(Th, axis=1)[:, None]
    kt = build_kernel_table(2)
    design = flat_design(2)
    v = (math.cos(ang), math.sin(ang))
    sample = one_sample(S, Th)
    tp, tm = TestPoint((0.1, -0.3), h, v), TestPoint((0.1, -0.3), h, tuple(-x for x in v))
    assert t_hat(sample, design, kt, tm) == -t_hat(sample, design, kt, tp)
    shifted = one_sample(S + Th @ delta, Th)
    tq = TestPoint(np.array(tp.t) + delta, h, v)
    assert t_hat(shifted, design, kt, tq) == pytest.approx(t_hat(sample, design, kt, tp), rel=1e-9, abs=1e-12)


def test_symmetric_null_has_zero_mean(kt2):
    spec = get_scenario("gauss-circle")
    cfg = DesignConfig(known_ftheta=known_uniform(2))
    tp = TestPoint((0.0, 0.0), 0.5, (1, 0))
    vals = []
    for r in range(500):
        sample = normalize(sample_dgp(spec, n=1000, seed=r), seed=r)
        design = fit_design(sample, cfg)
        vals.append(t_hat(sample.statistic_half(), design, kt2, tp))
    vals = np.array(vals)
    assert abs(vals.mean()) < 4 * vals.std(ddof=1) / math.sqrt(vals.size)


def test_evaluate_family_and_standardized(kt2):
    sample = normalize(sample_dgp(get_scenario("bimodal"), n=500, seed=1), seed=1)
    design = fit_design(sample)
    tps = [TestPoint((1.0, 0.0), 1.0, (1, 0)), TestPoint((0.0, 1.0), 1.0, (0, 1))]
    res = evaluate_family(sample.statistic_half(), design, kt2, tps)
    for r in res:
        assert r.sigma_hat > 0 and np.isfinite(r.standardized)
        assert r.standardized == pytest.approx(math.sqrt(500) * r.T_hat / r.sigma_hat)
    with pytest.raises(ValueError):
        StatResult(tps[0], 0.0, 0.0, 10)
