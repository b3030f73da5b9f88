import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rcshape.datagen import BetaSpec, DesignSpec, DGPSpec, get_scenario, sample_dgp
from rcshape.design_density import fit_design
from rcshape.geometry import RawDataset, normalize
from rcshape.kernels import TestPoint
from rcshape.testing import (HypothesisFamily, QuantileSettings, TestOutcome, TestRecord, combine_scales, decide,
                             detection_rates, global_mode_scan, mode_family, mode_test, monotonicity_family,
                             monotonicity_map, multiscale_mode_test, ols_baseline, run_family)


@pytest.fixture(scope="module")
def bimodal():
    sample = normalize(sample_dgp(get_scenario("bimodal"), n=2000, seed=31), seed=32)
    return sample, fit_design(sample)


def record(h, v, minus):
    return TestRecord(TestPoint((0.0, 0.0), h, v), 0.0, 1.0, 1.0, False, minus)


def test_decide_examples():
    # c_2 > 0, c_3 < 0
    assert decide(2.0, 1.0, 2) == (False, True)
    assert decide(-2.0, 1.0, 2) == (True, False)
    assert decide(2.0, 1.0, 3) == (True, False)
    assert decide(0.5, 1.0, 3) == (False, False)
    with pytest.raises(ValueError):
        decide(1.0, 0.0, 2)


@given(st.floats(-1e3, 1e3), st.floats(1e-3, 1e3), st.sampled_from([2, 3]))
def test_decision_antisymmetry(T, kappa, d):
    plus, minus = decide(T, kappa, d)
    assert not (plus and minus)
    assert decide(-T, kappa, d) == (minus, plus)


def test_rejections_grow_with_alpha(bimodal, kt2):
    sample, design = bimodal
    fam = mode_family((1.0, 0.0), [0.5, 1.0], offset=1.0)
    q = QuantileSettings(n_mc=1000, seed=3)
    lo, _ = run_family(sample, design, kt2, fam, 0.01, q)
    hi, _ = run_family(sample, design, kt2, fam, 0.2, q)
    for a, b in zip(lo, hi):
        assert b.kappa <= a.kappa
        assert b.reject_minus or not a.reject_minus
        assert b.reject_plus or not a.reject_plus
    with pytest.raises(ValueError):
        run_family(sample, design, kt2, fam, 1.5, q)


def test_combine_scales_rules():
    e1, e2 = (1.0, 0.0), (0.0, 1.0)
    recs = [record(0.5, e1, True), record(0.5, e2, False), record(1.0, e1, False), record(1.0, e2, True)]
    assert combine_scales(recs, [0.5, 1.0], "cover")
    assert not combine_scales(recs, [0.5, 1.0], "any")
    assert not combine_scales(recs, [0.5, 1.0], "all")
    assert not combine_scales(recs, [0.5], "cover")
    full = [record(0.5, e1, True), record(0.5, e2, True), record(1.0, e1, False), record(1.0, e2, True)]
    assert combine_scales(full, [0.5, 1.0], "any") and not combine_scales(full, [0.5, 1.0], "all")
    with pytest.raises(ValueError, match="not in the family"):
        combine_scales(recs, [2.0])
    with pytest.raises(ValueError, match="unknown"):
        combine_scales(recs, [0.5], "some")


@given(st.lists(st.floats(0.1, 1.0), min_size=1, max_size=3, unique=True), st.floats(1.0, 3.0))
def test_mode_family_respects_region(scales, offset):
    b0 = np.array([0.3, -0.2])
    reach = max(scales) * (offset + 1) + 1e-9
    region = (b0 - reach, b0 + reach)
    fam = mode_family(b0, scales, offset=offset, region=region)
    assert len(fam) == 4 * len(scales)
    assert all(tp.in_region(*region) for tp in fam.points)
    with pytest.raises(ValueError, match="violates"):
        mode_family(b0, scales, offset=offset, region=(b0 - 0.5 * reach, b0 + 0.5 * reach))


def test_family_validation():
    tp = TestPoint((0.0, 0.0), 1.0, (1.0, 0.0))
    with pytest.raises(ValueError):
        HypothesisFamily([tp], ["-", "+"])
    with pytest.raises(ValueError):
        HypothesisFamily([], [])
    with pytest.raises(ValueError):
        HypothesisFamily([tp], ["+"], "mode-at-point")
    assert len(HypothesisFamily([tp], ["+"])) == 1


def test_mode_tests_on_bimodal(bimodal, kt2):
    sample, design = bimodal
    q = QuantileSettings(n_mc=1000, seed=1)
    single = mode_test((1.0, 0.0), [0.5], sample, design, kt2, quantiles=q)
    assert single.procedure == "mode-at-point" and len(single.records) == 4
    multi = multiscale_mode_test((1.0, 0.0), [0.5, 1.0], sample, design, kt2, quantiles=q, rule="all")
    assert set(multi.verdict["per_scale"]) == {"0.5", "1.0"}
    assert multi.verdict["mode_detected"] == all(multi.verdict["per_scale"].values())
    with pytest.raises(ValueError):
        multiscale_mode_test((1.0, 0.0), [0.5], sample, design, kt2, quantiles=q)


def test_global_scan(bimodal, kt2):
    sample, design = bimodal
    region = ((-3.0, -3.0), (3.0, 3.0))
    out = global_mode_scan(region, [1.0], sample, design, kt2, quantiles=QuantileSettings(n_mc=500))
    assert out.verdict["n_vertices"] == 9
    # neighbouring vertices meet at a location but test opposite directions
    assert len(out.records) == 9 * 4
    for c in out.verdict["candidates"]:
        assert c["h"] == 1.0 and len(c["b0"]) == 2
    with pytest.raises(ValueError, match="admits no vertex"):
        global_mode_scan(((-1.0, -1.0), (1.0, 1.0)), [1.0], sample, design, kt2)


def test_monotonicity_family_and_map(bimodal, kt2, tmp_path):
    fam = monotonicity_family(((-1.0, -1.0), (1.0, 1.0)), h0=0.5)
    assert len(fam) == 2 * 2 * 4
    with pytest.raises(ValueError, match="d = 2"):
        monotonicity_family(((0, 0, 0), (1, 1, 1)))
    with pytest.raises(ValueError, match="admits no location"):
        monotonicity_family(((0.0, 0.0), (0.5, 0.5)), h0=0.5)
    sample, design = bimodal
    out = monotonicity_map(sample, design, kt2, 0.5, ((-2.0, -2.0), (2.0, 2.0)),
                           quantiles=QuantileSettings(n_mc=500))
    assert out.verdict["n_arrows"] == len(out.arrows)
    path = tmp_path / "arrows.csv"
    out.write_arrows_csv(path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["t_x", "t_y", "v_x", "v_y"] and len(rows) == len(out.arrows) + 1


def test_outcome_json_schema(bimodal, kt2):
    sample, design = bimodal
    out = mode_test((1.0, 0.0), [1.0], sample, design, kt2, quantiles=QuantileSettings(n_mc=300))
    doc = json.loads(out.to_json())
    assert set(doc) == {"procedure", "alpha", "family", "verdict", "seed", "config_hash", "quantile"}
    assert set(doc["family"][0]) == {"t", "h", "v", "T_hat", "sigma_hat", "kappa", "reject_plus", "reject_minus"}
    assert isinstance(doc["verdict"]["mode_detected"], bool)
    empty = TestOutcome("x", 0.05, [], {})
    assert json.loads(empty.to_json())["quantile"] is None


def test_ols_exact_for_deterministic_coefficients():
    b = (1.5, -0.5, 2.0)
    spec = DGPSpec(BetaSpec("point", point=b), DesignSpec("normal", mean=(0, 0), cov=np.eye(2)), 3,
                   intercept=True, n=300)
    res = ols_baseline(sample_dgp(spec, seed=4))
    assert np.allclose(res.coef, b, atol=1e-10)
    assert np.all(res.se < 1e-8)
    assert res.to_dict()["covariance"] == "HC0"


def test_ols_rank_deficiency():
    X = np.column_stack([np.ones(10), np.ones(10)])
    with pytest.raises(np.linalg.LinAlgError, match="rank"):
        ols_baseline(RawDataset(X, np.arange(10.0)))


def test_detection_rates_extremes():
    spec = get_scenario("uniform-design-power")
    tps = [TestPoint((1.5, 0.0, 0.0), 0.5, (1.0, 0.0, 0.0))]
    never = detection_rates(spec, 300, 4, 1, tps, threshold=1e6)
    always = detection_rates(spec, 300, 4, 1, tps, threshold=-1e6)
    assert never["rate"] == 0.0 and always["rate"] == 1.0 and always["hits"] == 4
    assert math.isclose(never["se"], 0.0)
