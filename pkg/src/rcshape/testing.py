"""Test families, decision rules and the mode / monotonicity procedures."""

from __future__ import annotations

import csv
import hashlib
import itertools
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .datagen import DGPSpec
from .design_density import DesignConfig, FittedDesign
from .geometry import ProjectedSample, RawDataset, axis_directions, mode_scan_testpoints, normalize
from .kernels import KernelTable, TestPoint, build_kernel_table, c_d
from .limit_sim import (NoiseSpec, QuantileCache, QuantileResult, quantile_kappa, replicate_statistics,
                        simulate_replicate)
from .runtime import child_seed, parallel_map
from .statistics import QuadSpec, StatResult, evaluate_family

__all__ = [
    "HypothesisFamily",
    "TestRecord",
    "TestOutcome",
    "QuantileSettings",
    "OLSResult",
    "decide",
    "run_family",
    "mode_family",
    "mode_test",
    "multiscale_mode_test",
    "combine_scales",
    "global_mode_scan",
    "monotonicity_map",
    "monotonicity_family",
    "ols_baseline",
    "detection_rates",
    "theoretical_replicates",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class HypothesisFamily:
    """Test points with the side tested at each (``"-"`` for H_{0,-}, ``"+"`` for H_{0,+})."""

    points: tuple
    sides: tuple
    procedure: str = "single"
    region: tuple | None = None

    __test__ = False

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))
        object.__setattr__(self, "sides", tuple(self.sides))
        if len(self.points) != len(self.sides):
            raise ValueError("one side per test point is required")
        if not self.points:
            raise ValueError("empty test family")
        if any(s not in "+-" or len(s) != 1 for s in self.sides):
            raise ValueError("sides must be '+' or '-'")
        if self.procedure in ("mode-at-point", "global-scan", "monotonicity-map") and set(self.sides) != {"-"}:
            raise ValueError(f"procedure {self.procedure!r} tests H_0,- at every point")
        if self.region is not None:
            a1, a2 = self.region
            bad = [tp for tp in self.points if not tp.in_region(a1, a2)]
            if bad:
                raise ValueError(f"test point t={bad[0].t}, h={bad[0].h} violates a1 + h <= t <= a2 - h")

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class TestRecord:
    tp: TestPoint
    T_hat: float
    sigma_hat: float
    kappa: float
    reject_plus: bool
    reject_minus: bool

    __test__ = False

    def to_dict(self) -> dict:
        return {"t": list(self.tp.t), "h": self.tp.h, "v": list(self.tp.v), "T_hat": self.T_hat,
                "sigma_hat": self.sigma_hat, "kappa": self.kappa, "reject_plus": self.reject_plus,
                "reject_minus": self.reject_minus}


@dataclass
class TestOutcome:
    procedure: str
    alpha: float
    records: list
    verdict: dict
    quantile: QuantileResult | None = None
    seed: int | None = None
    config_hash: str = ""

    __test__ = False

    def to_dict(self) -> dict:
        return {"procedure": self.procedure, "alpha": self.alpha,
                "family": [r.to_dict() for r in self.records], "verdict": self.verdict,
                "seed": self.seed, "config_hash": self.config_hash,
                "quantile": self.quantile.to_dict() if self.quantile else None}

    def to_json(self, path=None) -> str:
        text = json.dumps(_jsonable(self.to_dict()), indent=2, sort_keys=True) + "\n"
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    @property
    def arrows(self) -> list[tuple[tuple, tuple]]:
        """``(t, v)`` for every rejected H_{0,-}: a certified decrease of the density along ``v``."""
        return [(r.tp.t, r.tp.v) for r in self.records if r.reject_minus]

    def write_arrows_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t_x", "t_y", "v_x", "v_y"])
            for t, v in self.arrows:
                w.writerow([repr(float(t[0])), repr(float(t[1])), repr(float(v[0])), repr(float(v[1]))])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


@dataclass(frozen=True)
class QuantileSettings:
    """How per-test thresholds are obtained.

    ``theoretical``: Monte Carlo quantile of the Gaussian limit (``n_mc``
    draws, ``method`` ``"gram"`` or ``"noise"``).  ``calibrated``: a
    threshold from ``calibrated_quantiles`` passed as ``calibration``.
    """

    mode: str = "theoretical"
    n_mc: int = 5000
    seed: int = 0
    method: str = "gram"
    noise: NoiseSpec = NoiseSpec()
    calibration: QuantileResult | None = None
    cache_path: str | None = None

    def __post_init__(self):
        if self.mode not in ("theoretical", "calibrated"):
            raise ValueError(f"quantile mode must be 'theoretical' or 'calibrated', got {self.mode!r}")
        if self.mode == "calibrated" and self.calibration is None:
            raise ValueError("calibrated quantiles require a calibration result")


def decide(stat: StatResult | float, kappa: float, d: int) -> tuple[bool, bool]:
    """``(reject_plus, reject_minus)``: ``sgn(c_d) T < -kappa`` and ``sgn(c_d) T > kappa``."""
    if not kappa > 0:
        raise ValueError(f"kappa must be positive, got {kappa}")
    T = stat.T_hat if isinstance(stat, StatResult) else float(stat)
    signed = math.copysign(1.0, c_d(d)) * T
    return bool(signed < -kappa), bool(signed > kappa)


def _thresholds(tps, stats: list[StatResult], design: FittedDesign, kt: KernelTable, alpha: float,
                q: QuantileSettings, quad: QuadSpec) -> tuple[np.ndarray, QuantileResult]:
    sig = np.array([s.sigma_hat for s in stats])
    n = stats[0].n
    if q.mode == "calibrated":
        res = q.calibration
        return res.thresholds(sig, n), res
    cache = QuantileCache(q.cache_path) if q.cache_path else None
    key = None
    if cache is not None:
        key = QuantileCache.key(tps, design.fingerprint(), alpha, q.n_mc, q.seed, method=q.method,
                                noise=repr(q.noise), quad=repr(quad), n=n)
        hit = cache.get(key)
        if hit is not None:
            return hit.thresholds(sig, n, tps, design.d), hit
    res = quantile_kappa(tps, design, kt, alpha, q.n_mc, q.seed, q.method, q.noise, quad)
    if cache is not None:
        cache.put(key, res)
    return res.thresholds(sig, n, tps, design.d), res


def run_family(sample: ProjectedSample, design: FittedDesign, kt: KernelTable, family: HypothesisFamily,
               alpha: float, quantiles: QuantileSettings = QuantileSettings(),
               quad: QuadSpec = QuadSpec()) -> tuple[list[TestRecord], QuantileResult]:
    """Statistics, thresholds and decisions for every point of ``family``."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    stat = sample.statistic_half() if 0 < sample.n_stat < len(sample) else sample
    tps = list(family.points)
    stats = evaluate_family(stat, design, kt, tps, quad)
    kappas, qres = _thresholds(tps, stats, design, kt, alpha, quantiles, quad)
    records = []
    for st, k in zip(stats, kappas):
        rp, rm = decide(st, float(k), design.d)
        records.append(TestRecord(st.tp, st.T_hat, st.sigma_hat, float(k), rp, rm))
    return records, qres


# --- mode procedures --------------------------------------------------------------------


def mode_family(b0, scales: Sequence[float], offset: float = 2.0, c_factor: float = 3.0,
                directions=None, region=None) -> HypothesisFamily:
    """Points ``b0 + offset h v`` with outward directions ``v``, all testing H_{0,-}."""
    tps = mode_scan_testpoints(b0, scales, directions, c_factor=max(c_factor, offset, 2.0 + 1e-9), offset=offset)
    return HypothesisFamily(tps, ("-",) * len(tps), "mode-at-point", region)


def _scale_groups(records: list[TestRecord]) -> dict[float, list[TestRecord]]:
    groups: dict[float, list[TestRecord]] = {}
    for r in records:
        groups.setdefault(r.tp.h, []).append(r)
    return groups


def mode_test(b0, scales: Sequence[float], sample: ProjectedSample, design: FittedDesign, kt: KernelTable,
              alpha: float = 0.05, quantiles: QuantileSettings = QuantileSettings(), offset: float = 2.0,
              directions=None, quad: QuadSpec = QuadSpec()) -> TestOutcome:
    """Mode at ``b0``: detected iff H_{0,-} is rejected at every point of the family."""
    if not scales:
        raise ValueError("at least one scale is required")
    fam = mode_family(b0, scales, offset, directions=directions)
    records, qres = run_family(sample, design, kt, fam, alpha, quantiles, quad)
    verdict = {"mode_detected": all(r.reject_minus for r in records), "b0": [float(x) for x in np.ravel(b0)]}
    return TestOutcome("mode-at-point", alpha, records, verdict, qres, quantiles.seed)


def combine_scales(records: list[TestRecord], subset: Sequence[float], rule: str = "cover") -> bool:
    """Combined mode verdict over a subset of scales.

    ``cover``: every direction is rejected at some scale of the subset.
    ``any``: some scale of the subset rejects all of its directions.
    ``all``: every scale of the subset rejects all of its directions.
    """
    groups = _scale_groups(records)
    missing = [h for h in subset if h not in groups]
    if missing:
        raise ValueError(f"scales {missing} are not in the family")
    if rule == "any":
        return any(all(r.reject_minus for r in groups[h]) for h in subset)
    if rule == "all":
        return all(all(r.reject_minus for r in groups[h]) for h in subset)
    if rule == "cover":
        hit: dict[tuple, bool] = {}
        for h in subset:
            for r in groups[h]:
                hit[r.tp.v] = hit.get(r.tp.v, False) or r.reject_minus
        return all(hit.values())
    raise ValueError(f"unknown combination rule {rule!r}; use 'cover', 'any' or 'all'")


def multiscale_mode_test(b0, scales: Sequence[float], sample: ProjectedSample, design: FittedDesign,
                         kt: KernelTable, alpha: float = 0.05, quantiles: QuantileSettings = QuantileSettings(),
                         subset: Sequence[float] | None = None, rule: str = "cover", offset: float = 1.0,
                         directions=None, quad: QuadSpec = QuadSpec()) -> TestOutcome:
    """One family over all scales with a single multiscale quantile.

    The verdict reports full rejection per scale and the combined rule on
    ``subset`` (default: all scales).
    """
    if len(scales) < 2:
        raise ValueError("the multiscale test needs at least two scales")
    fam = mode_family(b0, scales, offset, directions=directions)
    records, qres = run_family(sample, design, kt, fam, alpha, quantiles, quad)
    subset = list(subset) if subset is not None else list(scales)
    groups = _scale_groups(records)
    verdict = {
        "per_scale": {repr(float(h)): all(r.reject_minus for r in groups[h]) for h in scales},
        "subset": [float(h) for h in subset],
        "rule": rule,
        "mode_detected": combine_scales(records, subset, rule),
        "b0": [float(x) for x in np.ravel(b0)],
    }
    return TestOutcome("multiscale-mode", alpha, records, verdict, qres, quantiles.seed)


def _grid_axis(lo: float, hi: float, mesh: float) -> np.ndarray:
    k = int(math.floor((hi - lo) / mesh + 1e-9))
    return lo + mesh * np.arange(k + 1)


def global_mode_scan(region, scales: Sequence[float], sample: ProjectedSample, design: FittedDesign,
                     kt: KernelTable, alpha: float = 0.05, quantiles: QuantileSettings = QuantileSettings(),
                     offset: float = 1.0, quad: QuadSpec = QuadSpec()) -> TestOutcome:
    """Mode tests at every vertex of a mesh-``h`` grid, one joint quantile for all scales.

    A vertex ``b0`` is a candidate mode when every ``t = b0 + offset h v``
    (``v = +-e_i``) rejects H_{0,-}.  Vertices are placed so that all of
    their test points satisfy ``a1 + h <= t <= a2 - h``.  Adjacent candidates
    are not merged.
    """
    a1, a2 = (np.asarray(x, dtype=float) for x in region)
    d = a1.size
    tps: dict[tuple, TestPoint] = {}
    vertices = []
    for h in scales:
        lo, hi = a1 + h + offset * h, a2 - h - offset * h
        if np.any(lo > hi + 1e-12):
            raise ValueError(f"region {region} admits no vertex at scale h={h}")
        axes = [_grid_axis(lo[i], hi[i], h) for i in range(d)]
        for b0 in itertools.product(*axes):
            b0 = np.array(b0)
            pts = mode_scan_testpoints(b0, [h], None, c_factor=max(3.0, offset), offset=offset)
            vertices.append((b0, h, [(p.t, p.h, p.v) for p in pts]))
            for p in pts:
                tps.setdefault((p.t, p.h, p.v), p)
    fam = HypothesisFamily(list(tps.values()), ("-",) * len(tps), "global-scan", (a1, a2))
    records, qres = run_family(sample, design, kt, fam, alpha, quantiles, quad)
    rejected = {(r.tp.t, r.tp.h, r.tp.v): r.reject_minus for r in records}
    candidates = [{"b0": b0.tolist(), "h": float(h)} for b0, h, keys in vertices if all(rejected[k] for k in keys)]
    floor = (math.log(design.n) / design.n) ** (1.0 / (2 * d + 3))
    if min(scales) < floor:
        log.info("smallest scale %.3g is below (log n / n)^(1/(2d+3)) = %.3g", min(scales), floor)
    verdict = {"candidates": candidates, "n_vertices": len(vertices), "scale_floor": floor}
    return TestOutcome("global-scan", alpha, records, verdict, qres, quantiles.seed)


def monotonicity_family(region, h0: float = 0.5, width: float | None = None) -> HypothesisFamily:
    """Vertices ``a1 + h0 + k width`` of the region times the four diagonal directions."""
    a1, a2 = (np.asarray(x, dtype=float) for x in region)
    if a1.size != 2:
        raise ValueError(f"the monotonicity map is defined for d = 2, got d = {a1.size}")
    width = 2.0 * h0 if width is None else width
    lo, hi = a1 + h0, a2 - h0
    if np.any(lo > hi + 1e-12):
        raise ValueError(f"region {region} admits no location at h0={h0}")
    v1 = np.array([1.0, 1.0]) / math.sqrt(2.0)
    v2 = np.array([-1.0, 1.0]) / math.sqrt(2.0)
    dirs = [v1, v2, -v1, -v2]
    tps = [TestPoint(np.array(t), h0, v) for t in itertools.product(_grid_axis(lo[0], hi[0], width),
                                                                      _grid_axis(lo[1], hi[1], width))
           for v in dirs]
    return HypothesisFamily(tps, ("-",) * len(tps), "monotonicity-map", (a1, a2))


def monotonicity_map(sample: ProjectedSample, design: FittedDesign, kt: KernelTable, h0: float, region,
                     alpha: float = 0.05, quantiles: QuantileSettings = QuantileSettings(),
                     width: float | None = None, quad: QuadSpec = QuadSpec()) -> TestOutcome:
    """Arrows ``(t, v)`` wherever a decrease along ``v`` is certified."""
    if sample.d != 2:
        raise ValueError(f"the monotonicity map is defined for d = 2, got d = {sample.d}")
    fam = monotonicity_family(region, h0, width)
    records, qres = run_family(sample, design, kt, fam, alpha, quantiles, quad)
    verdict = {"n_arrows": sum(r.reject_minus for r in records), "n_tests": len(records)}
    return TestOutcome("monotonicity-map", alpha, records, verdict, qres, quantiles.seed)


# --- parametric baseline -----------------------------------------------------------------


@dataclass(frozen=True)
class OLSResult:
    coef: np.ndarray
    se: np.ndarray
    n: int

    def to_dict(self) -> dict:
        return {"coef": self.coef.tolist(), "se": self.se.tolist(), "n": self.n, "covariance": "HC0"}


def ols_baseline(raw: RawDataset) -> OLSResult:
    """Least squares of ``S`` on ``Theta`` with HC0 (White) sandwich standard errors."""
    sample = normalize(raw, seed=0, randomize_signs=False, split=False)
    X, y = sample.Theta, sample.S
    rank = np.linalg.matrix_rank(X)
    if rank < X.shape[1]:
        raise np.linalg.LinAlgError(f"transformed design has rank {rank} < {X.shape[1]}")
    bread = np.linalg.inv(X.T @ X)
    coef = bread @ (X.T @ y)
    resid = y - X @ coef
    meat = (X * resid[:, None] ** 2).T @ X
    cov = bread @ meat @ bread
    return OLSResult(coef, np.sqrt(np.diag(cov)), len(y))


# --- replication drivers ----------------------------------------------------------------------


def detection_rates(spec: DGPSpec, n: int, n_reps: int, seed: int, tps, threshold: float,
                    design_config: DesignConfig = DesignConfig(), quad: QuadSpec = QuadSpec(),
                    workers: int | None = None) -> dict:
    """Frequency of 'every test rejects H_{0,-}' with a calibrated threshold."""
    T, sig = replicate_statistics(spec, n, n_reps, seed, tps, design_config, quad, workers)
    z = np.sign(c_d(spec.d)) * math.sqrt(n) * T / sig
    hits = z.min(axis=1) > threshold
    rate = float(hits.mean())
    return {"rate": rate, "se": math.sqrt(rate * (1 - rate) / n_reps), "reps": n_reps, "hits": int(hits.sum())}


def _theoretical_job(args):
    spec, n, seed, tps, alpha, design_config, quad, q = args
    kt = build_kernel_table(spec.d)
    T, sig, design = simulate_replicate(spec, n, seed, tps, design_config, kt, quad)
    res = quantile_kappa(tps, design, kt, alpha, q.n_mc, child_seed(seed, 2), q.method, q.noise, quad)
    kap = np.asarray(res.per_test)
    signed = np.sign(c_d(spec.d)) * T
    return signed > kap, signed < -kap


def theoretical_replicates(spec: DGPSpec, n: int, n_reps: int, seed: int, tps, alpha: float = 0.05,
                           design_config: DesignConfig = DesignConfig(), quad: QuadSpec = QuadSpec(),
                           quantiles: QuantileSettings = QuantileSettings(n_mc=2000),
                           workers: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Rejection flags ``(minus, plus)`` of shape ``(n_reps, len(tps))`` with per-replication quantiles."""
    jobs = [(spec, n, child_seed(seed, r), list(tps), alpha, design_config, quad, quantiles) for r in range(n_reps)]
    res = parallel_map(_theoretical_job, jobs, workers)
    return np.array([r[0] for r in res]), np.array([r[1] for r in res])


def config_hash(obj) -> str:
    blob = json.dumps(_jsonable(obj), sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]
