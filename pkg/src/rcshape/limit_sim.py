"""Gaussian limit process and Monte Carlo quantiles for the multiscale tests.

The limit ``X_hat`` is a stochastic integral of a deterministic kernel against
Gaussian white noise on the cylinder ``R x S^(d-1)``.  After discretization
into cells it is a linear map of independent cell noises, so two samplers are
offered: ``"noise"`` draws the cell noises explicitly, ``"gram"`` draws from
the same finite-dimensional Gaussian law through a factor of the covariance
matrix of the family, which is much cheaper for large grids.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .datagen import DGPSpec, sample_dgp
from .design_density import DesignConfig, FittedDesign, fit_design
from .geometry import normalize, sphere_quadrature
from .kernels import KernelTable, TestPoint, build_kernel_table, c_d
from .runtime import child_rng, child_seed, parallel_map
from .statistics import QuadSpec, calibration_terms, sigma_hat_family, t_hat_family

__all__ = [
    "NoiseGrid",
    "NoiseField",
    "NoiseSpec",
    "QuantileResult",
    "default_noise_grid",
    "integrand_matrix",
    "draw_x_hat",
    "quantile_kappa",
    "refinement_check",
    "simulate_replicate",
    "replicate_statistics",
    "calibrated_quantiles",
    "calibrated_threshold",
    "QuantileCache",
]

_GRAM_CHUNK = 1000
_NOISE_CHUNK = 50


# --- noise on the cylinder ------------------------------------------------------------


def _circle_cells(resolution: int) -> tuple[np.ndarray, np.ndarray]:
    ang = 2.0 * math.pi * (np.arange(resolution) + 0.5) / resolution
    return np.column_stack([np.cos(ang), np.sin(ang)]), np.full(resolution, 2.0 * math.pi / resolution)


@dataclass(frozen=True, eq=False)
class NoiseGrid:
    """Cells ``(sphere cell g) x [s_k, s_{k+1})`` with measure ``w_g * ds``.

    On the circle the sphere cells are equal arcs centred at the nodes, so a
    grid refined by an integer factor nests inside the coarse one.
    """

    nodes: np.ndarray
    weights: np.ndarray
    s_edges: np.ndarray

    def __post_init__(self):
        if np.any(self.weights <= 0) or np.any(np.diff(self.s_edges) <= 0):
            raise ValueError("cell measures must be positive")

    @classmethod
    def build(cls, d: int, s_lo: float, s_hi: float, ds: float, sphere_resolution: int) -> "NoiseGrid":
        k = max(1, int(math.ceil((s_hi - s_lo) / ds)))
        edges = s_lo + ds * np.arange(k + 1)
        if d == 2:
            nodes, w = _circle_cells(sphere_resolution)
        else:
            nodes, w = sphere_quadrature(d, sphere_resolution)
        return cls(nodes, w, edges)

    @property
    def d(self) -> int:
        return self.nodes.shape[1]

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.s_edges[1:] + self.s_edges[:-1])

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.nodes), len(self.s_edges) - 1

    @property
    def measure(self) -> np.ndarray:
        return self.weights[:, None] * np.diff(self.s_edges)[None, :]

    def covers(self, tp: TestPoint, half_width: float) -> bool:
        c = self.nodes @ np.asarray(tp.t)
        return bool(c.min() - tp.h * half_width >= self.s_edges[0] - 1e-12
                    and c.max() + tp.h * half_width <= self.s_edges[-1] + 1e-12)

    def draw(self, rng: np.random.Generator) -> "NoiseField":
        return NoiseField(self, rng.standard_normal(self.shape) * np.sqrt(self.measure))

    def refine(self, factor: int = 2) -> "NoiseGrid":
        """Nested refinement (circle only): each cell splits into ``factor`` x ``factor`` cells."""
        if self.d != 2:
            raise ValueError("nested refinement is available on the circle only")
        edges = np.linspace(self.s_edges[0], self.s_edges[-1], (len(self.s_edges) - 1) * factor + 1)
        # fine arcs factor*g .. factor*g + factor - 1 tile coarse arc g
        nodes, w = _circle_cells(len(self.nodes) * factor)
        return NoiseGrid(nodes, w, edges)


@dataclass(frozen=True, eq=False)
class NoiseField:
    """One realization of the cell noises ``W(cell) ~ N(0, cell measure)``."""

    grid: NoiseGrid
    values: np.ndarray

    def coarsen(self, factor: int = 2) -> "NoiseField":
        """Sum children into the cells of the grid that ``refine(factor)`` came from."""
        g, k = self.grid.shape
        if g % factor or k % factor:
            raise ValueError("grid shape is not divisible by the coarsening factor")
        vals = self.values.reshape(g // factor, factor, k // factor, factor).sum(axis=(1, 3))
        nodes, w = _circle_cells(g // factor)
        return NoiseField(NoiseGrid(nodes, w, self.grid.s_edges[::factor]), vals)

    def total(self, mask: np.ndarray | None = None) -> float:
        return float(self.values.sum() if mask is None else self.values[mask].sum())


@dataclass(frozen=True)
class NoiseSpec:
    """Discretization of the limit process: sphere cells and ``s`` step as a fraction of the smallest scale."""

    sphere_resolution: int | None = None
    s_step_factor: float = 0.25

    def resolution(self, d: int) -> int:
        return self.sphere_resolution or {2: 256, 3: 500}.get(d, 500)


def _half_width(kt: KernelTable) -> float:
    return 1.0 if kt.compact else kt.u_max


def default_noise_grid(tps, design: FittedDesign, kt: KernelTable, spec: NoiseSpec = NoiseSpec()) -> NoiseGrid:
    """Grid covering the data range and every kernel support of the family."""
    hw = _half_width(kt)
    h_max = max(tp.h for tp in tps)
    h_min = min(tp.h for tp in tps)
    reach = max(float(np.linalg.norm(tp.t)) + tp.h * hw for tp in tps)
    lo = min(float(design.S.min()) - h_max * hw, -reach)
    hi = max(float(design.S.max()) + h_max * hw, reach)
    if design.intercept:
        lo, hi = min(lo, -hi), max(hi, -lo)
    return NoiseGrid.build(design.d, lo, hi, spec.s_step_factor * h_min, spec.resolution(design.d))


def integrand_matrix(grid: NoiseGrid, design: FittedDesign, kt: KernelTable, tps) -> np.ndarray:
    """Rows ``a_j(cell) = h^-1/2 <theta, v> psi((s - <t, theta>)/h) sqrt(f_{S,Theta}) / f_Theta``."""
    hw = _half_width(kt)
    for tp in tps:
        if not grid.covers(tp, hw):
            raise ValueError(f"noise grid s-range [{grid.s_edges[0]:.3g}, {grid.s_edges[-1]:.3g}] does not cover "
                             f"the kernel support of test point t={tp.t}, h={tp.h}")
    s = grid.centers
    root = np.sqrt(design.joint_on_grid(grid.nodes, s)) / design.f_theta(grid.nodes)[:, None]
    out = np.empty((len(tps), root.size))
    for j, tp in enumerate(tps):
        u = (s[None, :] - (grid.nodes @ np.asarray(tp.t))[:, None]) / tp.h
        a = (grid.nodes @ np.asarray(tp.v))[:, None] * kt(u) * root / math.sqrt(tp.h)
        out[j] = a.ravel()
    return out


def draw_x_hat(noise: NoiseField, design: FittedDesign, kt: KernelTable, tp: TestPoint) -> float:
    """Discrete stochastic integral of the limit kernel of ``tp`` against one noise realization."""
    a = integrand_matrix(noise.grid, design, kt, [tp])[0]
    return float(a @ noise.values.ravel())


# --- quantiles -----------------------------------------------------------------------


@dataclass
class QuantileResult:
    """Multiscale quantile and the per-test thresholds it induces.

    ``mode="theoretical"``: ``kappa_alpha`` is the (1-alpha)-quantile of
    ``max_j beta_h (|X_hat_j| / sigma_j - alpha_h)`` and ``per_test`` holds
    ``sigma_j / sqrt(n) (kappa / beta_h + alpha_h)``.  ``mode="calibrated"``:
    ``kappa_alpha`` is a threshold for ``sgn(c_d) sqrt(n) T_hat / sigma_hat``
    and ``per_test`` is filled in once sigma-hat of the data is known.
    """

    kappa_alpha: float
    alpha: float
    n_mc: int
    mode: str
    per_test: tuple = ()
    sigma: tuple = ()
    draws: np.ndarray | None = field(default=None, repr=False, compare=False)

    def thresholds(self, sigma, n: int, tps=None, d: int | None = None) -> np.ndarray:
        """Per-test thresholds for given ``sigma_hat`` values and sample size."""
        sigma = np.asarray(sigma, dtype=float)
        if self.mode == "calibrated":
            return sigma * self.kappa_alpha / math.sqrt(n)
        terms = np.array([calibration_terms(tp.h, d) for tp in tps])
        return sigma / math.sqrt(n) * (self.kappa_alpha / terms[:, 1] + terms[:, 0])

    def quantile_at(self, alpha: float) -> float:
        """Re-read the stored Monte Carlo pool at a different level."""
        if self.draws is None:
            raise ValueError("no Monte Carlo draws stored")
        return _upper_quantile(self.draws, alpha)

    def to_dict(self) -> dict:
        out = asdict(self)
        out.pop("draws")
        out["per_test"] = list(self.per_test)
        out["sigma"] = list(self.sigma)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "QuantileResult":
        return cls(d["kappa_alpha"], d["alpha"], d["n_mc"], d["mode"], tuple(d["per_test"]), tuple(d["sigma"]))


def _upper_quantile(values: np.ndarray, alpha: float) -> float:
    """Order statistic ``ceil((1 - alpha) m)`` (1-based) of ``values``."""
    v = np.sort(np.asarray(values))
    k = min(max(int(math.ceil((1.0 - alpha) * len(v) - 1e-9)), 1), len(v))
    return float(v[k - 1])


def _gram_draws(A: np.ndarray, measure: np.ndarray, n_mc: int, seed: int) -> np.ndarray:
    cov = (A * measure[None, :]) @ A.T
    lam, U = np.linalg.eigh(cov)
    factor = U * np.sqrt(np.clip(lam, 0.0, None))[None, :]
    out = np.empty((n_mc, A.shape[0]))
    for c, start in enumerate(range(0, n_mc, _GRAM_CHUNK)):
        m = min(_GRAM_CHUNK, n_mc - start)
        out[start:start + m] = child_rng(seed, c).standard_normal((m, A.shape[0])) @ factor.T
    return out


def _noise_draws(A: np.ndarray, grid: NoiseGrid, n_mc: int, seed: int) -> np.ndarray:
    out = np.empty((n_mc, A.shape[0]))
    root = np.sqrt(grid.measure).ravel()
    for c, start in enumerate(range(0, n_mc, _NOISE_CHUNK)):
        m = min(_NOISE_CHUNK, n_mc - start)
        W = child_rng(seed, c).standard_normal((m, root.size)) * root[None, :]
        out[start:start + m] = W @ A.T
    return out


def quantile_kappa(tps, design: FittedDesign, kt: KernelTable, alpha: float, n_mc: int = 5000, seed: int = 0,
                   method: str = "gram", noise: NoiseSpec = NoiseSpec(), quad: QuadSpec = QuadSpec(),
                   grid: NoiseGrid | None = None) -> QuantileResult:
    """Monte Carlo ``kappa_n(alpha)`` for the family ``tps`` and the per-test thresholds."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if n_mc < 100:
        raise ValueError(f"n_mc must be at least 100, got {n_mc}")
    tps = list(tps)
    sigma = sigma_hat_family(design, kt, tps, quad)
    grid = grid or default_noise_grid(tps, design, kt, noise)
    A = integrand_matrix(grid, design, kt, tps)
    if method == "gram":
        X = _gram_draws(A, grid.measure.ravel(), n_mc, seed)
    elif method == "noise":
        X = _noise_draws(A, grid, n_mc, seed)
    else:
        raise ValueError(f"unknown quantile method {method!r}; use 'gram' or 'noise'")
    terms = np.array([calibration_terms(tp.h, design.d) for tp in tps])
    sup = np.max(terms[:, 1] * (np.abs(X) / sigma[None, :] - terms[:, 0]), axis=1)
    kappa = _upper_quantile(sup, alpha)
    res = QuantileResult(kappa, alpha, n_mc, "theoretical", sigma=tuple(sigma), draws=sup)
    res.per_test = tuple(res.thresholds(sigma, design.n, tps, design.d))
    return res


def refinement_check(tps, design: FittedDesign, kt: KernelTable, alpha: float, n_mc: int = 2000, seed: int = 0,
                     noise: NoiseSpec = NoiseSpec(), quad: QuadSpec = QuadSpec(), factor: int = 2) -> tuple[float, float]:
    """``(kappa_coarse, kappa_fine)`` from common random numbers (circle only).

    Noise is drawn on the grid refined by ``factor`` in both directions and
    summed back into the coarse cells, so both quantiles see the same white
    noise realization.
    """
    tps = list(tps)
    coarse = default_noise_grid(tps, design, kt, noise)
    fine = coarse.refine(factor)
    A_c = integrand_matrix(coarse, design, kt, tps)
    A_f = integrand_matrix(fine, design, kt, tps)
    sigma = sigma_hat_family(design, kt, tps, quad)
    terms = np.array([calibration_terms(tp.h, design.d) for tp in tps])
    sup_c, sup_f = np.empty(n_mc), np.empty(n_mc)
    for c, start in enumerate(range(0, n_mc, _NOISE_CHUNK)):
        rng = child_rng(seed, c)
        for r in range(start, min(start + _NOISE_CHUNK, n_mc)):
            field = fine.draw(rng)
            for A, vals, out in ((A_f, field.values, sup_f), (A_c, field.coarsen(factor).values, sup_c)):
                X = A @ vals.ravel()
                out[r] = np.max(terms[:, 1] * (np.abs(X) / sigma - terms[:, 0]))
    return _upper_quantile(sup_c, alpha), _upper_quantile(sup_f, alpha)


# --- calibration by simulation under a null -------------------------------------------------


def simulate_replicate(spec: DGPSpec, n: int, seed: int, tps, design_config: DesignConfig = DesignConfig(),
                       kt: KernelTable | None = None, quad: QuadSpec = QuadSpec()):
    """One pass of the pipeline: data, split, design fit, ``T_hat`` and ``sigma_hat`` per test point."""
    raw = sample_dgp(spec, n, seed=child_seed(seed, 0))
    sample = normalize(raw, seed=child_seed(seed, 1))
    design = fit_design(sample, design_config)
    kt = kt or build_kernel_table(spec.d)
    stat = sample.statistic_half()
    T = t_hat_family(stat, design, kt, tps)
    sig = sigma_hat_family(design, kt, tps, quad)
    return T, sig, design


def _standardized_job(args):
    spec, n, seed, tps, design_config, quad = args
    T, sig, _ = simulate_replicate(spec, n, seed, tps, design_config, None, quad)
    return T, sig


def replicate_statistics(spec: DGPSpec, n: int, n_reps: int, seed: int, tps,
                         design_config: DesignConfig = DesignConfig(), quad: QuadSpec = QuadSpec(),
                         workers: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """``T_hat`` and ``sigma_hat`` arrays of shape ``(n_reps, len(tps))``; replication r uses seed ``(seed, r)``."""
    jobs = [(spec, n, child_seed(seed, r), list(tps), design_config, quad) for r in range(n_reps)]
    res = parallel_map(_standardized_job, jobs, workers)
    return np.array([r[0] for r in res]), np.array([r[1] for r in res])


def calibrated_threshold(min_stats: np.ndarray, alpha: float) -> float:
    """Threshold ``q`` such that ``min_stat > q`` in a fraction at most ``alpha`` of the null pool.

    ``q`` is the ascending order statistic of index ``ceil((1 - alpha) R)``;
    ``alpha = 1`` gives the pool minimum.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    return _upper_quantile(min_stats, alpha)


def calibrated_quantiles(tps, dgp_null: DGPSpec, alpha: float, n_reps: int = 1000, seed: int = 0,
                         n: int | None = None, design_config: DesignConfig = DesignConfig(),
                         quad: QuadSpec = QuadSpec(), workers: int | None = None) -> QuantileResult:
    """Threshold for the joint event 'every test in the family rejects H_{0,-}' under a null DGP."""
    if n_reps < 200:
        raise ValueError(f"calibration needs at least 200 replications, got {n_reps}")
    if n_reps * alpha < 10:
        warnings.warn(f"n_reps * alpha = {n_reps * alpha:.1f} < 10: calibrated threshold is unstable", stacklevel=2)
    n = n or dgp_null.n
    T, sig = replicate_statistics(dgp_null, n, n_reps, seed, tps, design_config, quad, workers)
    z = np.sign(c_d(dgp_null.d)) * math.sqrt(n) * T / sig
    mins = z.min(axis=1)
    return QuantileResult(calibrated_threshold(mins, alpha), alpha, n_reps, "calibrated", draws=mins)


# --- cache -------------------------------------------------------------------------------------


def _family_key(tps) -> list:
    return [tp.to_dict() for tp in tps]


class QuantileCache:
    """JSON file of quantile results keyed by a content hash of their inputs."""

    def __init__(self, path):
        self.path = Path(path)

    @staticmethod
    def key(tps, design_fingerprint: str, alpha: float, n_mc: int, seed: int, **extra) -> str:
        blob = json.dumps({"family": _family_key(tps), "design": design_fingerprint, "alpha": alpha,
                           "n_mc": n_mc, "seed": seed, **extra}, sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()

    def _load(self) -> dict:
        if not self.path.exists():
            return {}
        with open(self.path) as fh:
            return json.load(fh)

    def get(self, key: str) -> QuantileResult | None:
        entry = self._load().get(key)
        return QuantileResult.from_dict(entry) if entry else None

    def put(self, key: str, result: QuantileResult) -> None:
        data = self._load()
        data[key] = result.to_dict()
        tmp = self.path.with_suffix(self.path.suffix + ".tmp")
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(tmp, "w") as fh:
            json.dump(data, fh, indent=1, sort_keys=True)
        os.replace(tmp, self.path)
