"""Density of the design directions and of the projected pairs ``(S, Theta)``.

Kernel estimators on the sphere use the profile ``K((1 - <Theta_i, theta>) / h^2)``
normalized by the constant ``C(h)``, and are floored from below (at
``1/log n`` and ``1/log(n)^2``) before they enter reciprocals or square roots.
In the intercept model the estimators are fitted on the upper hemisphere
from the unsigned sample and then point-reflected and halved.
"""

from __future__ import annotations

import functools
import hashlib
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, special

from .geometry import ProjectedSample, sphere_quadrature
from .kernels import sphere_volume

__all__ = [
    "epanechnikov",
    "normalizer_C",
    "hemisphere_normalizer_C",
    "spherical_kde",
    "joint_kde",
    "DesignConfig",
    "FittedDesign",
    "fit_design",
    "default_bandwidths",
    "cauchy_ftheta",
    "ftheta_from_fx",
    "uniform_box_ftheta",
    "MIN_ESTIMATION_ROWS",
]

MIN_ESTIMATION_ROWS = 50
_CHUNK = 4_000_000  # kernel matrix entries per block


def epanechnikov(u):
    """``K(u) = 3/4 (1 - u^2)`` on ``|u| <= 1``; Lipschitz, non-negative, integrates to one."""
    u = np.asarray(u, dtype=float)
    return np.where(np.abs(u) <= 1.0, 0.75 * (1.0 - u * u), 0.0)


def _cap_angle(h: float) -> float:
    return math.acos(max(1.0 - h * h, -1.0))


def _cap_integral(h: float, d: int, fraction: Callable[[float], float] | None = None) -> float:
    """``int_{S^(d-1)} K((1 - <theta', theta>) / h^2) dtheta'`` in geodesic polar coordinates."""
    vol = sphere_volume(d - 2)

    def integrand(a):
        w = epanechnikov((1.0 - math.cos(a)) / h**2) * math.sin(a) ** (d - 2) * vol
        return w * (fraction(a) if fraction is not None else 1.0)

    top = _cap_angle(h)
    val, _ = integrate.quad(integrand, 0.0, top, epsabs=1e-14, epsrel=1e-12, limit=200)
    return val


def normalizer_C(h_star: float, d: int) -> float:
    """``C(h) = h^(d-1) / int K((1 - <theta', theta>) / h^2) dtheta'`` (independent of ``theta``)."""
    if h_star <= 0:
        raise ValueError("bandwidth must be positive")
    return _normalizer_C(float(h_star), int(d))


@functools.lru_cache(maxsize=64)
def _normalizer_C(h: float, d: int) -> float:
    return h ** (d - 1) / _cap_integral(h, d)


def _upper_fraction(c: float, m: int) -> float:
    """Fraction of S^m with first coordinate above ``c``."""
    if c <= -1.0:
        return 1.0
    if c >= 1.0:
        return 0.0
    if m == 0:
        return 0.5 * ((1.0 > c) + (-1.0 > c))
    tail = 0.5 * special.betainc(m / 2.0, 0.5, 1.0 - c * c)
    return tail if c >= 0 else 1.0 - tail


def hemisphere_normalizer_C(h_star: float, d: int, theta1) -> np.ndarray:
    """``C(h, theta)`` for kernels restricted to the upper hemisphere ``theta_1 > 0``.

    Depends on ``theta`` only through ``theta_1``; tabulated on a grid in
    ``theta_1`` and interpolated.
    """
    if h_star <= 0:
        raise ValueError("bandwidth must be positive")
    grid, values = _hemisphere_table(float(h_star), int(d))
    return np.interp(np.clip(np.abs(theta1), 0.0, 1.0), grid, values)


@functools.lru_cache(maxsize=64)
def _hemisphere_table(h: float, d: int, n_nodes: int = 513):
    grid = np.sin(np.linspace(0.0, math.pi / 2, n_nodes))  # denser near theta_1 = 1
    grid[0], grid[-1] = 0.0, 1.0
    values = np.empty(n_nodes)
    for k, t1 in enumerate(grid):
        side = math.sqrt(max(1.0 - t1 * t1, 0.0))

        def fraction(a, t1=t1, side=side):
            ca, sa = math.cos(a), math.sin(a)
            if side < 1e-14 or sa == 0.0:
                return 1.0 if ca * t1 > 0 else 0.0
            return _upper_fraction(-ca * t1 / (sa * side), d - 2)

        values[k] = h ** (d - 1) / _cap_integral(h, d, fraction)
    return grid, values


def _sphere_weights(theta_eval: np.ndarray, Theta: np.ndarray, h: float) -> np.ndarray:
    return epanechnikov((1.0 - theta_eval @ Theta.T) / (h * h))


def _chunks(n_rows: int, n_cols: int):
    step = max(1, _CHUNK // max(n_cols, 1))
    for start in range(0, n_rows, step):
        yield slice(start, min(start + step, n_rows))


def spherical_kde(Theta: np.ndarray, h_star: float, theta, C: float | np.ndarray | None = None) -> np.ndarray:
    """Kernel estimate of the direction density at ``theta`` (rows of unit vectors).

    ``C`` defaults to the full-sphere normalizer ``C(h_star)``; pass an array
    (one value per evaluation point) for the hemisphere variant.
    """
    if h_star <= 0:
        raise ValueError("bandwidth must be positive")
    Theta = np.atleast_2d(Theta)
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    n, d = Theta.shape
    if C is None:
        C = normalizer_C(h_star, d)
    sums = np.empty(len(theta))
    for sl in _chunks(len(theta), n):
        sums[sl] = _sphere_weights(theta[sl], Theta, h_star).sum(axis=1)
    return np.asarray(C) * sums / (n * h_star ** (d - 1))


def joint_kde(S: np.ndarray, Theta: np.ndarray, h_plus: float, s, theta,
              C: float | np.ndarray | None = None) -> np.ndarray:
    """Kernel estimate of the joint density of ``(S, Theta)`` at paired points ``(s_j, theta_j)``."""
    if h_plus <= 0:
        raise ValueError("bandwidth must be positive")
    Theta = np.atleast_2d(Theta)
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    s = np.atleast_1d(np.asarray(s, dtype=float))
    if len(s) != len(theta):
        theta = np.broadcast_to(theta, (len(s), theta.shape[1]))
    n, d = Theta.shape
    if C is None:
        C = normalizer_C(h_plus, d)
    sums = np.empty(len(s))
    for sl in _chunks(len(s), n):
        w = _sphere_weights(theta[sl], Theta, h_plus)
        w *= epanechnikov((S[None, :] - s[sl, None]) / h_plus)
        sums[sl] = w.sum(axis=1)
    return np.asarray(C) * sums / (n * h_plus**d)


def default_bandwidths(n: int, d: int, cap: float = 0.5) -> tuple[float, float]:
    """Smallest admissible orders times two, capped: ``(h_star, h_plus)``."""
    logn = math.log(n)
    h_star = 2.0 * logn ** (7.0 / (d - 1)) * n ** (-1.0 / (d - 1))
    h_plus = 2.0 * logn ** (3.0 / d) * n ** (-1.0 / (2 * d))
    return min(h_star, cap), min(h_plus, cap)


@dataclass(frozen=True)
class DesignConfig:
    h_star: float | None = None
    h_plus: float | None = None
    bandwidth_cap: float = 0.5
    sphere_resolution: int | None = None
    lattice_step_factor: float = 0.125  # s-lattice step as a fraction of h_plus
    known_ftheta: Callable | None = field(default=None, compare=False)
    cutoff: bool = True

    def resolution(self, d: int) -> int:
        if self.sphere_resolution is not None:
            return self.sphere_resolution
        return {2: 256, 3: 500}.get(d, 500)


@dataclass(eq=False)
class FittedDesign:
    """Cut-off estimates (or a known closed form) of ``f_Theta`` and ``f_{S,Theta}``.

    ``f_theta`` / ``f_joint`` are the floored quantities used by the tests;
    ``f_theta_hat`` / ``f_joint_hat`` expose the raw kernel estimates.
    """

    S: np.ndarray
    Theta: np.ndarray
    n: int
    h_star: float
    h_plus: float
    intercept: bool
    mode: str = "estimated"
    known_ftheta: Callable | None = None
    cutoff: bool = True
    sphere_resolution: int = 256
    lattice_step: float = 0.0625
    _lattice_cache: dict = field(default_factory=dict, repr=False)

    @property
    def d(self) -> int:
        return self.Theta.shape[1]

    @property
    def floor_theta(self) -> float:
        return 1.0 / math.log(self.n) if self.cutoff else 0.0

    @property
    def floor_joint(self) -> float:
        return 1.0 / math.log(self.n) ** 2 if self.cutoff else 0.0

    # raw estimates -------------------------------------------------------------

    def f_theta_hat(self, theta) -> np.ndarray:
        theta = np.atleast_2d(np.asarray(theta, dtype=float))
        if not self.intercept:
            return spherical_kde(self.Theta, self.h_star, theta)
        flip = np.where(theta[:, 0] < 0, -1.0, 1.0)
        upper = theta * flip[:, None]
        C = hemisphere_normalizer_C(self.h_star, self.d, upper[:, 0])
        return 0.5 * spherical_kde(self.Theta, self.h_star, upper, C)

    def f_joint_hat(self, s, theta) -> np.ndarray:
        s = np.atleast_1d(np.asarray(s, dtype=float))
        theta = np.atleast_2d(np.asarray(theta, dtype=float))
        theta = np.broadcast_to(theta, (len(s), self.d)) if len(theta) != len(s) else theta
        if not self.intercept:
            return joint_kde(self.S, self.Theta, self.h_plus, s, theta)
        flip = np.where(theta[:, 0] < 0, -1.0, 1.0)
        upper = theta * flip[:, None]
        C = hemisphere_normalizer_C(self.h_plus, self.d, upper[:, 0])
        return 0.5 * joint_kde(self.S, self.Theta, self.h_plus, s * flip, upper, C)

    # cut-off estimates -----------------------------------------------------------

    def f_theta(self, theta) -> np.ndarray:
        theta = np.atleast_2d(np.asarray(theta, dtype=float))
        if self.known_ftheta is not None:
            return np.asarray(self.known_ftheta(theta), dtype=float).reshape(len(theta))
        return np.maximum(self.f_theta_hat(theta), self.floor_theta)

    def f_joint(self, s, theta) -> np.ndarray:
        return np.maximum(self.f_joint_hat(s, theta), self.floor_joint)

    # lattice for quadrature and noise simulation ---------------------------------------

    def sphere_nodes(self, resolution: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Equal-weight quadrature on the sphere shared by sigma-hat and the noise field."""
        return sphere_quadrature(self.d, resolution or self.sphere_resolution)

    def f_theta_nodes(self, resolution: int | None = None) -> np.ndarray:
        key = ("ftheta", resolution or self.sphere_resolution)
        if key not in self._lattice_cache:
            self._lattice_cache[key] = self.f_theta(self.sphere_nodes(resolution)[0])
        return self._lattice_cache[key]

    @functools.cached_property
    def s_lattice(self) -> np.ndarray:
        """Uniform ``s`` grid covering the estimation sample padded by one bandwidth."""
        step = self.lattice_step
        lo = math.floor((self.S.min() - self.h_plus) / step) - 1
        hi = math.ceil((self.S.max() + self.h_plus) / step) + 1
        if self.intercept:  # the reflected sample covers -S as well
            lo = min(lo, math.floor((-self.S.max() - self.h_plus) / step) - 1)
            hi = max(hi, math.ceil((-self.S.min() + self.h_plus) / step) + 1)
        return step * np.arange(lo, hi + 1)

    def joint_lattice(self, resolution: int | None = None) -> np.ndarray:
        """Cut-off joint density on sphere nodes x ``s_lattice`` (shape ``(G, K)``)."""
        key = ("joint", resolution or self.sphere_resolution)
        if key not in self._lattice_cache:
            self._lattice_cache[key] = self._compute_joint_lattice(self.sphere_nodes(resolution)[0])
        return self._lattice_cache[key]

    def joint_on_grid(self, nodes: np.ndarray, grid: np.ndarray) -> np.ndarray:
        """Cut-off joint density on the product of ``nodes`` and an ``s`` grid, without interpolation."""
        return self._compute_joint_lattice(np.atleast_2d(nodes), np.asarray(grid, dtype=float))

    def _compute_joint_lattice(self, nodes: np.ndarray, grid: np.ndarray | None = None) -> np.ndarray:
        grid = self.s_lattice if grid is None else grid
        if not self.intercept:
            vals = self._joint_matrix(nodes, grid, None)
        else:
            flip = np.where(nodes[:, 0] < 0, -1.0, 1.0)
            upper = nodes * flip[:, None]
            C = hemisphere_normalizer_C(self.h_plus, self.d, upper[:, 0])
            vals = np.empty((len(nodes), len(grid)))
            for sign in (1.0, -1.0):
                rows = flip == sign
                if rows.any():
                    # reflected rows see s -> -s
                    vals[rows] = 0.5 * self._joint_matrix(upper[rows], sign * grid, C[rows])
        return np.maximum(vals, self.floor_joint)

    def _joint_matrix(self, nodes: np.ndarray, grid: np.ndarray, C) -> np.ndarray:
        n, d = self.Theta.shape
        if C is None:
            C = normalizer_C(self.h_plus, d)
        W = _sphere_weights(nodes, self.Theta, self.h_plus)
        Ks = epanechnikov((self.S[:, None] - grid[None, :]) / self.h_plus)
        return np.asarray(C).reshape(-1, 1) * (W @ Ks) / (n * self.h_plus**d)

    def joint_at(self, s: np.ndarray, resolution: int | None = None) -> np.ndarray:
        """Cut-off joint density at ``(s[g, k], node_g)`` by linear interpolation in ``s``.

        ``s`` has one row per sphere node of the given resolution.
        """
        grid = self.s_lattice
        lat = self.joint_lattice(resolution)
        pos = (s - grid[0]) / (grid[1] - grid[0])
        k = np.clip(np.floor(pos).astype(int), 0, len(grid) - 2)
        frac = np.clip(pos - k, 0.0, 1.0)
        rows = np.arange(lat.shape[0])[:, None]
        vals = (1.0 - frac) * lat[rows, k] + frac * lat[rows, k + 1]
        outside = (pos < 0) | (pos > len(grid) - 1)
        return np.where(outside, self.floor_joint, vals)

    # diagnostics ---------------------------------------------------------------------

    def fingerprint(self) -> str:
        """Content hash of the estimation sample and tuning constants."""
        h = hashlib.sha256()
        for arr in (self.S, self.Theta):
            h.update(np.ascontiguousarray(arr).tobytes())
        h.update(repr((self.n, self.h_star, self.h_plus, self.intercept, self.mode, self.cutoff,
                       self.sphere_resolution, self.lattice_step)).encode())
        return h.hexdigest()[:16]

    def diagnostics(self) -> dict:
        nodes, weights = self.sphere_nodes()
        raw = self.f_theta_hat(nodes)
        return {
            "mode": self.mode,
            "n": self.n,
            "h_star": self.h_star,
            "h_plus": self.h_plus,
            "floor_theta": self.floor_theta,
            "floor_joint": self.floor_joint,
            "ftheta_hat_min": float(raw.min()),
            "ftheta_hat_max": float(raw.max()),
            "ftheta_hat_mass": float(np.sum(raw * weights)),
            "fraction_below_floor": float(np.mean(raw < self.floor_theta)),
            "directions_without_data": int(np.sum(raw == 0.0)),
        }

    def positivity_ok(self) -> bool:
        """Every direction on the quadrature grid has data within one kernel cap."""
        return self.diagnostics()["directions_without_data"] == 0


def fit_design(sample: ProjectedSample, config: DesignConfig | None = None, n: int | None = None) -> FittedDesign:
    """Fit the direction and joint densities on the estimation half of a sample.

    ``sample`` is either the estimation half itself or a split sample, in
    which case its estimation half is used.  Unsplit samples are used whole.  ``n`` (the number of rows in the
    statistic half) sets the cut-off floors and default bandwidths; it
    defaults to the size of the estimation half.
    """
    config = config or DesignConfig()
    est = sample.estimation_half() if 0 < sample.n_stat < len(sample) else sample
    m = len(est)
    if m < MIN_ESTIMATION_ROWS:
        raise ValueError(f"estimation half has {m} rows; at least {MIN_ESTIMATION_ROWS} are required")
    n = n or m
    d = est.d
    auto_star, auto_plus = default_bandwidths(n, d, config.bandwidth_cap)
    h_star = config.h_star or auto_star
    h_plus = config.h_plus or auto_plus
    S, Theta = est.S, est.Theta
    if est.intercept:
        # undo the sign randomization: fit on the upper hemisphere
        flip = np.where(Theta[:, 0] < 0, -1.0, 1.0)
        S, Theta = S * flip, Theta * flip[:, None]
    return FittedDesign(
        S=np.ascontiguousarray(S),
        Theta=np.ascontiguousarray(Theta),
        n=n,
        h_star=float(h_star),
        h_plus=float(h_plus),
        intercept=est.intercept,
        mode="known" if config.known_ftheta is not None else "estimated",
        known_ftheta=config.known_ftheta,
        cutoff=config.cutoff,
        sphere_resolution=config.resolution(d),
        lattice_step=config.lattice_step_factor * h_plus,
    )


# --- closed forms -------------------------------------------------------------------


def cauchy_ftheta(theta, mu=None, Sigma=None) -> np.ndarray:
    """Direction density in the intercept model with a multivariate Cauchy design.

    ``mu`` and ``Sigma`` parametrize the Cauchy law of ``(X_2, ..., X_d)``.
    """
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    d = theta.shape[1]
    mu = np.zeros(d - 1) if mu is None else np.asarray(mu, dtype=float)
    Sigma = np.eye(d - 1) if Sigma is None else np.atleast_2d(np.asarray(Sigma, dtype=float))
    if not np.allclose(Sigma, Sigma.T):
        raise ValueError("Sigma must be symmetric")
    try:
        chol = np.linalg.cholesky(Sigma)
    except np.linalg.LinAlgError as exc:
        raise ValueError("Sigma must be positive definite") from exc
    t1 = theta[:, 0]
    sign = np.where(t1 < 0, -1.0, 1.0)
    w = sign[:, None] * theta[:, 1:] - np.abs(t1)[:, None] * mu[None, :]
    z = np.linalg.solve(chol, w.T)
    quad = t1**2 + np.sum(z * z, axis=0)
    det = np.prod(np.diag(chol)) ** 2
    return special.gamma(d / 2) / (2 * math.pi ** (d / 2) * math.sqrt(det) * quad ** (d / 2))


def uniform_box_ftheta(theta, half_width: float = 5.0) -> np.ndarray:
    """Direction density of ``X ~ Unif[-a, a]^d`` without intercept."""
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    d = theta.shape[1]
    r_max = half_width / np.abs(theta).max(axis=1)
    return r_max**d / (d * (2 * half_width) ** d)


def ftheta_from_fx(f_X: Callable, theta, intercept: bool = False, r_max: float = np.inf) -> np.ndarray:
    """Direction density from a design density ``f_X``.

    Without intercept: ``int_0^inf r^(d-1) f_X(r theta) dr`` by adaptive
    quadrature (``f_X`` takes a d-vector).  With intercept:
    ``f_X(theta_2/theta_1, ...) / (2 |theta_1|^d)`` where ``f_X`` takes the
    (d-1)-vector of non-constant regressors.
    """
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    d = theta.shape[1]
    out = np.empty(len(theta))
    for k, th in enumerate(theta):
        if intercept:
            if th[0] == 0.0:
                out[k] = 0.0
                continue
            out[k] = f_X(th[1:] / th[0]) / (2.0 * abs(th[0]) ** d)
            continue
        with warnings.catch_warnings():
            warnings.simplefilter("error", integrate.IntegrationWarning)
            try:
                val, _ = integrate.quad(lambda r: r ** (d - 1) * f_X(r * th), 0.0, r_max, limit=200,
                                        points=None)
            except integrate.IntegrationWarning as exc:
                raise RuntimeError(f"radial quadrature did not converge at theta={th.tolist()}: {exc}") from exc
        out[k] = val
    return out
