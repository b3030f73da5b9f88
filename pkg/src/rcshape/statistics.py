"""Plug-in statistic ``T_hat``, its standard deviation ``sigma_hat`` and the calibration terms."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .design_density import FittedDesign
from .geometry import ProjectedSample
from .kernels import KernelTable, TestPoint

__all__ = [
    "StatResult",
    "QuadSpec",
    "t_hat",
    "t_hat_family",
    "sigma_hat",
    "sigma_hat_family",
    "alpha_beta",
    "calibration_terms",
    "evaluate_family",
]

SIGMA_FLOOR = 1e-6


@dataclass(frozen=True)
class StatResult:
    tp: TestPoint
    T_hat: float
    sigma_hat: float
    n: int

    def __post_init__(self):
        if not self.sigma_hat > 0:
            raise ValueError(f"sigma_hat must be positive, got {self.sigma_hat}")

    @property
    def standardized(self) -> float:
        return math.sqrt(self.n) * self.T_hat / self.sigma_hat


@dataclass(frozen=True)
class QuadSpec:
    """Product rule for ``sigma_hat``: sphere nodes times a trapezoid rule in ``u``.

    ``n_u`` points span the kernel support ``[-1, 1]`` (odd d) or
    ``[-u_max, u_max]`` (even d, plus the fitted ``C/|u|`` tail).
    """

    sphere_resolution: int | None = None
    n_u: int | None = None

    def refined(self, factor: int = 2) -> "QuadSpec":
        return QuadSpec(self.sphere_resolution and self.sphere_resolution * factor,
                        self.n_u and (self.n_u - 1) * factor + 1)


def _u_points(kt: KernelTable, quad: QuadSpec) -> int:
    if quad.n_u is not None:
        return quad.n_u
    return 513 if kt.compact else 2049


def _stat_weights(sample: ProjectedSample, design: FittedDesign) -> np.ndarray:
    return 1.0 / design.f_theta(sample.Theta)


def t_hat(sample: ProjectedSample, design: FittedDesign, kt: KernelTable, tp: TestPoint,
          inv_ftheta: np.ndarray | None = None) -> float:
    """``(n sqrt(h))^-1 sum_i <Theta_i, v> / f_Theta(Theta_i) psi((S_i - <t, Theta_i>) / h)``.

    ``inv_ftheta`` (reciprocal design density at the sample directions) can
    be passed in to share it across a family of test points.
    """
    if len(sample) == 0:
        raise ValueError("statistic half is empty")
    if sample.d != kt.dimension or tp.dim != kt.dimension:
        raise ValueError(f"dimension mismatch: sample d={sample.d}, test point d={tp.dim}, kernel d={kt.dimension}")
    if inv_ftheta is None:
        inv_ftheta = _stat_weights(sample, design)
    t = np.asarray(tp.t)
    v = np.asarray(tp.v)
    u = (sample.S - sample.Theta @ t) / tp.h
    if kt.compact:
        keep = np.abs(u) < 1.0
        terms = (sample.Theta[keep] @ v) * inv_ftheta[keep] * kt(u[keep])
    else:
        terms = (sample.Theta @ v) * inv_ftheta * kt(u)
    return float(terms.sum() / (len(sample) * math.sqrt(tp.h)))


def t_hat_family(sample: ProjectedSample, design: FittedDesign, kt: KernelTable, tps) -> np.ndarray:
    inv = _stat_weights(sample, design)
    return np.array([t_hat(sample, design, kt, tp, inv) for tp in tps])


def _u_rule(kt: KernelTable, n_u: int) -> tuple[np.ndarray, np.ndarray]:
    top = 1.0 if kt.compact else kt.u_max
    u = np.linspace(-top, top, n_u)
    w = np.full(n_u, u[1] - u[0])
    w[[0, -1]] *= 0.5
    return u, w


def sigma_hat(design: FittedDesign, kt: KernelTable, tp: TestPoint, quad: QuadSpec = QuadSpec()) -> float:
    """Square root of ``int int <theta, v>^2 psi(u)^2 f_{S,Theta}(<t,theta> + h u, theta) / f_Theta(theta)^2``."""
    return float(sigma_hat_family(design, kt, [tp], quad)[0])


def sigma_hat_family(design: FittedDesign, kt: KernelTable, tps, quad: QuadSpec = QuadSpec()) -> np.ndarray:
    res = quad.sphere_resolution or design.sphere_resolution
    nodes, sw = design.sphere_nodes(res)
    inv_f2 = 1.0 / design.f_theta_nodes(res) ** 2
    u, uw = _u_rule(kt, _u_points(kt, quad))
    psi2 = kt(u) ** 2
    out = np.empty(len(tps))
    for j, tp in enumerate(tps):
        if tp.dim != design.d:
            raise ValueError(f"test point has d={tp.dim}, design has d={design.d}")
        center = nodes @ np.asarray(tp.t)
        s = center[:, None] + tp.h * u[None, :]
        g = design.joint_at(s, res)
        inner = g @ (psi2 * uw)
        if not kt.compact:
            # analytic C^2/|u|^2 tail beyond u_max, density frozen at the edge values
            inner += (kt.tail_left**2 * g[:, 0] + kt.tail_right**2 * g[:, -1]) / kt.u_max
        proj = (nodes @ np.asarray(tp.v)) ** 2
        val = float(np.sum(sw * proj * inv_f2 * inner))
        out[j] = math.sqrt(max(val, 0.0))
        if out[j] < SIGMA_FLOOR:
            raise FloatingPointError(
                f"sigma_hat = {out[j]:.3g} at t={tp.t}, h={tp.h}: degenerate design or mis-set region")
    return out


def alpha_beta(h: float, d: int) -> tuple[float, float]:
    """``alpha_h = sqrt((3d-1) log(1/h))`` and ``beta_h = sqrt(log(e/h)) / log(log(e^e/h))``."""
    if not 0.0 < h <= 1.0:
        raise ValueError(f"scale must lie in (0, 1], got {h}")
    alpha = math.sqrt((3 * d - 1) * math.log(1.0 / h))
    beta = math.sqrt(math.log(math.e / h)) / math.log(math.log(math.exp(math.e) / h))
    return alpha, beta


def calibration_terms(h: float, d: int) -> tuple[float, float]:
    """``alpha_beta`` extended to scales above one by clamping at ``h = 1``."""
    return alpha_beta(min(h, 1.0), d)


def evaluate_family(sample: ProjectedSample, design: FittedDesign, kt: KernelTable, tps,
                    quad: QuadSpec = QuadSpec()) -> list[StatResult]:
    """``T_hat`` and ``sigma_hat`` for every test point, sharing the design evaluations."""
    T = t_hat_family(sample, design, kt, tps)
    sig = sigma_hat_family(design, kt, tps, quad)
    return [StatResult(tp, float(a), float(b), len(sample)) for tp, a, b in zip(tps, T, sig)]
