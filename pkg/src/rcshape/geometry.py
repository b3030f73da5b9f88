"""Projection of raw data onto the cylinder R x S^(d-1) and grids on the sphere."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .kernels import TestPoint, sphere_volume

__all__ = [
    "RawDataset",
    "ProjectedSample",
    "normalize",
    "sphere_grid",
    "sphere_quadrature",
    "covering_radius",
    "mode_scan_testpoints",
    "axis_directions",
]


@dataclass(frozen=True, eq=False)
class RawDataset:
    """Rows ``(X_i, Y_i)``; ``intercept`` means the first regressor is identically 1."""

    X: np.ndarray
    Y: np.ndarray
    intercept: bool = False
    beta: np.ndarray | None = None

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        Y = np.asarray(self.Y, dtype=float).ravel()
        if X.shape[0] != Y.size:
            raise ValueError(f"X has {X.shape[0]} rows but Y has {Y.size}")
        if X.shape[1] < 2:
            raise ValueError("the random coefficients model needs d >= 2 regressors")
        if self.intercept:
            bad = np.flatnonzero(X[:, 0] != 1.0)
            if bad.size:
                raise ValueError(f"intercept model requires x1 == 1; row {bad[0]} has x1 = {X[bad[0], 0]!r}")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def __len__(self) -> int:
        return self.Y.size


@dataclass(frozen=True, eq=False)
class ProjectedSample:
    """Normalized observations ``(S_i, Theta_i)`` with the signs used to build them.

    The first ``n_stat`` rows feed the test statistic, the remaining rows the
    design density estimators.
    """

    S: np.ndarray
    Theta: np.ndarray
    zeta: np.ndarray
    n_stat: int
    intercept: bool = False

    @property
    def d(self) -> int:
        return self.Theta.shape[1]

    def __len__(self) -> int:
        return self.S.size

    def _subset(self, idx) -> "ProjectedSample":
        return ProjectedSample(self.S[idx], self.Theta[idx], self.zeta[idx], 0, self.intercept)

    def statistic_half(self) -> "ProjectedSample":
        sub = self._subset(slice(0, self.n_stat))
        object.__setattr__(sub, "n_stat", self.n_stat)
        return sub

    def estimation_half(self) -> "ProjectedSample":
        return self._subset(slice(self.n_stat, None))


def normalize(raw: RawDataset, seed: int | None = None, randomize_signs: bool | None = None,
              split: bool = True) -> ProjectedSample:
    """Map ``(X_i, Y_i)`` to ``(S_i, Theta_i) = zeta_i (Y_i, X_i) / |X_i|``.

    Signs ``zeta_i`` are Rademacher draws in the intercept model (or when
    ``randomize_signs`` is set) and identically one otherwise.  With ``split``
    the first half of the rows is tagged for the statistic.
    """
    norms = np.linalg.norm(raw.X, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise ValueError(f"design row {zero[0]} has zero norm")
    if randomize_signs is None:
        randomize_signs = raw.intercept
    n = len(raw)
    if randomize_signs:
        rng = np.random.default_rng(seed)
        zeta = rng.choice(np.array([-1.0, 1.0]), size=n)
    else:
        zeta = np.ones(n)
    S = zeta * raw.Y / norms
    Theta = (zeta / norms)[:, None] * raw.X
    n_stat = n // 2 if split else n
    return ProjectedSample(S, Theta, zeta, n_stat, raw.intercept)


# --- spheres --------------------------------------------------------------------


def sphere_grid(d: int, resolution: int) -> np.ndarray:
    """Equally spaced angles on S^1 or a Fibonacci lattice on S^2."""
    if resolution < 1:
        raise ValueError("resolution must be positive")
    if d == 2:
        ang = 2.0 * math.pi * np.arange(resolution) / resolution
        pts = np.column_stack([np.cos(ang), np.sin(ang)])
        # exact quarter turns instead of 6e-17 residue
        pts[np.abs(pts) < 1e-15] = 0.0
        return pts
    if d == 3:
        i = np.arange(resolution) + 0.5
        polar = np.arccos(1.0 - 2.0 * i / resolution)
        azimuth = math.pi * (1.0 + math.sqrt(5.0)) * i
        return np.column_stack([np.cos(azimuth) * np.sin(polar), np.sin(azimuth) * np.sin(polar), np.cos(polar)])
    raise ValueError(f"sphere grids are provided for d in {{2, 3}} only (got d={d}); pass explicit directions instead")


def sphere_quadrature(d: int, resolution: int, rule: str | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Quadrature nodes and weights on the sphere; weights sum to ``|S^(d-1)|``.

    d=2 uses equal angles.  For d=3 the default ``"gauss"`` rule takes
    Gauss-Legendre nodes in the polar cosine times ``2m`` equal azimuths with
    ``m = round(sqrt(resolution / 2))``; it integrates low-degree polynomials
    exactly, so rotational symmetries hold to rounding error.  ``"fibonacci"``
    gives the equal-weight Fibonacci lattice.
    """
    if d == 2 or rule == "fibonacci":
        nodes = sphere_grid(d, resolution)
        return nodes, np.full(len(nodes), sphere_volume(d - 1) / len(nodes))
    if d != 3:
        raise ValueError(f"sphere quadrature is provided for d in {{2, 3}} only (got d={d})")
    if rule not in (None, "gauss"):
        raise ValueError(f"unknown sphere rule {rule!r}; use 'gauss' or 'fibonacci'")
    m = max(2, int(round(math.sqrt(resolution / 2.0))))
    z, wz = np.polynomial.legendre.leggauss(m)
    phi = 2.0 * math.pi * (np.arange(2 * m) + 0.5) / (2 * m)
    zz, pp = np.meshgrid(z, phi, indexing="ij")
    r = np.sqrt(1.0 - zz**2)
    nodes = np.column_stack([(r * np.cos(pp)).ravel(), (r * np.sin(pp)).ravel(), zz.ravel()])
    weights = np.repeat(wz * (2.0 * math.pi / (2 * m)), 2 * m)
    return nodes, weights


def covering_radius(points: np.ndarray, n_probe: int = 20000) -> float:
    """Largest geodesic distance from a probe point to its nearest grid point."""
    points = np.asarray(points, dtype=float)
    d = points.shape[1]
    probe = sphere_grid(d, n_probe) if d in (2, 3) else None
    if d == 2:
        # rotate by half a probe step so no probe coincides with an equal-angle grid
        a = math.pi / n_probe
        probe = probe @ np.array([[math.cos(a), math.sin(a)], [-math.sin(a), math.cos(a)]])
    worst = 0.0
    for chunk in np.array_split(probe, max(1, n_probe // 2000)):
        best = np.clip(chunk @ points.T, -1.0, 1.0).max(axis=1)
        worst = max(worst, float(np.arccos(best.min())))
    return worst


def axis_directions(d: int) -> list[np.ndarray]:
    """The ``2d`` directions ``+e_1, -e_1, ..., +e_d, -e_d``."""
    out = []
    for i in range(d):
        for sign in (1.0, -1.0):
            e = np.zeros(d)
            e[i] = sign
            out.append(e)
    return out


def mode_scan_testpoints(b0, scales, directions=None, c_factor: float = 3.0,
                         offset: float = 2.0) -> list[TestPoint]:
    """Test points on rays out of ``b0``: ``t = b0 + offset * h * v`` with direction ``v``.

    ``offset=2`` is the closest admissible distance for localizing a mode;
    ``offset=1`` gives the simpler families ``t = b0 + h v`` used in the
    simulation study.  ``directions`` is either a list of unit vectors, a
    mapping from scale to such a list, or ``None`` for the axis directions.
    """
    if c_factor <= 2.0:
        raise ValueError(f"c_factor must exceed 2, got {c_factor}")
    if offset <= 0 or offset > c_factor:
        raise ValueError(f"offset multiplier must lie in (0, c_factor], got {offset}")
    b0 = np.asarray(b0, dtype=float).ravel()
    points = []
    for h in scales:
        dirs = directions.get(h) if isinstance(directions, dict) else directions
        if dirs is None:
            dirs = axis_directions(b0.size)
        for v in dirs:
            v = np.asarray(v, dtype=float)
            v = v / np.linalg.norm(v)
            points.append(TestPoint(b0 + offset * h * v, h, v))
    return points
