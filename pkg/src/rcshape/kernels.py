"""Test function, reduced radial kernel and the tabulated Radon-filtered kernel.

The local statistics only ever touch the test function through the
one-dimensional kernel ``psi_d = H_d phi_tilde^(d-1)``, where ``phi_tilde`` is
the reduced kernel

    phi_tilde(z) = int_0^inf r^(d-2) d/dz phi(sqrt(z^2 + r^2)) dr

and ``H_d`` is the Hilbert transform for even ``d`` and the identity for odd
``d``.  Everything here is computed once per dimension and cached.
"""

from __future__ import annotations

import functools
import math
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from numpy.polynomial import polynomial as P
from scipy import integrate
from scipy.special import gamma

__all__ = [
    "TestFunctionSpec",
    "TestPoint",
    "KernelTable",
    "DEFAULT_PHI",
    "sphere_volume",
    "eval_phi",
    "eval_phi_bump",
    "eval_phi_tilde",
    "eval_phi_tilde_deriv",
    "hilbert_transform",
    "build_kernel_table",
    "c_d",
]


def _default_shape() -> np.ndarray:
    # (56x^3 + 21x^2 + 6x + 1)(1 - x)^6, ascending coefficients
    return P.polymul([1.0, 6.0, 21.0, 56.0], P.polypow([1.0, -1.0], 6))


@dataclass(frozen=True)
class TestFunctionSpec:
    """Radial test function ``phi`` on [0, 1], polynomial inside its support.

    ``shape`` holds the ascending coefficients of the unnormalized polynomial;
    ``normalizing_constant`` is filled in so that ``int_0^1 phi = 1``.
    """

    __test__ = False  # not a pytest class

    shape: tuple[float, ...] = field(default_factory=lambda: tuple(_default_shape()))
    normalizing_constant: float = 0.0

    def __post_init__(self):
        if self.normalizing_constant <= 0.0:
            # exact rational sum: the alternating power-basis terms cancel badly in floating point
            total = sum(Fraction(float(a)) / (k + 1) for k, a in enumerate(self.shape))
            object.__setattr__(self, "normalizing_constant", float(1 / total))

    @property
    def support_radius(self) -> float:
        return 1.0

    @property
    def coefficients(self) -> np.ndarray:
        """Ascending coefficients of the normalized ``phi`` on [0, 1]."""
        return self.normalizing_constant * np.asarray(self.shape, dtype=float)


DEFAULT_PHI = TestFunctionSpec()


@dataclass(frozen=True)
class TestPoint:
    """Index ``(t, h, v)`` of one local test: location, scale, unit direction."""

    __test__ = False

    t: tuple[float, ...]
    h: float
    v: tuple[float, ...]

    def __post_init__(self):
        t = tuple(float(x) for x in np.ravel(self.t))
        v = np.asarray(np.ravel(self.v), dtype=float)
        if len(t) != v.size:
            raise ValueError(f"t has dimension {len(t)} but v has {v.size}")
        if not self.h > 0:
            raise ValueError(f"scale h must be positive, got {self.h}")
        norm = float(np.linalg.norm(v))
        if norm == 0.0:
            raise ValueError("direction v must be non-zero")
        if abs(norm - 1.0) > 1e-12:
            v = v / norm
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "v", tuple(float(x) for x in v))
        object.__setattr__(self, "h", float(self.h))

    @property
    def dim(self) -> int:
        return len(self.t)

    def in_region(self, a1, a2, tol: float = 1e-12) -> bool:
        """Whether ``a1 + h <= t <= a2 - h`` componentwise."""
        t = np.asarray(self.t)
        return bool(np.all(t >= np.asarray(a1) + self.h - tol) and np.all(t <= np.asarray(a2) - self.h + tol))

    def to_dict(self) -> dict:
        return {"t": list(self.t), "h": self.h, "v": list(self.v)}


def sphere_volume(k: int) -> float:
    """Surface area of the unit sphere S^k in R^(k+1); ``S^0`` has two points."""
    if k == 0:
        return 2.0
    return 2.0 * math.pi ** ((k + 1) / 2) / gamma((k + 1) / 2)


def eval_phi(x, spec: TestFunctionSpec = DEFAULT_PHI):
    """Evaluate ``phi`` (vectorized); zero outside [0, 1]."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("phi is defined on [0, inf)")
    out = np.where(x <= 1.0, P.polyval(np.minimum(x, 1.0), spec.coefficients), 0.0)
    return out if out.ndim else float(out)


def eval_phi_bump(b, tp: TestPoint, d: int, spec: TestFunctionSpec = DEFAULT_PHI):
    """Radial bump ``phi_{t,h}(b) = phi(|b - t| / h) / (h^d Vol(S^(d-2)))``.

    ``b`` may be a single point or an array of shape ``(m, d)``.
    """
    b = np.asarray(b, dtype=float)
    r = np.linalg.norm(b - np.asarray(tp.t), axis=-1) / tp.h
    return eval_phi(r, spec) / (tp.h**d * sphere_volume(d - 2))


# --- reduced kernel -----------------------------------------------------------
#
# phi(sqrt(z^2 + r^2)) = sum_j a_j Q^(j/2) with Q = z^2 + r^2.  A z-derivative of
# a monomial coef * z^p * Q^e is p z^(p-1) Q^e + 2e z^(p+1) Q^(e-1), so every
# derivative is a finite sum of such terms and can be integrated over r directly.


@functools.lru_cache(maxsize=None)
def _derivative_terms(shape: tuple[float, ...], norm: float, order: int):
    coeffs = norm * np.asarray(shape)
    terms: dict[tuple[int, float], float] = defaultdict(float)
    for j, a in enumerate(coeffs):
        if a == 0.0 or j == 0:
            continue
        current = {(0, j / 2.0): float(a)}
        for _ in range(order):
            nxt: dict[tuple[int, float], float] = defaultdict(float)
            for (p, e), c in current.items():
                if p > 0:
                    nxt[(p - 1, e)] += c * p
                if e != 0.0:
                    nxt[(p + 1, e - 1.0)] += c * 2.0 * e
            current = {k: v for k, v in nxt.items() if v != 0.0}
        for k, c in current.items():
            terms[k] += c
    keys = [k for k, c in terms.items() if abs(c) > 0.0]
    p = np.array([k[0] for k in keys], dtype=float)
    e = np.array([k[1] for k in keys], dtype=float)
    c = np.array([terms[k] for k in keys], dtype=float)
    return p, e, c


def _phi_tilde_derivs(z: np.ndarray, d: int, order: int, spec: TestFunctionSpec) -> np.ndarray:
    """k-th derivative of phi_tilde on |z| < 1 by r-quadrature of the closed-form integrand."""
    p, e, c = _derivative_terms(spec.shape, spec.normalizing_constant, order + 1)
    z = np.asarray(z, dtype=float)
    radius = np.sqrt(np.clip(1.0 - z**2, 0.0, None))

    def integrand(x):
        r = radius * x
        q = z**2 + r**2
        with np.errstate(divide="ignore", invalid="ignore"):
            vals = c[:, None] * z[None, :] ** p[:, None] * q[None, :] ** e[:, None]
        vals = np.where(np.isfinite(vals), vals, 0.0).sum(axis=0)
        return vals * r ** (d - 2) * radius

    value, _ = integrate.quad_vec(integrand, 0.0, 1.0, epsabs=1e-13, epsrel=1e-11, limit=400)
    return value


def eval_phi_tilde(z, d: int, spec: TestFunctionSpec = DEFAULT_PHI):
    """Reduced kernel ``phi_tilde(z)``; odd in ``z`` and zero for ``|z| >= 1``."""
    if d < 2:
        raise ValueError("dimension must be at least 2")
    z = np.atleast_1d(np.asarray(z, dtype=float))
    out = np.zeros_like(z)
    inside = np.abs(z) < 1.0
    if inside.any():
        def integrand(x, zz):
            radius = math.sqrt(1.0 - zz * zz)
            r = radius * x
            rho = math.sqrt(zz * zz + r * r)
            if rho == 0.0:
                return 0.0
            dphi = P.polyval(rho, P.polyder(spec.coefficients))
            return r ** (d - 2) * dphi * zz / rho * radius

        out[inside] = [
            integrate.quad(integrand, 0.0, 1.0, args=(zz,), epsabs=1e-14, epsrel=1e-12, limit=200)[0]
            for zz in z[inside]
        ]
    return out if out.size > 1 else float(out[0])


def eval_phi_tilde_deriv(z, d: int, order: int, spec: TestFunctionSpec = DEFAULT_PHI):
    """``order``-th derivative of ``phi_tilde``, differentiated under the integral sign.

    Orders above ``d + 1`` are rejected: boundedness of the derivative is only
    guaranteed up to that order.
    """
    if d < 2:
        raise ValueError("dimension must be at least 2")
    if not 0 <= order <= d + 1:
        raise ValueError(f"derivative order must lie in [0, {d + 1}] for d={d}, got {order}")
    z = np.atleast_1d(np.asarray(z, dtype=float))
    out = np.zeros_like(z)
    inside = np.abs(z) < 1.0
    if inside.any():
        out[inside] = _phi_tilde_derivs(z[inside], d, order, spec)
    return out if out.size > 1 else float(out[0])


# --- Hilbert transform ----------------------------------------------------------


def hilbert_transform(f, u=None, rtol: float = 1e-9) -> np.ndarray:
    """Principal-value Hilbert transform ``(1/pi) p.v. int f(s) / (u - s) ds`` on a grid.

    ``f`` holds samples on the uniform grid ``u`` and is taken to vanish
    outside it.  Pairing the nodes ``u -/+ m du`` turns the singular integral
    into ``(1/pi) int_0^inf (f(u - x) - f(u + x)) / x dx``, whose integrand is
    regular at ``x = 0`` with limit ``-2 f'(u)``; the trapezoid rule on that
    integral gives the sum over ``m >= 1`` plus the half-weight endpoint term.

    If ``u`` is omitted the grid is taken to have unit spacing.
    """
    f = np.asarray(f, dtype=float)
    n = f.size
    if u is None:
        du = 1.0
    else:
        u = np.asarray(u, dtype=float)
        if u.shape != f.shape:
            raise ValueError("f and u must have the same shape")
        steps = np.diff(u)
        du = float(steps.mean())
        if not np.allclose(steps, du, rtol=rtol, atol=0.0):
            raise ValueError("hilbert_transform requires a uniform grid")
    # Discrete kernel 1/m for m != 0; the du factors of ds and 1/(u - s) cancel.
    m = np.arange(-(n - 1), n, dtype=float)
    kernel = np.zeros_like(m)
    kernel[m != 0] = 1.0 / m[m != 0]
    out = np.convolve(f, kernel, mode="full")[n - 1 : 2 * n - 1]
    padded = np.concatenate([[0.0], f, [0.0]])
    endpoint = -(padded[2:] - padded[:-2]) / 2.0  # -du * f'(u) / du
    return (out + endpoint) / math.pi


# --- inversion constant -----------------------------------------------------------


def c_d(d: int) -> float:
    """Signed constant of the Radon inversion formula ``phi = c_d^-1 R* Lambda phi``."""
    if d < 2:
        raise ValueError("dimension must be at least 2")
    if d % 2:
        inv = (-1) ** ((d - 1) // 2) * 2.0**-d * math.pi ** (1 - d)
    else:
        inv = -((-1) ** (d // 2)) * 2.0**-d * math.pi ** (1 - d)
    return 1.0 / inv


# --- kernel table -------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class KernelTable:
    """Tabulated ``psi_d = H_d phi_tilde^(d-1)`` with linear interpolation.

    Beyond ``u_max`` the table is zero for odd ``d`` and follows a fitted
    ``C / |u|`` tail (separately on each side) for even ``d``.
    """

    dimension: int
    grid: np.ndarray
    psi_values: np.ndarray
    tail_left: float
    tail_right: float
    l2_norm_sq: float
    phi_tilde_l2_norm_sq: float

    @property
    def u_max(self) -> float:
        return float(self.grid[-1])

    @property
    def c_d(self) -> float:
        return c_d(self.dimension)

    @property
    def compact(self) -> bool:
        return self.dimension % 2 == 1

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        out = np.interp(u, self.grid, self.psi_values, left=0.0, right=0.0)
        if not self.compact:
            with np.errstate(divide="ignore"):
                out = np.where(u > self.u_max, self.tail_right / np.abs(u), out)
                out = np.where(u < -self.u_max, self.tail_left / np.abs(u), out)
        return out

    def to_csv(self, path) -> None:
        np.savetxt(path, np.column_stack([self.grid, self.psi_values]), delimiter=",",
                   header="u,psi", comments="", fmt="%.17g")


DEFAULT_GRIDS = {"even": (12.0, 32768), "odd": (1.0, 4096)}


def build_kernel_table(d: int, u_max: float | None = None, n_points: int | None = None,
                       spec: TestFunctionSpec = DEFAULT_PHI) -> KernelTable:
    """Tabulate ``psi_d`` on a uniform grid over ``[-u_max, u_max]``."""
    if d < 2:
        raise ValueError("dimension must be at least 2")
    default = DEFAULT_GRIDS["odd" if d % 2 else "even"]
    u_max = default[0] if u_max is None else float(u_max)
    n_points = default[1] if n_points is None else int(n_points)
    return _build_kernel_table(d, u_max, n_points, spec)


@functools.lru_cache(maxsize=16)
def _build_kernel_table(d: int, u_max: float, n_points: int, spec: TestFunctionSpec) -> KernelTable:
    if n_points < 16:
        raise ValueError("kernel table needs at least 16 points")
    if d % 2 == 0 and u_max < 1.0:
        raise ValueError("even-d tables must extend beyond the support of phi_tilde")
    grid = np.linspace(-u_max, u_max, n_points)
    du = grid[1] - grid[0]
    base = eval_phi_tilde_deriv(grid, d, d - 1, spec)
    phi_norm = float(np.sum(base**2) * du)
    if d % 2:
        psi = base
        tail_left = tail_right = 0.0
    else:
        psi = hilbert_transform(base, grid)
        fit = np.abs(grid) >= 0.9 * u_max
        tails = []
        for side in (grid < 0, grid > 0):
            sel = fit & side
            inv = 1.0 / np.abs(grid[sel])
            tails.append(float(np.sum(psi[sel] * inv) / np.sum(inv**2)))
        tail_left, tail_right = tails
    l2 = float(np.sum(psi**2) * du)
    if d % 2 == 0:
        l2 += (tail_left**2 + tail_right**2) / u_max
    psi.setflags(write=False)
    grid.setflags(write=False)
    return KernelTable(d, grid, psi, tail_left, tail_right, l2, phi_norm)
