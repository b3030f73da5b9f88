"""Synthetic data for the random coefficients model ``Y = <beta, X>``."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .geometry import RawDataset

__all__ = ["BetaSpec", "DesignSpec", "DGPSpec", "sample_dgp", "sample_beta", "sample_design",
           "builtin_scenarios", "get_scenario", "spec_from_dict"]


def _tuple(x):
    if isinstance(x, (list, tuple, np.ndarray)):
        return tuple(_tuple(e) for e in x)
    return float(x) if isinstance(x, (int, float, np.floating, np.integer)) and not isinstance(x, bool) else x


@dataclass(frozen=True)
class BetaSpec:
    """Law of the random coefficients.

    kind ``mixture``: Gaussian mixture with ``weights``, ``means``, ``covs``.
    kind ``product``: independent marginals, each ``("normal", mean, var)``,
    ``("exponential", mean)`` or ``("uniform", lo, hi)``.
    kind ``uniform``: uniform on the box ``[low, high]``.
    kind ``point``: deterministic ``beta = point``.
    """

    kind: str
    weights: tuple = ()
    means: tuple = ()
    covs: tuple = ()
    marginals: tuple = ()
    low: tuple = ()
    high: tuple = ()
    point: tuple = ()

    def __post_init__(self):
        for f in dataclasses.fields(self):
            if f.name != "kind":
                object.__setattr__(self, f.name, _tuple(getattr(self, f.name)))

    @property
    def dim(self) -> int:
        if self.kind == "mixture":
            return len(self.means[0])
        if self.kind == "product":
            return len(self.marginals)
        if self.kind == "uniform":
            return len(self.low)
        return len(self.point)

    def problems(self) -> list[str]:
        out = []
        if self.kind == "mixture":
            if not self.weights or len(self.weights) != len(self.means) or len(self.means) != len(self.covs):
                out.append("beta.weights, beta.means and beta.covs must have one entry per component")
            elif abs(sum(self.weights) - 1.0) > 1e-9 or min(self.weights) < 0:
                out.append(f"beta.weights must be non-negative and sum to 1 (sum={sum(self.weights)})")
            for k, c in enumerate(self.covs):
                c = np.atleast_2d(np.asarray(c, dtype=float))
                if c.shape != (len(self.means[0]),) * 2 or not np.allclose(c, c.T):
                    out.append(f"beta.covs[{k}] must be a symmetric {len(self.means[0])}x{len(self.means[0])} matrix")
                elif np.linalg.eigvalsh(c).min() <= 0:
                    out.append(f"beta.covs[{k}] is not positive definite")
        elif self.kind == "product":
            if not self.marginals:
                out.append("beta.marginals is empty")
            for k, m in enumerate(self.marginals):
                if m[0] not in ("normal", "exponential", "uniform"):
                    out.append(f"beta.marginals[{k}] has unknown law {m[0]!r}")
                elif m[0] == "normal" and m[2] <= 0:
                    out.append(f"beta.marginals[{k}] variance must be positive")
                elif m[0] == "exponential" and m[1] <= 0:
                    out.append(f"beta.marginals[{k}] mean must be positive")
                elif m[0] == "uniform" and not m[1] < m[2]:
                    out.append(f"beta.marginals[{k}] bounds must be ordered")
        elif self.kind == "uniform":
            if len(self.low) != len(self.high) or not all(a < b for a, b in zip(self.low, self.high)):
                out.append("beta.low and beta.high must have equal length and low < high")
        elif self.kind == "point":
            if not self.point:
                out.append("beta.point is empty")
        else:
            out.append(f"beta.kind {self.kind!r} is not one of mixture, product, uniform, point")
        return out


@dataclass(frozen=True)
class DesignSpec:
    """Law of the regressors (of ``X_2..X_d`` in the intercept model).

    kinds: ``uniform`` box ``[low, high]``, ``normal(mean, cov)``,
    ``cauchy(mean, cov)`` (multivariate t with one degree of freedom) and
    ``sphere`` (``X`` uniform on the unit sphere, no intercept).
    """

    kind: str
    low: tuple = ()
    high: tuple = ()
    mean: tuple = ()
    cov: tuple = ()

    def __post_init__(self):
        for name in ("low", "high", "mean", "cov"):
            object.__setattr__(self, name, _tuple(getattr(self, name)))

    def problems(self, dim: int) -> list[str]:
        out = []
        if self.kind == "uniform":
            if len(self.low) != dim or len(self.high) != dim:
                out.append(f"design.low/high must have length {dim}")
            elif not all(a < b for a, b in zip(self.low, self.high)):
                out.append("design box bounds must satisfy low < high")
        elif self.kind in ("normal", "cauchy"):
            if len(self.mean) != dim:
                out.append(f"design.mean must have length {dim}")
            c = np.atleast_2d(np.asarray(self.cov, dtype=float)) if self.cov else None
            if c is None or c.shape != (dim, dim):
                out.append(f"design.cov must be a {dim}x{dim} matrix")
            elif not np.allclose(c, c.T) or np.linalg.eigvalsh(c).min() <= 0:
                out.append("design.cov must be symmetric positive definite")
        elif self.kind != "sphere":
            out.append(f"design.kind {self.kind!r} is not one of uniform, normal, cauchy, sphere")
        return out


@dataclass(frozen=True)
class DGPSpec:
    beta: BetaSpec
    design: DesignSpec
    d: int
    intercept: bool = False
    n: int = 500
    seed: int = 0
    anchor: str = ""
    retain_beta: bool = False

    def validate(self) -> None:
        issues = []
        if self.d < 2:
            issues.append("d must be at least 2")
        if self.n < 1:
            issues.append("n must be positive")
        issues += self.beta.problems()
        if not self.beta.problems() and self.beta.dim != self.d:
            issues.append(f"beta has dimension {self.beta.dim} but d = {self.d}")
        issues += self.design.problems(self.d - 1 if self.intercept else self.d)
        if self.intercept and self.design.kind == "sphere":
            issues.append("design.kind 'sphere' is only available without intercept")
        if issues:
            raise ValueError("invalid DGP spec:\n  - " + "\n  - ".join(issues))

    def replace(self, **kw) -> "DGPSpec":
        return dataclasses.replace(self, **kw)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def spec_from_dict(d: dict) -> DGPSpec:
    d = dict(d)
    d["beta"] = BetaSpec(**d["beta"])
    d["design"] = DesignSpec(**d["design"])
    return DGPSpec(**d)


def sample_beta(spec: BetaSpec, m: int, rng: np.random.Generator) -> np.ndarray:
    if spec.kind == "mixture":
        w = np.asarray(spec.weights)
        comp = rng.choice(len(w), size=m, p=w / w.sum())
        out = np.empty((m, spec.dim))
        for k in range(len(w)):
            idx = comp == k
            out[idx] = rng.multivariate_normal(spec.means[k], np.asarray(spec.covs[k]), size=int(idx.sum()),
                                               method="cholesky")
        return out
    if spec.kind == "product":
        cols = []
        for law in spec.marginals:
            if law[0] == "normal":
                cols.append(rng.normal(law[1], np.sqrt(law[2]), m))
            elif law[0] == "exponential":
                cols.append(rng.exponential(law[1], m))
            else:
                cols.append(rng.uniform(law[1], law[2], m))
        return np.column_stack(cols)
    if spec.kind == "uniform":
        return rng.uniform(spec.low, spec.high, (m, spec.dim))
    return np.tile(np.asarray(spec.point, dtype=float), (m, 1))


def sample_design(spec: DesignSpec, m: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    if spec.kind == "uniform":
        return rng.uniform(spec.low, spec.high, (m, dim))
    if spec.kind == "sphere":
        z = rng.standard_normal((m, dim))
        return z / np.linalg.norm(z, axis=1)[:, None]
    chol = np.linalg.cholesky(np.asarray(spec.cov, dtype=float))
    z = rng.standard_normal((m, dim)) @ chol.T
    if spec.kind == "cauchy":
        z /= np.abs(rng.standard_normal(m))[:, None]
    return np.asarray(spec.mean) + z


def sample_dgp(spec: DGPSpec, n: int | None = None, seed: int | None = None) -> RawDataset:
    """Draw ``2n`` rows: the first ``n`` feed the statistic, the rest the density estimators."""
    spec.validate()
    n = spec.n if n is None else n
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    m = 2 * n
    beta = sample_beta(spec.beta, m, rng)
    if spec.intercept:
        X = np.column_stack([np.ones(m), sample_design(spec.design, m, spec.d - 1, rng)])
    else:
        X = sample_design(spec.design, m, spec.d, rng)
    Y = np.einsum("ij,ij->i", beta, X)
    return RawDataset(X, Y, intercept=spec.intercept, beta=beta if spec.retain_beta else None)


# --- catalogue --------------------------------------------------------------------

_BOX3 = DesignSpec("uniform", low=(-5,) * 3, high=(5,) * 3)
_BOX2 = DesignSpec("uniform", low=(-5,) * 2, high=(5,) * 2)
_SKEW3 = DesignSpec("normal", mean=(3, 0, 0), cov=2 * np.eye(3))
_CAUCHY2 = DesignSpec("cauchy", mean=(0, 0), cov=np.eye(2))
_GAUSS2 = DesignSpec("normal", mean=(0, 0), cov=np.eye(2))
_SPHERE = DesignSpec("sphere")
_NULL3 = BetaSpec("uniform", low=(-5,) * 3, high=(5,) * 3)
_NULL2 = BetaSpec("uniform", low=(-5,) * 2, high=(5,) * 2)
_STD3 = BetaSpec("mixture", weights=(1.0,), means=((0, 0, 0),), covs=(np.eye(3),))


def builtin_scenarios() -> dict[str, DGPSpec]:
    """Named data-generating processes of the simulation study."""
    trimodal = BetaSpec("mixture", weights=(1 / 3, 1 / 3, 1 / 3),
                        means=((-0.4, -0.57), (1.5, -0.52), (0.45, 1.6)),
                        covs=(0.2 * np.eye(2), 0.2 * np.eye(2), 0.15 * np.eye(2)))
    bimodal = BetaSpec("mixture", weights=(0.5, 0.5), means=((0, 0), (2, 0)),
                       covs=(np.diag([0.05, 0.4]), 0.1 * np.eye(2)))
    two_mass = BetaSpec("mixture", weights=(0.5, 0.5), means=((0, 0, 0), (2, 0, 0)),
                        covs=(0.1 * np.eye(3), 0.1 * np.eye(3)))

    def skewed(mean):
        return BetaSpec("product", marginals=(("exponential", mean), ("normal", 0.0, 0.1), ("normal", 0.0, 0.1)))

    out = {
        "trimodal": DGPSpec(trimodal, _SPHERE, 2, n=20000, anchor="trimodal monotonicity map"),
        "uniform-design-null": DGPSpec(_NULL3, _BOX3, 3, anchor="mode test, uniform design, level"),
        "uniform-design-power": DGPSpec(_STD3, _BOX3, 3, anchor="mode test, uniform design, power"),
        "normal-design-null": DGPSpec(_NULL3, _SKEW3, 3, anchor="mode test, shifted normal design, level"),
        "normal-design-power": DGPSpec(_STD3, _SKEW3, 3, anchor="mode test, shifted normal design, power"),
        "cauchy-intercept-null": DGPSpec(_NULL3, _CAUCHY2, 3, intercept=True, n=250,
                                      anchor="intercept model, bivariate Cauchy design, level"),
        "cauchy-intercept-power": DGPSpec(_STD3, _CAUCHY2, 3, intercept=True,
                                       anchor="intercept model, bivariate Cauchy design, power"),
        "normal-intercept-null": DGPSpec(_NULL3, _GAUSS2, 3, intercept=True, anchor="intercept model, normal design"),
        "normal-intercept-power": DGPSpec(_STD3, _GAUSS2, 3, intercept=True, anchor="intercept model, normal design"),
        "box-intercept-null": DGPSpec(_NULL3, _BOX2, 3, intercept=True, anchor="intercept model, uniform design"),
        "box-intercept-power": DGPSpec(_STD3, _BOX2, 3, intercept=True, anchor="intercept model, uniform design"),
        "bimodal": DGPSpec(bimodal, _SPHERE, 2, n=2000, anchor="multiscale mode separation"),
        "circle-null": DGPSpec(_NULL2, _SPHERE, 2, n=2000, anchor="uniform null on the circle design"),
        "ols-normal": DGPSpec(_STD3, _CAUCHY2, 3, intercept=True, n=1000, anchor="OLS comparison, normal coefficients"),
        "ols-two-mass": DGPSpec(two_mass, _CAUCHY2, 3, intercept=True, n=1000, anchor="OLS comparison, two point masses"),
        "ols-skewed": DGPSpec(skewed(2.0), _CAUCHY2, 3, intercept=True, n=1000,
                              anchor="OLS comparison, exponential with mean 2"),
        "ols-skewed-rate2": DGPSpec(skewed(0.5), _CAUCHY2, 3, intercept=True, n=1000,
                                    anchor="OLS comparison, exponential with rate 2"),
        "gauss-circle": DGPSpec(BetaSpec("mixture", weights=(1.0,), means=((0, 0),), covs=(0.2 * np.eye(2),)),
                                _SPHERE, 2, n=100000, anchor="expectation identity check"),
    }
    return out


def get_scenario(name: str) -> DGPSpec:
    cat = builtin_scenarios()
    if name not in cat:
        raise KeyError(f"unknown scenario {name!r}; available: {', '.join(sorted(cat))}")
    return cat[name]
