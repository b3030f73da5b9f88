"""Desk-scale reruns of the simulation tables with binomial error bars."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .datagen import get_scenario
from .design_density import DesignConfig, cauchy_ftheta
from .limit_sim import calibrated_quantiles
from .runtime import child_seed
from .testing import QuantileSettings, detection_rates, mode_family, theoretical_replicates

__all__ = ["REFERENCE_TABLES", "TableRow", "reproduce_table", "format_rows", "binomial_se"]

# reference values in percent, keyed by table, then n, then column
REFERENCE_TABLES = {
    "level-power-uniform": {
        250: {"power": 9.0, "level (cal.)": 4.5, "power (cal.)": 91.0, "normal level (cal.)": 4.7,
              "normal power (cal.)": 66.1},
        500: {"power": 15.7, "level (cal.)": 4.6, "power (cal.)": 99.1, "normal level (cal.)": 4.5,
              "normal power (cal.)": 78.8},
        1000: {"power": 79.1, "level (cal.)": 5.0, "power (cal.)": 100.0, "normal level (cal.)": 4.5,
               "normal power (cal.)": 90.6},
    },
    "level-power-cauchy": {
        250: {"level (cal.)": 4.8, "power (cal.)": 91.3, "known level (cal.)": 5.0, "known power (cal.)": 93.3},
        500: {"level (cal.)": 5.2, "power (cal.)": 99.0, "known level (cal.)": 5.2, "known power (cal.)": 99.7},
        1000: {"level (cal.)": 5.3, "power (cal.)": 100.0, "known level (cal.)": 5.3, "known power (cal.)": 100.0},
    },
    "multiscale": {
        2000: {"h=2.5": 100.0, "h=1": 0.0, "h=0.5": 0.0, "h in {0.5, 1}": 25.0},
        5000: {"h=2.5": 100.0, "h=1": 0.0, "h=0.5": 1.0, "h in {0.5, 1}": 86.3},
        15000: {"h=2.5": 100.0, "h=1": 0.0, "h=0.5": 68.7, "h in {0.5, 1}": 100.0},
    },
}

DEFAULT_N = {"level-power-uniform": (250, 500), "level-power-cauchy": (250, 500), "multiscale": (2000,)}


def binomial_se(rate: float, reps: int) -> float:
    return math.sqrt(max(rate * (1.0 - rate), 0.0) / reps)


@dataclass(frozen=True)
class TableRow:
    table: str
    n: int
    column: str
    reference: float
    estimate: float
    se: float
    reps: int

    def to_dict(self) -> dict:
        return {"table": self.table, "n": self.n, "column": self.column, "reference_percent": self.reference,
                "estimate_percent": round(100 * self.estimate, 4), "se_percent": round(100 * self.se, 4),
                "reps": self.reps}


def _calibrated_pair(null, power, n, reps, seed, tps, design_config, workers, alpha=0.05):
    cal = calibrated_quantiles(tps, null, alpha, max(reps, 200), child_seed(seed, 0), n, design_config,
                               workers=workers)
    lev = detection_rates(null, n, reps, child_seed(seed, 1), tps, cal.kappa_alpha, design_config, workers=workers)
    pow_ = detection_rates(power, n, reps, child_seed(seed, 2), tps, cal.kappa_alpha, design_config, workers=workers)
    return lev["rate"], pow_["rate"], cal.kappa_alpha


def reproduce_table(table: str, reps: int = 200, seed: int = 0, ns=None, workers: int | None = None,
                    alpha: float = 0.05, n_mc: int = 2000) -> list[TableRow]:
    if table not in REFERENCE_TABLES:
        raise KeyError(f"unknown table {table!r}; choose from {', '.join(REFERENCE_TABLES)}")
    ns = tuple(ns or DEFAULT_N[table])
    rows: list[TableRow] = []

    def add(n, col, rate):
        rows.append(TableRow(table, n, col, REFERENCE_TABLES[table].get(n, {}).get(col, float("nan")), rate,
                             binomial_se(rate, reps), reps))

    if table == "level-power-uniform":
        tps = list(mode_family(np.zeros(3), [1.0], offset=1.0).points)
        for n in ns:
            s = child_seed(seed, n)
            null, power = get_scenario("uniform-design-null"), get_scenario("uniform-design-power")
            minus, _ = theoretical_replicates(power, n, reps, child_seed(s, 9), tps, alpha,
                                              quantiles=QuantileSettings(n_mc=n_mc), workers=workers)
            add(n, "power", float(minus.all(axis=1).mean()))
            lev, pw, _ = _calibrated_pair(null, power, n, reps, child_seed(s, 1), tps, DesignConfig(), workers, alpha)
            add(n, "level (cal.)", lev)
            add(n, "power (cal.)", pw)
            null, power = get_scenario("normal-design-null"), get_scenario("normal-design-power")
            lev, pw, _ = _calibrated_pair(null, power, n, reps, child_seed(s, 2), tps, DesignConfig(), workers, alpha)
            add(n, "normal level (cal.)", lev)
            add(n, "normal power (cal.)", pw)
    elif table == "level-power-cauchy":
        tps = list(mode_family(np.zeros(3), [1.0], offset=1.0).points)
        null, power = get_scenario("cauchy-intercept-null"), get_scenario("cauchy-intercept-power")
        for n in ns:
            s = child_seed(seed, n)
            lev, pw, _ = _calibrated_pair(null, power, n, reps, child_seed(s, 1), tps, DesignConfig(), workers, alpha)
            add(n, "level (cal.)", lev)
            add(n, "power (cal.)", pw)
            known = DesignConfig(known_ftheta=cauchy_ftheta)
            lev, pw, _ = _calibrated_pair(null, power, n, reps, child_seed(s, 2), tps, known, workers, alpha)
            add(n, "known level (cal.)", lev)
            add(n, "known power (cal.)", pw)
    else:
        scales = [0.5, 1.0, 2.5]
        tps = list(mode_family(np.zeros(2), scales, offset=1.0).points)
        spec = get_scenario("bimodal")
        for n in ns:
            minus, _ = theoretical_replicates(spec, n, reps, child_seed(seed, n), tps, alpha,
                                              quantiles=QuantileSettings(n_mc=n_mc), workers=workers)
            rates = multiscale_rates(minus, tps)
            for col in ("h=2.5", "h=1", "h=0.5", "h in {0.5, 1}"):
                add(n, col, rates[col])
    return rows


def multiscale_rates(minus: np.ndarray, tps) -> dict[str, float]:
    """Per-scale full-rejection rates and the 'every direction at h=0.5 or h=1' rate."""
    h = np.array([tp.h for tp in tps])
    dirs = [tp.v for tp in tps]
    out = {}
    for scale, name in ((2.5, "h=2.5"), (1.0, "h=1"), (0.5, "h=0.5")):
        out[name] = float(minus[:, h == scale].all(axis=1).mean())
    covered = np.ones(minus.shape[0], dtype=bool)
    for v in sorted(set(dirs)):
        cols = [j for j, tp in enumerate(tps) if tp.v == v and tp.h in (0.5, 1.0)]
        covered &= minus[:, cols].any(axis=1)
    out["h in {0.5, 1}"] = float(covered.mean())
    return out


def format_rows(rows: list[TableRow]) -> str:
    lines = [f"{'n':>6}  {'column':<22} {'ref. %':>8} {'rerun %':>8} {'+- se':>7} {'reps':>5}"]
    for r in rows:
        lines.append(f"{r.n:>6}  {r.column:<22} {r.reference:>8.1f} {100 * r.estimate:>8.1f} {100 * r.se:>7.1f} {r.reps:>5}")
    return "\n".join(lines)
