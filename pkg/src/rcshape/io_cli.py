"""Command-line interface, run configuration and dataset files."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import platform
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy
import yaml

from . import __version__
from .datagen import builtin_scenarios, get_scenario, sample_dgp
from .design_density import DesignConfig, cauchy_ftheta, fit_design
from .geometry import RawDataset, normalize, sphere_grid
from .kernels import build_kernel_table
from .limit_sim import NoiseSpec, QuantileResult, calibrated_quantiles
from .reproduce import REFERENCE_TABLES, format_rows, reproduce_table
from .runtime import default_workers
from .statistics import QuadSpec
from .testing import (QuantileSettings, _jsonable, global_mode_scan, mode_family, mode_test,
                      monotonicity_map, multiscale_mode_test, ols_baseline)

__all__ = ["ConfigError", "DiagnosticError", "RunConfig", "load_dataset", "save_dataset", "load_config",
           "main", "cli_run"]

log = logging.getLogger("rcshape")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class ConfigError(ValueError):
    """Invalid configuration or input; names the offending key, file or row."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


class DiagnosticError(RuntimeError):
    """A numerical diagnostic failed (e.g. directions without design support)."""


# --- datasets ----------------------------------------------------------------------------


def save_dataset(raw: RawDataset, path) -> None:
    """CSV with header ``x1..xd,y`` (plus ``beta1..betad`` when retained); floats in shortest round-trip form."""
    d = raw.d
    header = [f"x{i + 1}" for i in range(d)] + ["y"]
    cols = [raw.X, raw.Y[:, None]]
    if raw.beta is not None:
        header += [f"beta{i + 1}" for i in range(d)]
        cols.append(raw.beta)
    data = np.hstack(cols)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in data:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def load_dataset(path, intercept: bool = False) -> RawDataset:
    """Read a dataset CSV; with ``intercept`` the column ``x1`` must be identically one."""
    path = Path(path)
    if not path.exists():
        raise ConfigError("data", f"file {path} does not exist")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ConfigError("data", f"{path} is empty") from None
        header = [h.strip() for h in header]
        xs = [h for h in header if h.startswith("x")]
        d = len(xs)
        expected = [f"x{i + 1}" for i in range(d)] + ["y"]
        if header[: d + 1] != expected:
            raise ConfigError("data", f"{path}: header must start with {','.join(expected)}, got {','.join(header)}")
        has_beta = header[d + 1:] == [f"beta{i + 1}" for i in range(d)] and len(header) == 2 * d + 1
        if len(header) not in (d + 1, 2 * d + 1) or (len(header) == 2 * d + 1 and not has_beta):
            raise ConfigError("data", f"{path}: unexpected columns {header[d + 1:]}")
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(header):
                raise ConfigError("data", f"{path} line {lineno}: expected {len(header)} fields, got {len(rec)}")
            try:
                rows.append([float(x) for x in rec])
            except ValueError as exc:
                raise ConfigError("data", f"{path} line {lineno}: {exc}") from None
    if not rows:
        raise ConfigError("data", f"{path} has no data rows")
    arr = np.array(rows)
    try:
        return RawDataset(arr[:, :d], arr[:, d], intercept=intercept, beta=arr[:, d + 1:] if has_beta else None)
    except ValueError as exc:
        msg = str(exc)
        if "row" in msg:
            # report the file line (header is line 1)
            idx = int(msg.split("row ")[1].split()[0])
            msg = f"{msg} (file line {idx + 2})"
        raise ConfigError("data", f"{path}: {msg}") from None


# --- configuration ---------------------------------------------------------------------------


@dataclass
class RunConfig:
    """Settings shared by all subcommands; a YAML or JSON file may provide any of them."""

    seed: int = 0
    alpha: float = 0.05
    intercept: bool = False
    data: str | None = None
    scenario: str | None = None
    scenario_null: str | None = None
    n: int | None = None
    out: str | None = None
    h_star: float | str | None = "auto"
    h_plus: float | str | None = "auto"
    u_max: float | None = None
    n_points: int | None = None
    quantile_mode: str = "theoretical"
    n_mc: int = 5000
    method: str = "gram"
    n_reps: int = 200
    sphere_resolution: int | None = None
    s_step_factor: float = 0.25
    b0: list | None = None
    scales: list | None = None
    offset: float | None = None
    a1: list | None = None
    a2: list | None = None
    h0: float = 0.5
    width: float | None = None
    rule: str = "cover"
    subset: list | None = None
    kappa_file: str | None = None
    cache: str | None = None
    workers: int | None = None

    def validate(self) -> None:
        if not isinstance(self.seed, int):
            raise ConfigError("seed", f"must be an integer, got {self.seed!r}")
        if not 0.0 < float(self.alpha) < 1.0:
            raise ConfigError("alpha", f"must lie in (0, 1), got {self.alpha}")
        if self.quantile_mode not in ("theoretical", "calibrated"):
            raise ConfigError("quantile_mode", f"must be 'theoretical' or 'calibrated', got {self.quantile_mode!r}")
        if self.method not in ("gram", "noise"):
            raise ConfigError("method", f"must be 'gram' or 'noise', got {self.method!r}")
        for key in ("h_star", "h_plus"):
            val = getattr(self, key)
            if val not in (None, "auto") and not (isinstance(val, (int, float)) and val > 0):
                raise ConfigError(key, f"must be 'auto' or a positive number, got {val!r}")
        if self.n_mc < 100:
            raise ConfigError("n_mc", f"must be at least 100, got {self.n_mc}")
        if self.data is not None and not Path(self.data).exists():
            raise ConfigError("data", f"file {self.data} does not exist")
        if self.kappa_file is not None and not Path(self.kappa_file).exists():
            raise ConfigError("kappa_file", f"file {self.kappa_file} does not exist")
        if self.scenario is not None and self.scenario not in builtin_scenarios():
            raise ConfigError("scenario", f"unknown scenario {self.scenario!r}")
        if self.scenario_null is not None and self.scenario_null not in builtin_scenarios():
            raise ConfigError("scenario_null", f"unknown scenario {self.scenario_null!r}")
        if self.workers is not None and self.workers < 1:
            raise ConfigError("workers", f"must be at least 1, got {self.workers}")
        if self.rule not in ("cover", "any", "all"):
            raise ConfigError("rule", f"must be 'cover', 'any' or 'all', got {self.rule!r}")

    def design_config(self, known=None) -> DesignConfig:
        return DesignConfig(h_star=None if self.h_star in (None, "auto") else float(self.h_star),
                            h_plus=None if self.h_plus in (None, "auto") else float(self.h_plus),
                            sphere_resolution=self.sphere_resolution, known_ftheta=known)

    def noise_spec(self) -> NoiseSpec:
        return NoiseSpec(self.sphere_resolution, self.s_step_factor)

    def hash(self) -> str:
        """Hash of the settings that influence results (paths and worker count excluded)."""
        d = dataclasses.asdict(self)
        for k in ("out", "workers", "cache"):
            d.pop(k)
        for k in ("data", "kappa_file"):
            if d[k] is not None:
                d[k] = hashlib.sha256(Path(d[k]).read_bytes()).hexdigest()
        return hashlib.sha256(json.dumps(d, sort_keys=True, default=str).encode()).hexdigest()[:16]


def load_config(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError("config", f"file {path} does not exist")
    text = path.read_text(encoding="utf-8")
    try:
        data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError("config", f"{path}: {exc}") from None
    data = data or {}
    if not isinstance(data, dict):
        raise ConfigError("config", f"{path}: top level must be a mapping")
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(unknown[0], f"unknown key in {path}")
    return data


def _floats(text: str, key: str) -> list[float]:
    try:
        return [float(x) for x in str(text).replace(";", ",").split(",") if x.strip()]
    except ValueError:
        raise ConfigError(key, f"expected comma-separated numbers, got {text!r}") from None


# --- commands ----------------------------------------------------------------------------------


def _require(cfg: RunConfig, *keys):
    for k in keys:
        if getattr(cfg, k) in (None, []):
            raise ConfigError(k, "is required for this subcommand")


def _prepare(cfg: RunConfig, known=None):
    raw = load_dataset(cfg.data, cfg.intercept)
    sample = normalize(raw, seed=cfg.seed)
    design = fit_design(sample, cfg.design_config(known))
    if known is None and not design.positivity_ok():
        diag = design.diagnostics()
        raise DiagnosticError(f"design density estimate vanishes at {diag['directions_without_data']} grid "
                              "directions; the design does not cover the sphere (inference not attempted)")
    kt = build_kernel_table(raw.d, cfg.u_max, cfg.n_points)
    return raw, sample, design, kt


def _quantiles(cfg: RunConfig, tps, n_stat: int) -> QuantileSettings:
    if cfg.quantile_mode == "theoretical":
        return QuantileSettings("theoretical", cfg.n_mc, cfg.seed, cfg.method, cfg.noise_spec(), cache_path=cfg.cache)
    if cfg.kappa_file:
        blob = json.loads(Path(cfg.kappa_file).read_text())
        cal = QuantileResult.from_dict(blob["quantile"])
        if blob.get("n") != n_stat:
            log.warning("calibration was run at n=%s but the statistic half has n=%s", blob.get("n"), n_stat)
    elif cfg.scenario_null:
        cal = calibrated_quantiles(tps, get_scenario(cfg.scenario_null), cfg.alpha, cfg.n_reps, cfg.seed, n_stat,
                                   cfg.design_config(), workers=cfg.workers)
    else:
        raise ConfigError("kappa_file", "calibrated mode needs --kappa-file or --scenario-null")
    return QuantileSettings("calibrated", cfg.n_mc, cfg.seed, calibration=cal)


def _write_result(outcome, cfg: RunConfig) -> str:
    outcome.config_hash = cfg.hash()
    outcome.seed = cfg.seed
    text = outcome.to_json(cfg.out)
    return text


def cmd_simulate(cfg: RunConfig, args) -> int:
    _require(cfg, "scenario", "out")
    spec = get_scenario(cfg.scenario).replace(retain_beta=bool(args.retain_beta))
    raw = sample_dgp(spec, cfg.n or spec.n, seed=cfg.seed)
    save_dataset(raw, cfg.out)
    print(f"wrote {len(raw)} rows (d={raw.d}, intercept={raw.intercept}) to {cfg.out}")
    return EXIT_OK


def cmd_test_mode(cfg: RunConfig, args) -> int:
    _require(cfg, "data", "b0", "scales")
    raw, sample, design, kt = _prepare(cfg)
    b0 = np.asarray(cfg.b0, dtype=float)
    if b0.size != raw.d:
        raise ConfigError("b0", f"has {b0.size} coordinates but the data have d={raw.d}")
    offset = 2.0 if cfg.offset is None else cfg.offset
    tps = list(mode_family(b0, cfg.scales, offset).points)
    q = _quantiles(cfg, tps, sample.n_stat)
    quad = QuadSpec(cfg.sphere_resolution)
    if len(cfg.scales) == 1:
        out = mode_test(b0, cfg.scales, sample, design, kt, cfg.alpha, q, offset, quad=quad)
    else:
        out = multiscale_mode_test(b0, cfg.scales, sample, design, kt, cfg.alpha, q, cfg.subset, cfg.rule, offset,
                                   quad=quad)
    _write_result(out, cfg)
    print(f"mode detected: {out.verdict['mode_detected']}")
    return EXIT_OK


def cmd_scan_modes(cfg: RunConfig, args) -> int:
    _require(cfg, "data", "a1", "a2", "scales")
    raw, sample, design, kt = _prepare(cfg)
    offset = 1.0 if cfg.offset is None else cfg.offset
    q = _quantiles(cfg, None, sample.n_stat)
    out = global_mode_scan((cfg.a1, cfg.a2), cfg.scales, sample, design, kt, cfg.alpha, q, offset,
                           QuadSpec(cfg.sphere_resolution))
    _write_result(out, cfg)
    print(f"{len(out.verdict['candidates'])} candidate vertices of {out.verdict['n_vertices']}")
    return EXIT_OK


def cmd_mono_map(cfg: RunConfig, args) -> int:
    _require(cfg, "data", "a1", "a2", "out")
    raw, sample, design, kt = _prepare(cfg)
    if raw.d != 2:
        raise ConfigError("data", f"the monotonicity map needs d = 2, got d = {raw.d}")
    q = _quantiles(cfg, None, sample.n_stat)
    out = monotonicity_map(sample, design, kt, cfg.h0, (cfg.a1, cfg.a2), cfg.alpha, q, cfg.width,
                           QuadSpec(cfg.sphere_resolution))
    out.write_arrows_csv(cfg.out)
    json_path = args.json or str(Path(cfg.out).with_suffix(".json"))
    out.config_hash, out.seed = cfg.hash(), cfg.seed
    out.to_json(json_path)
    print(f"{out.verdict['n_arrows']} arrows of {out.verdict['n_tests']} tests")
    return EXIT_OK


def cmd_calibrate(cfg: RunConfig, args) -> int:
    _require(cfg, "scenario_null", "b0", "scales", "out")
    spec = get_scenario(cfg.scenario_null)
    n = cfg.n or spec.n
    offset = 1.0 if cfg.offset is None else cfg.offset
    tps = list(mode_family(np.asarray(cfg.b0, dtype=float), cfg.scales, offset).points)
    res = calibrated_quantiles(tps, spec, cfg.alpha, cfg.n_reps, cfg.seed, n, cfg.design_config(),
                               workers=cfg.workers)
    blob = {"scenario_null": cfg.scenario_null, "n": n, "family": [tp.to_dict() for tp in tps],
            "quantile": res.to_dict(), "seed": cfg.seed, "config_hash": cfg.hash()}
    Path(cfg.out).write_text(json.dumps(_jsonable(blob), indent=2, sort_keys=True) + "\n")
    print(f"calibrated threshold {res.kappa_alpha:.6g} from {res.n_mc} null replications")
    return EXIT_OK


def cmd_kernel_dump(cfg: RunConfig, args) -> int:
    _require(cfg, "out")
    kt = build_kernel_table(args.d, cfg.u_max, cfg.n_points)
    kt.to_csv(cfg.out)
    print(f"wrote psi_{args.d} on [{kt.grid[0]:g}, {kt.grid[-1]:g}] ({kt.grid.size} points) to {cfg.out}")
    return EXIT_OK


def cmd_design_dump(cfg: RunConfig, args) -> int:
    _require(cfg, "data", "out")
    raw = load_dataset(cfg.data, cfg.intercept)
    design = fit_design(normalize(raw, seed=cfg.seed), cfg.design_config())
    grid = sphere_grid(raw.d, args.resolution)
    raw_f, cut_f = design.f_theta_hat(grid), design.f_theta(grid)
    closed = cauchy_ftheta(grid) if args.cauchy else None
    with open(cfg.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"theta{i + 1}" for i in range(raw.d)] + ["f_hat", "f_tilde"] + (["closed_form"] if args.cauchy else []))
        for k, th in enumerate(grid):
            extra = [repr(float(closed[k]))] if closed is not None else []
            w.writerow([repr(float(x)) for x in th] + [repr(float(raw_f[k])), repr(float(cut_f[k]))] + extra)
    diag = design.diagnostics()
    print(json.dumps(_jsonable(diag), sort_keys=True))
    return EXIT_OK if design.positivity_ok() else EXIT_NUMERIC


def cmd_reproduce(cfg: RunConfig, args) -> int:
    rows = reproduce_table(args.table, cfg.n_reps, cfg.seed, args.ns, cfg.workers, cfg.alpha, min(cfg.n_mc, 2000))
    print(f"table {args.table}: rerun at {cfg.n_reps} replications (estimate +- binomial standard error)")
    print(format_rows(rows))
    if cfg.out:
        blob = {"table": args.table, "seed": cfg.seed, "reps": cfg.n_reps, "rows": [r.to_dict() for r in rows],
                "config_hash": cfg.hash()}
        Path(cfg.out).write_text(json.dumps(_jsonable(blob), indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_ols(cfg: RunConfig, args) -> int:
    _require(cfg, "data")
    res = ols_baseline(load_dataset(cfg.data, cfg.intercept))
    blob = {"procedure": "ols-baseline", **res.to_dict(), "config_hash": cfg.hash()}
    text = json.dumps(_jsonable(blob), indent=2, sort_keys=True) + "\n"
    if cfg.out:
        Path(cfg.out).write_text(text)
    for k, (c, s) in enumerate(zip(res.coef, res.se)):
        print(f"gamma_{k + 1} = {c: .4f} ({s:.4f})")
    return EXIT_OK


def cmd_list(cfg: RunConfig, args) -> int:
    for name, spec in sorted(builtin_scenarios().items()):
        print(f"{name:<22} d={spec.d} intercept={spec.intercept!s:<5} n={spec.n:<6} {spec.anchor}")
    return EXIT_OK


# --- parser ----------------------------------------------------------------------------------


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML or JSON file with RunConfig keys; flags override it")
    p.add_argument("--seed", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--out")
    p.add_argument("--workers", type=int, help="worker processes (default: $RCSHAPE_WORKERS or 1)")
    p.add_argument("--n-mc", dest="n_mc", type=int)
    p.add_argument("--reps", dest="n_reps", type=int)
    p.add_argument("--method", choices=["gram", "noise"])
    p.add_argument("--h-star", dest="h_star", type=float)
    p.add_argument("--h-plus", dest="h_plus", type=float)
    p.add_argument("--u-max", dest="u_max", type=float)
    p.add_argument("--n-points", dest="n_points", type=int)
    p.add_argument("--sphere-resolution", dest="sphere_resolution", type=int)
    p.add_argument("--cache", help="JSON quantile cache shared across invocations")
    p.add_argument("--no-manifest", action="store_true", help="skip the <out>.manifest.json file")


def _data_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data")
    p.add_argument("--intercept", action="store_true", default=None, help="first column x1 is identically 1")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rcshape", description="Multiscale shape tests for random coefficient densities")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="draw a dataset from a named scenario")
    _common(p)
    p.add_argument("--scenario")
    p.add_argument("--n", type=int, help="rows per half; the file holds 2n rows")
    p.add_argument("--retain-beta", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("test-mode", help="mode test at b0 (multiscale when several scales are given)")
    _common(p)
    _data_args(p)
    p.add_argument("--b0")
    p.add_argument("--scales")
    p.add_argument("--offset", type=float, help="test locations b0 + offset*h*v (default 2)")
    p.add_argument("--calibrated", action="store_true", default=None)
    p.add_argument("--kappa-file", dest="kappa_file")
    p.add_argument("--scenario-null", dest="scenario_null")
    p.add_argument("--rule", choices=["cover", "any", "all"])
    p.add_argument("--subset", help="scales entering the combined verdict")
    p.set_defaults(func=cmd_test_mode)

    p = sub.add_parser("scan-modes", help="mode tests at every vertex of a grid in a region")
    _common(p)
    _data_args(p)
    p.add_argument("--region", help="a1;a2, e.g. --region=-1,-1;2,2 (use = when a value starts with '-')")
    p.add_argument("--scales")
    p.add_argument("--offset", type=float)
    p.set_defaults(func=cmd_scan_modes)

    p = sub.add_parser("mono-map", help="map of certified directional decreases (d = 2)")
    _common(p)
    _data_args(p)
    p.add_argument("--h0", type=float)
    p.add_argument("--region")
    p.add_argument("--width", type=float, help="grid width (default 2*h0)")
    p.add_argument("--json", help="result JSON path (default: --out with .json suffix)")
    p.set_defaults(func=cmd_mono_map)

    p = sub.add_parser("calibrate", help="calibrated threshold for a mode-test family under a null scenario")
    _common(p)
    p.add_argument("--scenario-null", dest="scenario_null")
    p.add_argument("--n", type=int)
    p.add_argument("--b0")
    p.add_argument("--scales")
    p.add_argument("--offset", type=float, help="test locations b0 + offset*h*v (default 1)")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("kernel-dump", help="write the transformed kernel psi_d as CSV")
    _common(p)
    p.add_argument("--d", type=int, required=True)
    p.set_defaults(func=cmd_kernel_dump)

    p = sub.add_parser("design-dump", help="direction density estimates on a sphere grid as CSV")
    _common(p)
    _data_args(p)
    p.add_argument("--resolution", type=int, default=200)
    p.add_argument("--cauchy", action="store_true", help="add the standard Cauchy closed form")
    p.set_defaults(func=cmd_design_dump)

    p = sub.add_parser("reproduce-table", help="desk-scale rerun of a simulation table")
    _common(p)
    p.add_argument("--table", required=True, choices=sorted(REFERENCE_TABLES))
    p.add_argument("--ns", help="comma-separated sample sizes")
    p.set_defaults(func=cmd_reproduce)

    p = sub.add_parser("ols-baseline", help="robust least squares of S on Theta")
    _common(p)
    _data_args(p)
    p.set_defaults(func=cmd_ols)

    p = sub.add_parser("list-scenarios", help="print the scenario catalogue")
    _common(p)
    p.set_defaults(func=cmd_list)
    return ap


_LIST_KEYS = {"b0": "b0", "scales": "scales", "subset": "subset"}


def _merge(args: argparse.Namespace) -> RunConfig:
    base = load_config(args.config) if getattr(args, "config", None) else {}
    cfg = RunConfig(**base)
    for f in dataclasses.fields(RunConfig):
        val = getattr(args, f.name, None)
        if val is None:
            continue
        if f.name in _LIST_KEYS:
            val = _floats(val, f.name)
        setattr(cfg, f.name, val)
    if getattr(args, "calibrated", None):
        cfg.quantile_mode = "calibrated"
    region = getattr(args, "region", None)
    if region:
        parts = region.split(";")
        if len(parts) != 2:
            raise ConfigError("region", f"expected 'a1;a2', got {region!r}")
        cfg.a1, cfg.a2 = _floats(parts[0], "region"), _floats(parts[1], "region")
    for key in ("b0", "scales", "subset", "a1", "a2"):
        val = getattr(cfg, key)
        if isinstance(val, str):
            setattr(cfg, key, _floats(val, key))
    if getattr(args, "ns", None):
        args.ns = [int(x) for x in _floats(args.ns, "ns")]
    if cfg.workers is None:
        try:
            cfg.workers = default_workers()
        except ValueError as exc:
            raise ConfigError("workers", str(exc)) from None
    cfg.validate()
    return cfg


def _manifest(cfg: RunConfig, argv, wall: float) -> dict:
    return {"config_hash": cfg.hash(), "seed": cfg.seed, "argv": list(argv), "wall_time_s": round(wall, 3),
            "versions": {"rcshape": __version__, "python": platform.python_version(), "numpy": np.__version__,
                         "scipy": scipy.__version__}, "config": _jsonable(dataclasses.asdict(cfg))}


def cli_run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    start = time.perf_counter()
    try:
        cfg = _merge(args)
        code = args.func(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DiagnosticError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical diagnostic failed: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if cfg.out and not args.no_manifest and code == EXIT_OK:
        Path(str(cfg.out) + ".manifest.json").write_text(
            json.dumps(_manifest(cfg, argv, time.perf_counter() - start), indent=2, sort_keys=True) + "\n")
    return code


def main() -> None:
    sys.exit(cli_run())
