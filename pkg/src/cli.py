"""
cli.py
Single command-line entry point for the levysprt runs.

Usage:
  python src/cli.py simulate --set kind=bm --set horizon=10
  python src/cli.py thresholds --set a00=0.05 --set a01=0.05 --set a10=0.1
  python src/cli.py montecarlo --config runs/mc.conf --seed 7 --threads 4
  python src/cli.py envelopes --set worlds=00,11 --format both
  python src/cli.py oil --set dataset=1 --out results/oil
  python src/cli.py oil --config results/oil/manifest.json   # exact re-run

Config files are plain "key = value" lines; "#" starts a comment.
--set and explicit flags override file values.
"""
import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np
import pandas as pd

from decision import gap_table, monte_carlo_operating_stats
from errors import ConfigError, IntervalUndefinedError, LevySprtError
from export import CSV, JSON, export_outputs, write_manifest
from levy_sim import (DEFAULT_SEED, JumpMeasureSpec, LevyCharacteristics, simulate_bm_drift,
                      simulate_compound_poisson, simulate_levy, simulate_levy2d)
from likelihood import WORLDS, DriftTestParams, JumpTestParams
from market import (DIFFERENCES, BnsParams, FitResult, estimate_jump_statistic, fit_parameters,
                    load_prices, paper_dataset, run_oil_experiment, simulate_bns,
                    simulate_bns_classical, simulate_llr_runs)
from supersub import (DEFAULT_INTENSITY, ERROR_WIRING, default_envelope_params, envelope_cross_sections,
                      envelope_grid, envelope_pide_sign_check, eval_envelopes, gap_sup_norm)
from thresholds import (PRINTED, ErrorSpec, compare_variants, l1_feasible_interval, rectangle_residuals,
                        solve_rectangle, threshold_table)

log = logging.getLogger("levysprt")

# -----------------------
# CONFIG
# -----------------------
OUT_DIR_ENV = "LEVYSPRT_OUTPUT_DIR"
DEFAULT_OUT_DIR = "levysprt_output"
FORMATS = {"csv": (CSV,), "json": (JSON,), "both": (CSV, JSON)}
DEFAULT_FORMAT = "both"
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")
SIM_KINDS = ("bm", "cp", "levy", "levy2d", "bns", "bns_classical")
# -----------------------


def _bool(text: str) -> bool:
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(text)


_bool.__name__ = "bool"


class Params:
    """
    Typed lookups over the key=value settings. Every lookup is recorded as
    text so the manifest can replay the run exactly.
    """

    def __init__(self, raw: Dict[str, str]):
        self.raw = dict(raw)
        self.resolved: Dict[str, Optional[str]] = {}

    def get(self, key: str, default, cast: Callable = float):
        if key in self.raw:
            text = self.raw[key]
            try:
                value = cast(text)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{key}: cannot read {text!r} as {cast.__name__}") from exc
            self.resolved[key] = text
            return value
        self.resolved[key] = None if default is None else str(default)
        return default

    def floats(self, key: str, default: Optional[List[float]]) -> Optional[List[float]]:
        if key not in self.raw:
            self.resolved[key] = None if default is None else ",".join(str(v) for v in default)
            return default
        text = self.raw[key]
        try:
            values = [float(v) for v in text.split(",") if v.strip()]
        except ValueError as exc:
            raise ConfigError(f"{key}: expected a comma-separated list of numbers, got {text!r}") from exc
        self.resolved[key] = text
        return values

    def words(self, key: str, default: str) -> List[str]:
        return [w.strip() for w in self.get(key, default, str).split(",") if w.strip()]

    def unused(self) -> List[str]:
        return sorted(set(self.raw) - set(self.resolved))


@dataclass
class RunConfig:
    subcommand: str
    seed: int
    out_dir: Path
    formats: tuple
    threads: int
    params: Dict[str, str] = field(default_factory=dict)
    config_path: Optional[str] = None


# -----------------------
# config resolution
# -----------------------
def read_config_file(path) -> Dict[str, str]:
    """key = value lines, or the params/seed/format/threads of a manifest.json."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    if path.suffix == ".json":
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
        out = {k: str(v) for k, v in data.get("params", {}).items() if v is not None}
        for key in ("seed", "format", "threads"):
            if data.get(key) is not None:
                out[key] = str(data[key])
        return out
    out = {}
    for n, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected key = value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"{path}:{n}: empty key")
        out[key] = value
    return out


def _parse_set(items: List[str]) -> Dict[str, str]:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = (s.strip() for s in item.split("=", 1))
        out[key] = value
    return out


def _as_int(name: str, text: str) -> int:
    try:
        return int(text)
    except ValueError as exc:
        raise ConfigError(f"{name}: expected an integer, got {text!r}") from exc


def resolve_config(args: argparse.Namespace) -> RunConfig:
    params = read_config_file(args.config) if args.config else {}
    params.update(_parse_set(args.set))
    seed_text = params.pop("seed", None)
    format_text = params.pop("format", None)
    threads_text = params.pop("threads", None)

    seed = args.seed if args.seed is not None else (
        _as_int("seed", seed_text) if seed_text is not None else DEFAULT_SEED)
    fmt = args.format or format_text or DEFAULT_FORMAT
    if fmt not in FORMATS:
        raise ConfigError(f"format must be one of {sorted(FORMATS)}, got {fmt!r}")
    threads = args.threads if args.threads is not None else (
        _as_int("threads", threads_text) if threads_text is not None else 1)
    if threads < 1 and threads != -1:
        raise ConfigError(f"threads must be >= 1 (or -1 for all cores), got {threads}")
    out_dir = Path(args.out or os.environ.get(OUT_DIR_ENV) or DEFAULT_OUT_DIR)
    return RunConfig(subcommand=args.command, seed=seed, out_dir=out_dir, formats=FORMATS[fmt],
                     threads=threads, params=params, config_path=args.config)


# -----------------------
# simulate
# -----------------------
def _exp_spec(p: Params, prefix: str = "") -> Optional[JumpMeasureSpec]:
    intensity = p.get(f"{prefix}intensity", 1.0)
    if intensity == 0:
        return None
    return JumpMeasureSpec.exponential(intensity, p.get(f"{prefix}scale", 1.0), p.get(f"{prefix}tilt_a", 0.0))


def _bns_params(p: Params) -> BnsParams:
    return BnsParams(
        mu=p.get("mu", 0.0), beta=p.get("beta", 0.0), rho=p.get("rho", -1.0), lam=p.get("lam", 1.0),
        theta=p.get("theta", 1.0), theta_prime=p.get("theta_prime", 1.0),
        sigma0_sq=p.get("sigma0_sq", 0.04),
        z_spec=JumpMeasureSpec.exponential(p.get("z_intensity", 1.0), p.get("z_scale", 0.01)),
        zb_spec=JumpMeasureSpec.exponential(p.get("zb_intensity", 2.0), p.get("zb_scale", 0.05)),
        s0=p.get("s0", 1.0))


def cmd_simulate(cfg: RunConfig, p: Params) -> Dict:
    kind = p.get("kind", "bm", str)
    if kind not in SIM_KINDS:
        raise ConfigError(f"kind must be one of {SIM_KINDS}, got {kind!r}")
    n_paths = p.get("n_paths", 1, int)
    if n_paths < 1:
        raise ConfigError(f"n_paths must be >= 1, got {n_paths}")
    horizon = p.get("horizon", 1.0)
    dt = p.get("dt", 1e-3)

    if kind == "bm":
        drift, vol = p.get("drift", 0.0), p.get("vol", 1.0)
        make = lambda k: simulate_bm_drift(drift, vol, horizon, dt, cfg.seed, path_index=k)
    elif kind == "cp":
        spec = _exp_spec(p) or JumpMeasureSpec.exponential(0.0)
        grid = p.get("grid", False, _bool)
        make = lambda k: simulate_compound_poisson(spec, horizon, cfg.seed, dt if grid else None, path_index=k)
    elif kind == "levy":
        chars = LevyCharacteristics(drift=p.get("drift", 0.0), diffusion_var=p.get("diffusion_var", 1.0),
                                    jumps=_exp_spec(p), jump_sign=p.get("jump_sign", 1, int))
        compensate = p.get("compensate", False, _bool)
        make = lambda k: simulate_levy(chars, horizon, dt, cfg.seed, compensate=compensate, path_index=k)
    elif kind == "levy2d":
        mu = (p.get("mu1", 0.0), p.get("mu2", 0.0))
        s12 = p.get("s12", 0.0)
        sigma = np.array([[p.get("s11", 1.0), s12], [s12, p.get("s22", 1.0)]])
        specs = (_exp_spec(p, "jump1_"), _exp_spec(p, "jump2_"))
        make = lambda k: simulate_levy2d(mu, sigma, specs, horizon, dt, cfg.seed, path_index=k)
    else:
        bns = _bns_params(p)
        sim = simulate_bns if kind == "bns" else simulate_bns_classical
        make = lambda k: sim(bns, horizon, dt, cfg.seed, path_index=k)

    frames = []
    for k in range(n_paths):
        frames.append(make(k).to_frame().assign(path=k))
    frame = pd.concat(frames, ignore_index=True)
    value_col = "price" if kind.startswith("bns") else "value"
    terminal = frame.groupby("path")[value_col].last().tolist()
    record = {"kind": kind, "n_paths": n_paths, "rows": len(frame), "terminal": terminal}
    export_outputs(cfg.out_dir, "paths", cfg.formats, frame, record)
    return {}


# -----------------------
# thresholds
# -----------------------
def _errors(p: Params, default: float = 0.05) -> ErrorSpec:
    return ErrorSpec.from_three(p.get("a00", default), p.get("a01", default), p.get("a10", default))


def cmd_thresholds(cfg: RunConfig, p: Params) -> Dict:
    errors = _errors(p)
    l1 = p.get("l1", None)
    variant = p.get("variant", PRINTED, str)
    rect = solve_rectangle(errors, l1, variant)
    try:
        interval = list(l1_feasible_interval(errors.alpha_00, errors.alpha_10))
    except IntervalUndefinedError:
        interval = None
    record = {**rect.to_dict(), "alpha": errors.to_dict(), "variant": variant, "l1_interval": interval,
              "residuals": rectangle_residuals(errors, rect, variant),
              "variants": compare_variants(errors, rect.l1)}
    export_outputs(cfg.out_dir, "rectangle", cfg.formats, pd.DataFrame([rect.to_dict()]), record)

    flags = {}
    levels = p.floats("alpha_grid", None)
    if levels:
        table = threshold_table(levels, variant)
        # r1 must grow as alpha shrinks
        by_alpha = table.sort_values("alpha", ascending=False)["r1"]
        flags["r1_monotone"] = bool((by_alpha.diff().dropna() > 0).all())
        export_outputs(cfg.out_dir, "threshold_table", cfg.formats, table,
                       {"rows": table.to_dict(orient="records"), **flags})
    return flags


# -----------------------
# montecarlo
# -----------------------
def _test_params(p: Params, test: str):
    sigma = (p.get("sigma1", 1.0), p.get("sigma2", 1.0))
    if test == "drift":
        return DriftTestParams(m=(p.get("m1", 1.0), p.get("m2", 1.0)), sigma=sigma)
    if test == "jump":
        nu = JumpMeasureSpec.exponential(p.get("intensity", 1.0), p.get("scale", 1.0))
        return JumpTestParams(a=(p.get("a1", 1.0), p.get("a2", 1.0)), sigma=sigma, measures=(nu, nu))
    raise ConfigError(f"test must be 'drift' or 'jump', got {test!r}")


def cmd_montecarlo(cfg: RunConfig, p: Params) -> Dict:
    test = p.get("test", "drift", str)
    params = _test_params(p, test)
    worlds = p.words("worlds", "00")
    for w in worlds:
        if w not in WORLDS:
            raise ConfigError(f"world must be one of {WORLDS}, got {w!r}")
    errors = _errors(p)
    variant = p.get("variant", PRINTED, str)
    rect = solve_rectangle(errors, p.get("l1", None), variant)
    n_paths = p.get("n_paths", 2000, int)
    dt, horizon = p.get("dt", None), p.get("horizon", None)

    rows, by_world = [], {}
    for w in worlds:
        stats = monte_carlo_operating_stats(w, test, params, rect, n_paths, dt=dt, horizon=horizon,
                                            seed=cfg.seed, n_jobs=cfg.threads)
        by_world[w] = stats.to_dict()
        row = {k: v for k, v in stats.to_dict().items() if k != "label_rates"}
        row.update({f"rate_{k}": v for k, v in stats.label_rates.items()})
        rows.append(row)
        print(f"world {w}: alpha_hat={stats.alpha_hat:.4f} (se {stats.alpha_se:.4f}), "
              f"E tau={stats.mean_tau:.4g}")
    record = {"rectangle": rect.to_dict(), "alpha": errors.to_dict(), "variant": variant, "worlds": by_world}
    export_outputs(cfg.out_dir, "operating_stats", cfg.formats, pd.DataFrame(rows), record)

    flags = {}
    levels = p.floats("gap_levels", None)
    if levels:
        if test != "drift":
            raise ConfigError("gap_levels runs the drift test only")
        table = gap_table(levels, n_paths, params, variant=p.get("gap_variant", PRINTED, str),
                          dt=p.get("gap_dt", 2e-3), horizon=p.get("gap_horizon", 60.0),
                          seed=cfg.seed, n_jobs=cfg.threads)
        ordered = table.sort_values("alpha", ascending=False)["gap"].to_numpy()
        flags["gap_decreasing"] = bool(np.all(np.diff(ordered) < 0))
        export_outputs(cfg.out_dir, "gap_table", cfg.formats, table,
                       {"rows": table.to_dict(orient="records"), **flags})
    return flags


# -----------------------
# envelopes
# -----------------------
def cmd_envelopes(cfg: RunConfig, p: Params) -> Dict:
    worlds = p.words("worlds", ",".join(WORLDS))
    intensity = p.get("intensity", DEFAULT_INTENSITY)
    L_const = p.get("L_const", None)
    bounds = ((p.get("l1", -1.0), p.get("r1", 1.0)), (p.get("l2", -1.0), p.get("r2", 1.0)))
    grid_n = p.get("grid_n", 64, int)
    check_n = p.get("check_n", 0, int)
    sweep = p.floats("L_sweep", [1e-6, 1e-3, 1e-1])

    record, flags = {}, {"complex_branch": {}}
    for w in worlds:
        if w not in WORLDS:
            raise ConfigError(f"world must be one of {WORLDS}, got {w!r}")
        params = default_envelope_params(w, intensity, L_const, bounds)
        grid = envelope_grid(params, grid_n)
        export_outputs(cfg.out_dir, f"envelope_grid_{w}", cfg.formats, grid)
        export_outputs(cfg.out_dir, f"envelope_sections_{w}", cfg.formats,
                       envelope_cross_sections(params))
        # the envelopes equal 1 at the corner the world points to
        corner = [bounds[k][int(w[k])] for k in (0, 1)]
        branch = eval_envelopes(params, *corner)
        flags["complex_branch"][w] = bool(branch.complex_branch)
        gaps = [gap_sup_norm(params.with_L(L), grid_n) for L in sweep]
        by_L = [g for _, g in sorted(zip(sweep, gaps))]
        entry = {"params": params.to_dict(),
                 "corner": {"x": corner, "lower": float(branch.lower), "upper": float(branch.upper)},
                 "min_lower": float(grid["lower"].min()),
                 "ordered": bool((grid["lower"] <= grid["upper"] + 1e-12).all()),
                 "L_sweep": [{"L_const": L, "gap_sup_norm": g} for L, g in zip(sweep, gaps)],
                 "gap_monotone": bool(np.all(np.diff(by_L) > 0))}
        if check_n:
            entry["sign_check"] = envelope_pide_sign_check(params, check_n, worlds=[w])["worlds"][w]
        record[w] = entry
    export_outputs(cfg.out_dir, "envelopes", cfg.formats, record=record)
    return flags


# -----------------------
# oil
# -----------------------
def cmd_oil(cfg: RunConfig, p: Params) -> Dict:
    dataset = p.get("dataset", 0 if "prices" in p.raw else 1, int)
    preset = paper_dataset(dataset) if dataset else {}
    prices = p.get("prices", None, str)
    if prices:
        series = load_prices(prices)
        fit = fit_parameters(series, on=p.get("fit_on", DIFFERENCES, str))
    else:
        mu, sigma = p.get("mu", preset.get("mu")), p.get("sigma", preset.get("sigma"))
        if mu is None or sigma is None:
            raise ConfigError("oil needs prices=<csv> or mu/sigma (or dataset=1|2)")
        fit = FitResult(mu_hat=mu, sigma_hat=sigma, n_returns=0)
    a = p.get("a", preset.get("a"))
    if a is None:
        if not prices:
            raise ConfigError("oil needs a jump parameter a")
        a = estimate_jump_statistic(series, fit)
        log.info("heuristic jump parameter a=%.4g", a)

    report = run_oil_experiment(
        fit, a, p.get("alpha0", preset.get("alpha0", 0.9)), p.get("l", preset.get("l", -0.03)),
        n_runs=p.get("n_runs", 30, int), horizon=p.get("horizon", None), seed=cfg.seed,
        world=p.get("world", 0, int), wiring=p.get("wiring", ERROR_WIRING, str),
        dt=p.get("dt", None), reference_exits=preset.get("right_exits"),
        reference_r=max(preset["r_candidates"]) if preset else None)
    record = report.to_dict()
    if preset:
        print(f"r={report.r} (reference {report.reference_r}, gap {report.r_discrepancy}); "
              f"right exits {report.exits['right']} of {len(report.outcomes)} (reference {preset['right_exits']})")
    export_outputs(cfg.out_dir, "oil_report", cfg.formats, pd.DataFrame(report.outcomes), record)

    if p.get("paths", False, _bool) and report.r is not None:
        runs = simulate_llr_runs(fit, a, report.l, report.r, len(report.outcomes), report.dt,
                                 report.horizon, seed=cfg.seed, world=p.get("world", 0, int))
        export_outputs(cfg.out_dir, "oil_paths", cfg.formats, runs)
    return {"r_found": report.r is not None}


COMMANDS = {
    "simulate": cmd_simulate,
    "thresholds": cmd_thresholds,
    "montecarlo": cmd_montecarlo,
    "envelopes": cmd_envelopes,
    "oil": cmd_oil,
}


# -----------------------
# entry point
# -----------------------
def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value file, or a manifest.json from an earlier run")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one setting")
    common.add_argument("--seed", type=int, default=None, help=f"RNG seed (default {DEFAULT_SEED})")
    common.add_argument("--out", default=None, help=f"output directory (default ${OUT_DIR_ENV} or {DEFAULT_OUT_DIR})")
    common.add_argument("--format", choices=sorted(FORMATS), default=None)
    common.add_argument("--threads", type=int, default=None, help="worker cap for Monte Carlo batches")
    common.add_argument("--log-level", choices=LOG_LEVELS, default="INFO")

    parser = argparse.ArgumentParser(prog="levysprt", description="Sequential tests driven by Levy processes.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=fn.__name__.replace("cmd_", "run "))
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level), format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        p = Params(cfg.params)
        flags = COMMANDS[cfg.subcommand](cfg, p)
        for key in p.unused():
            log.warning("unused setting %r", key)
        fmt = next(k for k, v in FORMATS.items() if v == cfg.formats)
        write_manifest({"subcommand": cfg.subcommand, "seed": cfg.seed, "format": fmt,
                        "threads": cfg.threads, "params": p.resolved, "flags": flags}, cfg.out_dir)
    except LevySprtError as exc:
        print(f"Error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
