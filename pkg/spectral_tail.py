"""Command-line entry point.

    python spectral_tail.py simulate --preset garch-study --length 2000 --out runs/sim
    python spectral_tail.py estimate --input runs/sim/series.csv --lags 1..5 --grid=-2,-1,1,2
    python spectral_tail.py ci --input runs/sim/series.csv --scheme multiplier --block 100
    python spectral_tail.py study-rmse --reps 300 --workers 8
    python spectral_tail.py study-coverage --scheme stationary,multiplier --block 100
    python spectral_tail.py apply --input sp500.csv --input-kind price
    python spectral_tail.py independence --input returns.csv --input-kind return

Every option can also come from a config file (--config): dotenv-style KEY=VALUE
lines, keys being the upper-cased flag names (THRESHOLD_QUANTILE=0.95, LAGS=1..5).
A manifest.json from an earlier run is accepted too. Flags win over the file.
"""

import argparse
import itertools
import json
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
from dotenv import dotenv_values

import settings
from application import ApplicationConfig, run_application
from bootstrap import BootstrapScheme, bootstrap_ci
from core import Conditioning, EstimatorKind, SeriesWindow, Target, ThresholdSpec, derive_rng, resolve_threshold
from errors import InvalidParams, SpectralTailError
from estimators import AlphaPolicy, sweep
from ingest import ingest_prices, load_series
from outputs import RunManifest
from simulators import MODEL_PRESETS, Innovation, ModelKind, ModelSpec, SimulationPlan, simulate
from study import OracleSpec, independence_quantile, independence_reference, study_coverage, study_estimators

logger = logging.getLogger(__name__)

MODEL_FIELDS = ("nu", "omega", "alpha1", "beta1", "delta", "gamma1", "phi", "sigma_eta")
SKIPPED_CONFIG = ("func", "config")


# --- Option parsing helpers ---

def int_list(text: str) -> List[int]:
    """'1,2,3' or an inclusive range '1..10'."""
    values = []
    for part in str(text).split(","):
        part = part.strip()
        if ".." in part:
            start, stop = part.split("..")
            values.extend(range(int(start), int(stop) + 1))
        elif part:
            values.append(int(part))
    if not values:
        raise argparse.ArgumentTypeError(f"empty list '{text}'")
    return values


def float_list(text: str) -> List[float]:
    values = [float(part) for part in str(text).split(",") if part.strip()]
    if not values:
        raise argparse.ArgumentTypeError(f"empty list '{text}'")
    return values


def str_list(text: str) -> List[str]:
    return [part.strip() for part in str(text).split(",") if part.strip()]


def optional_float(text: str) -> Optional[float]:
    return None if str(text).strip().lower() in ("", "none") else float(text)


def _truthy(text: str) -> bool:
    return str(text).strip().lower() in ("1", "true", "yes", "on")


def _config_value(value) -> Optional[str]:
    if value is None:
        return None
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (list, tuple)):
        return ",".join(str(item) for item in value)
    return str(value)


def read_config(path) -> Dict[str, Optional[str]]:
    """KEY=VALUE file, or the "config" block of a manifest.json."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Config file not found: {path}")
    if path.suffix == ".json":
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
        data = data.get("config", data)
        # null entries stay: they stand for options that were explicitly unset
        return {key.upper(): _config_value(value) for key, value in data.items() if key != "command"}
    return {key.upper(): value for key, value in dotenv_values(path).items() if value is not None}


def apply_config(subparser: argparse.ArgumentParser, config: Dict[str, Optional[str]]) -> List[str]:
    """Install config values as defaults so explicit flags still win; returns unused keys."""
    actions = {action.dest: action for action in subparser._actions}
    defaults = {}
    for key, value in config.items():
        dest = key.lower()
        action = actions.get(dest)
        if action is None or dest in SKIPPED_CONFIG or dest == "help":
            continue
        # store_true flags take no argument; strings for everything else go through the action's type
        if value is None:
            defaults[dest] = None
        else:
            defaults[dest] = _truthy(value) if action.nargs == 0 else value
    subparser.set_defaults(**defaults)
    return [key for key in config if key.lower() not in defaults]


# --- Argument groups ---

def _add_common(sp: argparse.ArgumentParser):
    sp.add_argument("--config", help="KEY=VALUE config file (or an earlier manifest.json)")
    sp.add_argument("--seed", type=int, default=settings.DEFAULT_SEED)
    sp.add_argument("--out", default="output", help="Output directory")
    sp.add_argument("--workers", type=int, default=settings.WORKERS)


def _add_model(sp: argparse.ArgumentParser):
    sp.add_argument("--preset", choices=sorted(MODEL_PRESETS), help="Named model (default garch-study)")
    sp.add_argument("--model", choices=[kind.value for kind in ModelKind], help="Build a model from the flags below")
    sp.add_argument("--innovation", choices=[law.value for law in Innovation])
    for name in MODEL_FIELDS:
        sp.add_argument(f"--{name.replace('_', '-')}", type=float)
    sp.add_argument("--burn-in", type=int, default=settings.BURN_IN)


def _add_input(sp: argparse.ArgumentParser, kind: str = "series"):
    sp.add_argument("--input", help="CSV file")
    sp.add_argument("--input-kind", choices=["series", "price", "return"], default=kind)
    sp.add_argument("--date-column", default="date")
    sp.add_argument("--value-column", help="Defaults to value / price / return by input kind")


def _add_threshold(sp: argparse.ArgumentParser, quantile: float, level: bool = True):
    sp.add_argument("--threshold-quantile", type=float, default=quantile)
    if level:
        sp.add_argument("--threshold-level", type=float, help="Absolute threshold u (overrides the quantile)")


def _add_estimator(sp: argparse.ArgumentParser, kind: str, target: str):
    sp.add_argument("--estimator", choices=[k.value for k in EstimatorKind], default=kind)
    sp.add_argument("--conditioning", choices=[c.value for c in Conditioning], default=Conditioning.ABSOLUTE.value)
    sp.add_argument("--target", choices=[t.value for t in Target], default=target)


def _add_oracle(sp: argparse.ArgumentParser):
    sp.add_argument("--oracle-replicates", type=int, default=settings.ORACLE_REPLICATES)
    sp.add_argument("--oracle-length", type=int, default=settings.ORACLE_LENGTH)
    sp.add_argument("--per-replicate-oracle", action="store_true",
                    help="Give each oracle series its own quantile threshold instead of one pooled threshold")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spectral_tail", description="Spectral tail process estimation")
    parser.add_argument("--version", action="version", version=f"%(prog)s {settings.VERSION}")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("simulate", help="Simulate one series from a model")
    _add_common(sp)
    _add_model(sp)
    sp.add_argument("--length", type=int, default=2000)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("estimate", help="Forward/backward estimates over lags and a grid")
    _add_common(sp)
    _add_input(sp)
    _add_threshold(sp, 0.95)
    _add_estimator(sp, EstimatorKind.FORWARD.value, Target.CDF.value)
    sp.add_argument("--lags", type=int_list, default="1")
    sp.add_argument("--grid", type=float_list, default="1")
    sp.add_argument("--alpha", type=float, help="Fixed alpha for the backward estimator (default: Hill)")
    sp.add_argument("--clamp", action="store_true", help="Clip reported values to [0, 1]")
    sp.set_defaults(func=cmd_estimate)

    sp = sub.add_parser("ci", help="Bootstrap confidence intervals")
    _add_common(sp)
    _add_input(sp)
    _add_threshold(sp, 0.95)
    _add_estimator(sp, EstimatorKind.BACKWARD.value, Target.CDF.value)
    sp.add_argument("--lags", type=int_list, default="1")
    sp.add_argument("--grid", type=float_list, default="1")
    sp.add_argument("--scheme", choices=["stationary", "multiplier"], default="multiplier")
    sp.add_argument("--block", type=float, default=100)
    sp.add_argument("--law", choices=["normal", "zero"], default="normal", help="Multiplier distribution")
    sp.add_argument("--replicates", type=int, default=settings.BOOTSTRAP_REPLICATES)
    sp.add_argument("--level", type=float, default=0.95)
    sp.add_argument("--rescale-from", type=optional_float, help="Lower quantile for the rescaled interval")
    sp.set_defaults(func=cmd_ci)

    sp = sub.add_parser("study-rmse", help="Bias/sd/RMSE of both estimators against the oracle")
    _add_common(sp)
    _add_model(sp)
    _add_threshold(sp, 0.95, level=False)
    _add_oracle(sp)
    sp.add_argument("--n", type=int, default=2000)
    sp.add_argument("--lags", type=int_list, default="1")
    sp.add_argument("--grid", type=float_list, default="-2,-1,1,2")
    sp.add_argument("--reps", type=int, default=settings.STUDY_REPLICATES)
    sp.set_defaults(func=cmd_study_rmse)

    sp = sub.add_parser("study-coverage", help="Coverage and width of bootstrap intervals")
    _add_common(sp)
    _add_model(sp)
    _add_threshold(sp, 0.95, level=False)
    _add_estimator(sp, EstimatorKind.BACKWARD.value, Target.ABS_SURVIVAL.value)
    _add_oracle(sp)
    sp.add_argument("--n", type=int, default=2000)
    sp.add_argument("--lags", type=int_list, default="1..5")
    sp.add_argument("--x", type=float, default=1.0)
    sp.add_argument("--scheme", type=str_list, default="stationary,multiplier")
    sp.add_argument("--block", type=float_list, default="100")
    sp.add_argument("--replicates", type=int, default=settings.BOOTSTRAP_REPLICATES)
    sp.add_argument("--reps", type=int, default=settings.STUDY_REPLICATES)
    sp.add_argument("--level", type=float, default=0.95)
    sp.add_argument("--rescale-from", type=optional_float)
    sp.set_defaults(func=cmd_study_coverage)

    sp = sub.add_parser("apply", help="Returns analysis with model curves and residual re-analysis")
    _add_common(sp)
    _add_input(sp, kind="price")
    _add_threshold(sp, 0.98, level=False)
    _add_oracle(sp)
    sp.add_argument("--lags", type=int_list, default="1..10")
    sp.add_argument("--block", type=int, default=100)
    sp.add_argument("--replicates", type=int, default=1000)
    sp.add_argument("--level", type=float, default=0.8)
    sp.add_argument("--rescale-from", type=optional_float, default="0.95")
    sp.add_argument("--independence-reps", type=int, default=1000)
    sp.add_argument("--burn-in", type=int, default=settings.BURN_IN, help="Burn-in for the model-curve oracle")
    sp.add_argument("--aparch", default="sp500-aparch", help="APARCH preset for model curves, or 'none'")
    sp.add_argument("--no-garch", action="store_true", help="Skip the GARCH(1,1) fit")
    sp.set_defaults(func=cmd_apply)

    sp = sub.add_parser("independence", help="Reference values under serial independence")
    _add_common(sp)
    _add_input(sp)
    _add_threshold(sp, 0.95)
    _add_estimator(sp, EstimatorKind.BACKWARD.value, Target.ABS_SURVIVAL.value)
    sp.add_argument("--lags", type=int_list, default="1")
    sp.add_argument("--x", type=float, default=1.0)
    sp.add_argument("--mc-reps", type=int, default=1000)
    sp.add_argument("--level", type=float, default=0.8, help="Quantile of the estimator under independence")
    sp.set_defaults(func=cmd_independence)

    parser.subcommands = sub.choices
    return parser


# --- Shared resolution ---

def model_from_args(args) -> ModelSpec:
    if args.model:
        keys = {"MODEL": args.model}
        if args.innovation:
            keys["INNOVATION"] = args.innovation
        for name in MODEL_FIELDS:
            value = getattr(args, name)
            if value is not None:
                keys[name.upper()] = str(value)
        return ModelSpec.from_config(keys).validate()
    return MODEL_PRESETS[args.preset or "garch-study"].validate()


def load_input(args) -> np.ndarray:
    if not args.input:
        raise FileNotFoundError("No --input file given")
    if args.input_kind == "series":
        return load_series(args.input, args.value_column or "value")
    column = args.value_column or args.input_kind
    return ingest_prices(args.input, args.date_column, column, args.input_kind).returns


def threshold_from_args(args) -> ThresholdSpec:
    if getattr(args, "threshold_level", None) is not None:
        return ThresholdSpec.absolute(args.threshold_level)
    return ThresholdSpec.quantile(args.threshold_quantile)


def _window(args, lags) -> SeriesWindow:
    return SeriesWindow.from_raw(load_input(args), max(abs(t) for t in lags))


# --- Subcommands ---

def cmd_simulate(args, manifest: RunManifest) -> int:
    model = model_from_args(args)
    print(f"🪄 Simulating {args.length} observations from {model.kind.value} ...")
    values = simulate(SimulationPlan(model, args.length, args.burn_in, args.seed))
    path = manifest.csv("series.csv", [{"value": v} for v in values], columns=["value"])
    print(f"✅ Series saved to {path}")
    return 0


def cmd_estimate(args, manifest: RunManifest) -> int:
    w = _window(args, args.lags)
    u = resolve_threshold(w, threshold_from_args(args))
    policy = AlphaPolicy.fixed(args.alpha) if args.alpha is not None else AlphaPolicy.hill()
    print(f"🪄 Estimating {args.estimator} {args.target} at u={u:.6g} ...")
    curve = sweep(w, u, args.estimator, args.conditioning, args.lags, args.grid, policy, args.target)
    rows = curve.rows()
    if args.clamp:
        for row in rows:
            row["value"] = min(max(row["value"], 0.0), 1.0)
    manifest.csv("estimates.csv", rows)
    manifest.json("estimates.json", {
        "estimator": curve.estimator, "conditioning": curve.conditioning, "target": curve.target,
        "threshold": curve.threshold, "alpha": curve.alpha, "lags": curve.lags, "grid": curve.grid,
        "clamped": args.clamp, "cells": rows,
    })
    print(f"✅ {len(rows)} estimates saved to {manifest.out_dir}")
    return 0


def cmd_ci(args, manifest: RunManifest) -> int:
    w = _window(args, args.lags)
    u = resolve_threshold(w, threshold_from_args(args))
    scheme = BootstrapScheme(args.scheme, args.block, args.replicates, args.seed, args.law)
    low = ThresholdSpec.quantile(args.rescale_from) if args.rescale_from is not None else None
    print(f"🪄 {args.replicates} {scheme.label} bootstrap replicates per cell ...")
    rows = []
    for j, t in enumerate(args.lags):
        for k, x in enumerate(args.grid):
            ci = bootstrap_ci(w, u, t, x, args.estimator, args.conditioning, scheme, args.level, low,
                              args.target, derive_rng(args.seed, j, k))
            rows.append({
                "lag": t, "x": x, "estimator": args.estimator, "conditioning": args.conditioning,
                "target": args.target, "threshold": u, "point": ci.point, "lower": ci.lower, "upper": ci.upper,
                "level": ci.level, "method": ci.method, "scheme": ci.scheme, "block": ci.block,
                "replicates": ci.replicates, "discarded": ci.discarded,
            })
    manifest.csv("intervals.csv", rows)
    print(f"✅ {len(rows)} intervals saved to {manifest.out_dir}")
    return 0


def _oracle_from_args(args, model: ModelSpec) -> OracleSpec:
    return OracleSpec(model, args.oracle_replicates, args.oracle_length, args.threshold_quantile,
                      pooled=not args.per_replicate_oracle, seed=(args.seed + 1) % 2**64, burn_in=args.burn_in)


def _save_report(manifest: RunManifest, name: str, report) -> None:
    manifest.csv(f"{name}.csv", report.rows)
    manifest.json(f"{name}.json", {"metadata": report.metadata, "rows": report.rows})


def cmd_study_rmse(args, manifest: RunManifest) -> int:
    model = model_from_args(args)
    print(f"🪄 Estimator study: {args.reps} replicates of n={args.n} ...")
    report = study_estimators(model, args.n, args.threshold_quantile, args.lags, args.grid, args.reps,
                              _oracle_from_args(args, model), seed=args.seed, burn_in=args.burn_in,
                              workers=args.workers)
    _save_report(manifest, "study_rmse", report)
    print(f"✅ {len(report.rows)} rows saved to {manifest.out_dir}")
    return 0


def cmd_study_coverage(args, manifest: RunManifest) -> int:
    model = model_from_args(args)
    schemes = [BootstrapScheme(kind, block, args.replicates, args.seed)
               for kind, block in itertools.product(args.scheme, args.block)]
    print(f"🪄 Coverage study: {args.reps} replicates x {len(schemes)} scheme(s) ...")
    report = study_coverage(model, args.n, args.threshold_quantile, args.lags, args.x, schemes, args.reps,
                            args.level, args.estimator, args.conditioning, args.target, args.rescale_from,
                            _oracle_from_args(args, model), seed=args.seed, burn_in=args.burn_in,
                            workers=args.workers)
    _save_report(manifest, "study_coverage", report)
    print(f"✅ {len(report.rows)} rows saved to {manifest.out_dir}")
    return 0


def cmd_apply(args, manifest: RunManifest) -> int:
    if not args.input:
        raise FileNotFoundError("No --input file given")
    aparch = None
    if str(args.aparch).lower() != "none":
        if args.aparch not in MODEL_PRESETS:
            raise InvalidParams(f"Unknown APARCH preset '{args.aparch}', expected one of "
                                f"{sorted(MODEL_PRESETS)} or 'none'")
        aparch = MODEL_PRESETS[args.aparch]
    kind = "return" if args.input_kind == "return" else "price"
    series = ingest_prices(args.input, args.date_column, args.value_column or kind, kind)
    config = ApplicationConfig(
        quantile=args.threshold_quantile, rescale_from=args.rescale_from, level=args.level,
        lags=tuple(args.lags), block=args.block, replicates=args.replicates,
        independence_reps=args.independence_reps, fit_garch=not args.no_garch, aparch=aparch,
        oracle_replicates=args.oracle_replicates, oracle_length=args.oracle_length,
        seed=args.seed, burn_in=args.burn_in,
    )
    print(f"🪄 Analyzing {len(series)} returns ...")
    result = run_application(series, config, args.workers)
    print(f"   alpha = {result.alpha.alpha:.3f} from {result.alpha.exceedance_count} exceedances")
    manifest.csv("apply_estimates.csv", result.estimates)
    manifest.csv("apply_residuals.csv", result.residual_rows)
    manifest.json("apply_summary.json", result.summary())
    print(f"✅ Application outputs saved to {manifest.out_dir}")
    return 0


def cmd_independence(args, manifest: RunManifest) -> int:
    w = _window(args, args.lags)
    u = resolve_threshold(w, threshold_from_args(args))
    rows = []
    for j, t in enumerate(args.lags):
        reference = independence_reference(w, u, t, args.x, args.conditioning, args.mc_reps,
                                           int(derive_rng(args.seed, j).integers(2**63)), args.target)
        quantile = independence_quantile(w, u, t, args.x, args.estimator, args.level, args.mc_reps,
                                         int(derive_rng(args.seed, j, 1).integers(2**63)), args.conditioning,
                                         args.target)
        rows.append({
            "lag": t, "x": args.x, "conditioning": args.conditioning, "target": args.target, "threshold": u,
            "analytic": reference.analytic, "mc_value": reference.mc_value,
            "replicates_used": reference.replicates_used, "estimator": args.estimator,
            "level": args.level, "quantile": quantile,
        })
    manifest.csv("independence.csv", rows)
    print(f"✅ Independence references saved to {manifest.out_dir}")
    return 0


# --- Entry point ---

def _subparser(parser: argparse.ArgumentParser, argv: List[str]) -> Optional[argparse.ArgumentParser]:
    for arg in argv:
        if arg in parser.subcommands:
            return parser.subcommands[arg]
    return None


def main(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    logging.basicConfig(level=settings.LOG_LEVEL, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()

    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    try:
        if known.config:
            subparser = _subparser(parser, argv)
            if subparser is not None:
                unused = apply_config(subparser, read_config(known.config))
                if unused:
                    print(f"⚠️ Ignoring config keys not used by this subcommand: {', '.join(unused)}")
    except (OSError, ValueError) as e:
        return _fail(e)

    args = parser.parse_args(argv)
    resolved = {key: value for key, value in vars(args).items() if key not in SKIPPED_CONFIG}
    manifest = RunManifest(args.command, args.seed, resolved, Path(args.out))
    try:
        status = args.func(args, manifest)
    except (SpectralTailError, ValueError, OSError) as e:
        return _fail(e)
    manifest.write()
    return status


def _fail(error: Exception) -> int:
    print(f"❌ {error}")
    json.dump({"error": type(error).__name__, "message": str(error)}, sys.stderr)
    sys.stderr.write("\n")
    return 1


if __name__ == "__main__":
    sys.exit(main())
