"""Command-line entry points: simulate, fit, summarize, reproduce-table."""

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from .analysis import curve_table, scalar_summaries, survival_curve
from .config import DEFAULT_CONFIG_PATH, AppConfig, ScenarioConfig, configure_logging, load_config
from .diagnostics import diagnostics
from .errors import FuncBayesError, error_record
from .loader import DatasetSchema, load_fit, parse_dataset, save_fit, write_dataset
from .pipeline import MODEL_KINDS, FitResult, RegressionPipeline
from .sampler import collect_chain_stats
from .simlab import desk_sampler, generate, reproduce_cell, scenario_rng

logger = logging.getLogger(__name__)

CURVE_FILE = "beta.csv"
SCALAR_FILE = "scalars.json"
DIAGNOSTICS_FILE = "diagnostics.json"
SURVIVAL_FILE = "survival.csv"


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", default=None, help=f"Path to config file (default {DEFAULT_CONFIG_PATH} if present).")
    parser.add_argument("--log-level", default=None, help="Logging level override.")
    parser.add_argument("--seed", type=int, default=None, help="Master seed.")


def _add_fit_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--k", type=int, default=None, help="Number of spline basis functions; 30-40 usually suffice.")
    parser.add_argument("--bs", choices=["open", "cyclic"], default=None, help="Spline basis family.")
    parser.add_argument("--iter", type=int, default=None, help="Iterations per chain, warmup included.")
    parser.add_argument("--warmup", type=int, default=None, help="Warmup iterations per chain.")
    parser.add_argument("--chains", type=int, default=None, help="Number of chains.")
    parser.add_argument("--pve", type=float, default=None, help="FPCA proportion of variance explained.")
    parser.add_argument("--hazard-df", type=int, default=None, help="Baseline hazard M-spline degrees of freedom.")


def _add_scenario_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--model", required=True, choices=list(ScenarioConfig.MODELS))
    parser.add_argument("--n", type=int, default=500, help="Subjects per replication.")
    parser.add_argument("--tau", type=float, default=5.0, help="Signal strength.")
    parser.add_argument("--noise-sd", type=float, default=0.0, help="Measurement noise sd on W (joint models).")
    parser.add_argument("--replications", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="funcbayes", description="Bayesian functional regression.")
    sub = parser.add_subparsers(dest="command", required=True)

    simulate = sub.add_parser("simulate", help="Write scenario datasets.")
    _add_common(simulate)
    _add_scenario_flags(simulate)
    simulate.add_argument("--out", required=True, help="Output directory.")

    fit = sub.add_parser("fit", help="Fit a model to a dataset.")
    _add_common(fit)
    _add_fit_flags(fit)
    fit.add_argument("--model", required=True, choices=list(MODEL_KINDS))
    fit.add_argument("--data", required=True, help="Delimited dataset file.")
    fit.add_argument("--sep", default=",", help="Field separator.")
    fit.add_argument("--out", required=True, help="Output directory.")

    summarize = sub.add_parser("summarize", help="Recompute tables from saved draws.")
    _add_common(summarize)
    summarize.add_argument("--out", required=True, help="Fit output directory.")

    reproduce = sub.add_parser("reproduce-table", help="Run one benchmark cell at desk scale.")
    _add_common(reproduce)
    _add_fit_flags(reproduce)
    _add_scenario_flags(reproduce)
    reproduce.add_argument("--workers", type=int, default=None, help="Replication processes.")
    reproduce.add_argument("--out", default=None, help="Optional JSON report path.")
    return parser


def _load_app_config(args: argparse.Namespace) -> AppConfig:
    path = args.config
    if path is None and Path(DEFAULT_CONFIG_PATH).exists():
        path = DEFAULT_CONFIG_PATH
    raw = load_config(path) if path else {}
    configure_logging(raw.get("logging", {}), args.log_level)
    app = AppConfig.from_dict(raw)

    spline = app.spline
    if getattr(args, "k", None) is not None:
        spline = replace(spline, k=args.k)
    if getattr(args, "bs", None) is not None:
        spline = replace(spline, bs=args.bs)
    hazard = app.hazard
    if getattr(args, "hazard_df", None) is not None:
        hazard = replace(hazard, df=args.hazard_df)
    fpca = app.fpca
    if getattr(args, "pve", None) is not None:
        fpca = replace(fpca, pve=args.pve, npc=None)

    overrides: Dict[str, Any] = {}
    for flag, name in (("iter", "n_iter"), ("warmup", "n_warmup"), ("chains", "n_chains"), ("seed", "seed")):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[name] = value
    sampler = replace(app.sampler, **overrides) if overrides else app.sampler
    return replace(app, spline=spline, hazard=hazard, fpca=fpca, sampler=sampler)


def _scenario(args: argparse.Namespace, app: AppConfig) -> ScenarioConfig:
    sim = dict(app.simulation)
    sim.update(model=args.model, n=args.n, tau=args.tau, noise_sd=args.noise_sd)
    if args.seed is not None:
        sim["seed"] = args.seed
    if args.replications is not None:
        sim["replications"] = args.replications
    if getattr(args, "workers", None) is not None:
        sim["workers"] = args.workers
    return ScenarioConfig.from_dict(sim)


def _curve_tables(result: FitResult, app: AppConfig) -> Dict[str, pd.DataFrame]:
    alpha, pointwise = app.analysis.alpha, app.analysis.pointwise
    if result.model == "fosr":
        return {
            f"beta_{name}.csv": curve_table(curves, alpha, pointwise)
            for name, curves in zip(result.x_names, result.fosr_curves())
        }
    return {CURVE_FILE: curve_table(result.beta_curves(), alpha, pointwise)}


def _diagnostics_record(result: FitResult) -> Dict[str, Any]:
    draws = result.draws
    stats = {"rhat": draws.rhat, "ess": draws.ess}
    if draws.rhat is None and draws.num_chains >= 2 and draws.num_draws >= 4:
        stats = diagnostics(draws)
    rhat, ess = stats["rhat"], stats["ess"]
    record: Dict[str, Any] = {
        "model": result.model,
        "chains": collect_chain_stats(draws),
        "divergences": int(np.sum(draws.divergences)),
        "warnings": list(draws.warnings),
        "elapsed_sec": result.elapsed_sec,
    }
    if rhat is not None:
        record["max_rhat"] = float(np.nanmax(rhat)) if np.any(np.isfinite(rhat)) else None
        record["min_ess"] = float(np.nanmin(ess)) if np.any(np.isfinite(ess)) else None
        record["rhat"] = {label: _finite(v) for label, v in zip(draws.layout.labels(), rhat)}
        record["ess"] = {label: _finite(v) for label, v in zip(draws.layout.labels(), ess)}
    return record


def _finite(value: float) -> Optional[float]:
    return float(value) if np.isfinite(value) else None


def write_outputs(result: FitResult, out_dir: Path, app: AppConfig) -> List[Path]:
    """Curve interval tables, scalar summaries, diagnostics and survival at eta = 0."""
    written = []
    for name, table in _curve_tables(result, app).items():
        path = out_dir / name
        table.to_csv(path, index=False)
        written.append(path)
    if result.model != "fosr":
        scalars = scalar_summaries(result.draws, result.z_names)
        path = out_dir / SCALAR_FILE
        path.write_text(json.dumps(scalars.to_dict(orient="records"), indent=2), encoding="utf-8")
        written.append(path)
    if result.hazard is not None:
        curves = survival_curve(result.draws, result.hazard, eta=0.0, include_intercept=True)
        table = curve_table(curves, app.analysis.alpha, app.analysis.pointwise)
        path = out_dir / SURVIVAL_FILE
        table.to_csv(path, index=False)
        written.append(path)
    path = out_dir / DIAGNOSTICS_FILE
    path.write_text(json.dumps(_diagnostics_record(result), indent=2), encoding="utf-8")
    written.append(path)
    return written


def cmd_simulate(args: argparse.Namespace) -> int:
    app = _load_app_config(args)
    scenario = _scenario(args, app)
    out = Path(args.out)
    for r in range(scenario.replications):
        data = generate(scenario, scenario_rng(scenario, r))
        path = write_dataset(data, out / f"{scenario.model}_n{scenario.n}_rep{r:03d}.csv")
        logger.info("wrote %s", path)
    print(json.dumps({"model": scenario.model, "replications": scenario.replications, "out": str(out)}))
    return 0


def cmd_fit(args: argparse.Namespace) -> int:
    app = _load_app_config(args)
    schema = DatasetSchema(
        functional_response=args.model == "fosr",
        require_censor=args.model in ("cox", "joint-cox", "two-step-cox"),
    )
    data = parse_dataset(args.data, schema, sep=args.sep)
    result = RegressionPipeline(app).fit(args.model, data)
    out = save_fit(result, args.out)
    written = write_outputs(result, out, app)
    print(json.dumps({"model": result.model, "out": str(out), "files": [p.name for p in written]}))
    return 0


def cmd_summarize(args: argparse.Namespace) -> int:
    app = _load_app_config(args)
    result = load_fit(args.out)
    written = write_outputs(result, Path(args.out), app)
    print(json.dumps({"model": result.model, "files": [p.name for p in written]}))
    return 0


def cmd_reproduce(args: argparse.Namespace) -> int:
    app = _load_app_config(args)
    if args.iter is None and args.chains is None:
        app = desk_sampler(app)
    scenario = _scenario(args, app)
    record = reproduce_cell(scenario, app)
    text = json.dumps(record, indent=2)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    print(text)
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "summarize": cmd_summarize,
    "reproduce-table": cmd_reproduce,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except FuncBayesError as exc:
        print(json.dumps(error_record(exc)))
        return 2
    except Exception as exc:  # noqa: BLE001
        logger.exception("unexpected failure")
        print(json.dumps(error_record(exc)))
        return 1


if __name__ == "__main__":
    sys.exit(main())
