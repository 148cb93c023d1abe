#!/usr/bin/env python3
"""
MaxStable Lab command line.

Usage:
  python main.py check --model model.json --trials 200 --seed 1
  python main.py fit --panel panel.csv --sites sites.csv --model model.json
  python main.py compare --panel panel.csv --sites sites.csv --models models.json --out tic.csv
  python main.py bootstrap --model fitted.json --sites sites.csv --years 69 --reps 20 --seed 1
  python main.py diagnose --panel panel.csv --sites sites.csv --models models.json
  python main.py margins --panel panel.csv --sites sites.csv
  python main.py simulate --model model.json --sites sites.csv --reps 50 --seed 1 --out sim.csv
  python main.py simulate --model model.json --grid 0,300,0,300,20,20 --reps 1 --out field.csv
  python main.py regimes --which thm52 --n 1000000 --seed 1 --out chi.csv

Tables go to --out (CSV) or stdout, reports are JSON on stdout, logs on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

import pandas as pd
import structlog
from dotenv import find_dotenv, load_dotenv

from empirical.madogram import theta_vs_distance
from empirical.margins import fit_margins, margins_table
from inference.bootstrap import bootstrap
from inference.fitting import compare, fit, fit_margins_and_transform
from inference.information import tic
from lab.random_scale import regime_experiment
from models.model_config import load_model_config, load_model_configs
from models.validity import check_spec
from pipeline.ingest import load_panel, load_site_set, write_panel
from simulation.exact import simulate_exact, simulate_fields
from simulation.grid import simulate_field_grid
from utils.config_utils import get_config
from utils.errors import MaxStableError, OptimizationError, TICError, ValidationError

logger = structlog.get_logger(__name__)


def configure_logging(level: Optional[str] = None) -> None:
    level_name = str(level or get_config("LOG_LEVEL", "INFO")).upper()
    logging.basicConfig(
        level=getattr(logging, level_name, logging.INFO),
        format="%(asctime)s [%(levelname)s] %(message)s",
        stream=sys.stderr,
    )
    structlog.configure(
        processors=[
            structlog.stdlib.filter_by_level,
            structlog.stdlib.add_logger_name,
            structlog.processors.format_exc_info,
            structlog.processors.KeyValueRenderer(key_order=["event"]),
        ],
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=False,
    )


def _emit_table(frame: pd.DataFrame, out: Optional[str]) -> None:
    if out:
        frame.to_csv(out, index=False)
        logger.info("table_written", path=out, rows=len(frame))
    else:
        frame.to_csv(sys.stdout, index=False)


def _emit_json(payload: dict) -> None:
    json.dump(payload, sys.stdout, indent=2, default=float)
    sys.stdout.write("\n")


def cmd_check(args: argparse.Namespace) -> int:
    spec = load_model_config(args.model)
    report = check_spec(spec, n_sites=args.n_sites, n_trials=args.trials, seed=args.seed)
    _emit_json(report.to_dict())
    return 0 if report.passed else 2


def cmd_fit(args: argparse.Namespace) -> int:
    sites, panel = load_panel(args.panel, args.sites)
    _, frechet = fit_margins_and_transform(panel)
    report = fit(frechet, sites, load_model_config(args.model))
    if args.tic:
        try:
            tic(frechet, sites, report, allow_pinv=args.allow_pinv)
        except (TICError, OptimizationError) as e:
            logger.error("tic_failed", error=str(e))
    _emit_json(report.to_dict())
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    sites, panel = load_panel(args.panel, args.sites)
    _, frechet = fit_margins_and_transform(panel)
    table, _ = compare(frechet, sites, load_model_configs(args.models), allow_pinv=args.allow_pinv)
    _emit_table(table, args.out)
    return 0


def cmd_bootstrap(args: argparse.Namespace) -> int:
    sites, _ = load_site_set(args.sites)
    result = bootstrap(load_model_config(args.model), sites, args.years, args.reps, seed=args.seed, progress=True)
    _emit_table(result.table, args.out)
    logger.info("bootstrap_summary", reps=result.n_reps, failed=result.n_failed)
    return 0


def cmd_diagnose(args: argparse.Namespace) -> int:
    sites, panel = load_panel(args.panel, args.sites)
    specs = load_model_configs(args.models) if args.models else []
    _emit_table(theta_vs_distance(panel, sites, specs), args.out)
    return 0


def cmd_margins(args: argparse.Namespace) -> int:
    _, panel = load_panel(args.panel, args.sites)
    _emit_table(margins_table(fit_margins(panel)), args.out)
    return 0


def _parse_grid(text: str):
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 6:
        raise ValidationError("grid must be xmin,xmax,ymin,ymax,nx,ny")
    xmin, xmax, ymin, ymax = (float(v) for v in parts[:4])
    return (xmin, xmax, ymin, ymax), (int(parts[4]), int(parts[5]))


def cmd_simulate(args: argparse.Namespace) -> int:
    spec = load_model_config(args.model)
    if args.grid:
        region, resolution = _parse_grid(args.grid)
        stations = load_site_set(args.sites)[0] if args.sites else None
        frame = simulate_field_grid(region, resolution, spec, seed=args.seed, n_reps=args.reps,
                                    stations=stations, altitude_km=args.altitude)
        _emit_table(frame, args.out)
        return 0
    if not args.sites:
        raise ValidationError("simulate needs --sites or --grid")
    sites, reference = load_site_set(args.sites)
    if args.out:
        # written panels hold two or more years
        panel = simulate_exact(sites, spec, args.reps, seed=args.seed)
        out = Path(args.out)
        write_panel(panel, sites, out, out.with_name(out.stem + "_sites.csv"), reference)
    else:
        frame = pd.DataFrame(simulate_fields(sites, spec, args.reps, seed=args.seed), columns=list(sites.ids))
        frame.insert(0, "year", list(range(1, args.reps + 1)))
        _emit_table(frame, None)
    return 0


def cmd_regimes(args: argparse.Namespace) -> int:
    result = regime_experiment(args.which, seed=args.seed, n=args.n, progress=True)
    _emit_table(result.to_frame(), args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Non-stationary max-stable process toolkit")
    parser.add_argument("--log-level", default=None, help="Override LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="Certify definiteness of a model's kernel")
    p.add_argument("--model", required=True)
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--n-sites", type=int, default=10)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_check)

    def data_args(p):
        p.add_argument("--panel", required=True, help="Block maxima CSV (year,<site ids>)")
        p.add_argument("--sites", required=True, help="Site metadata CSV (site_id,lon,lat,alt_m)")

    p = sub.add_parser("fit", help="Fit one dependence model by pairwise likelihood")
    data_args(p)
    p.add_argument("--model", required=True)
    p.add_argument("--tic", action="store_true", help="Also compute TIC")
    p.add_argument("--allow-pinv", action="store_true")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("compare", help="Fit several models and tabulate TIC")
    data_args(p)
    p.add_argument("--models", required=True, help="Config with a 'models' list")
    p.add_argument("--allow-pinv", action="store_true")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("bootstrap", help="Parametric bootstrap of a fitted model")
    p.add_argument("--model", required=True)
    p.add_argument("--sites", required=True)
    p.add_argument("--years", type=int, required=True)
    p.add_argument("--reps", type=int, default=20)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_bootstrap)

    p = sub.add_parser("diagnose", help="Empirical vs model extremal coefficients by distance")
    data_args(p)
    p.add_argument("--models", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("margins", help="Site-wise GEV estimates")
    data_args(p)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_margins)

    p = sub.add_parser("simulate", help="Exact simulation on stations or a grid")
    p.add_argument("--model", required=True)
    p.add_argument("--sites", default=None)
    p.add_argument("--grid", default=None, help="xmin,xmax,ymin,ymax,nx,ny in km")
    p.add_argument("--altitude", type=float, default=0.0, help="Grid altitude (km) when no stations are given")
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("regimes", help="Tail-dependence curves of random-scale constructions")
    p.add_argument("--which", required=True, choices=["thm51", "thm52", "thm53"])
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_regimes)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv(find_dotenv(usecwd=True))
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        return args.func(args)
    except MaxStableError as e:
        logger.error("command_failed", command=args.command, error_type=type(e).__name__, error=str(e))
        return 1


if __name__ == "__main__":
    sys.exit(main())
