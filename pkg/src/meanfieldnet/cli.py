"""meanfieldnet.cli

Command-line entry point.

Subcommands:
    run <preset>                      run an experiment preset and write its CSV
    solve-wtm <json>                  solve a reduced WTM problem with MAPEL
    mfg <json>                        solve a delay-constrained mean-field game
    capacity {iesh-s,iesh-g} <json>   transport capacity of an IESH network
    simulate <json>                   Monte Carlo rates of a massive network
    validate <path>                   list every invariant violation of a config

Exit codes: 0 success, 1 infeasible or flagged, 2 configuration error,
3 numerical failure.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import ValidationError

from .__about__ import __version__
from .builders import MeanFieldWtmBuilder
from .capacity import iesh_g_capacity, iesh_s_capacity
from .config import CapacityConfig, MfgConfig, NetworkConfig, collect_diagnostics, load_config, parse_override
from .errors import EXIT_CONFIG, EXIT_FLAGGED, EXIT_OK, exit_code_for
from .io import create_directory, write_json
from .logging_utils import setup_logger
from .mfg import pdhg_solve
from .presets import FULL_TRIALS, PresetFactory, run_preset
from .reduction import MeanFieldWtm
from .simulation import PowerPolicy, simulate_massive, simulate_multihop
from .wtm import mapel_solve, oracle_grid_search

logger = logging.getLogger(__name__)

DEFAULT_TRIALS = 10_000


def _overrides(pairs: Optional[List[str]]) -> Dict[str, Any]:
    return dict(parse_override(pair) for pair in pairs or [])


def _trials(args: argparse.Namespace) -> int:
    if args.trials is not None:
        return args.trials
    return FULL_TRIALS if args.full else DEFAULT_TRIALS


def _emit(payload: Dict[str, Any], args: argparse.Namespace, filename: str) -> None:
    print(json.dumps(payload, indent=2, sort_keys=True))
    if args.out is not None:
        create_directory(args.out)
        write_json(args.out / filename, payload)


def _cmd_run(args: argparse.Namespace) -> int:
    run = run_preset(
        args.preset,
        _overrides(args.set),
        out=args.out or Path("results"),
        trials=args.trials,
        seed=args.seed,
        full=args.full,
        workers=args.workers,
    )
    for path in run.paths:
        print(path)
    return EXIT_FLAGGED if run.flagged else EXIT_OK


def _cmd_solve_wtm(args: argparse.Namespace) -> int:
    problem = MeanFieldWtm.from_json(args.problem)
    changes = _overrides(args.set)
    if changes:
        problem = problem.replace(**changes)
    if args.method == "grid":
        solution = oracle_grid_search(problem, grid_points=args.grid_points)
    else:
        solution = mapel_solve(problem, delta0=args.delta0)
    _emit(solution.to_dict(), args, "wtm_solution.json")
    return EXIT_OK if solution.converged and solution.feasible else EXIT_FLAGGED


def _cmd_mfg(args: argparse.Namespace) -> int:
    config = load_config(args.config, MfgConfig)
    changes = _overrides(args.set)
    if changes:
        config = config.with_updates(**changes)
    solution = pdhg_solve(config)
    _emit(solution.to_dict(), args, "mfg_solution.json")
    if args.out is not None:
        solution.fields_to_csv(args.out / "mfg_rho.csv", "rho")
        solution.fields_to_csv(args.out / "mfg_p.csv", "p")
    return EXIT_OK if solution.converged else EXIT_FLAGGED


def _cmd_capacity(args: argparse.Namespace) -> int:
    config = load_config(args.config, CapacityConfig)
    changes = _overrides(args.set)
    if changes:
        config = config.with_updates(**changes)
    solve = iesh_s_capacity if args.method == "iesh-s" else iesh_g_capacity
    result = solve(config)
    _emit(result.to_dict(), args, f"{args.method}_capacity.json")
    if args.out is not None:
        result.trace_to_csv(args.out / f"{args.method}_trace.csv")
    return EXIT_FLAGGED if result.flagged else EXIT_OK


def _cmd_simulate(args: argparse.Namespace) -> int:
    config = load_config(args.config, NetworkConfig)
    changes = _overrides(args.set)
    if changes:
        config = config.with_updates(**changes)
    trials = _trials(args)
    if args.multihop is not None:
        report = simulate_multihop(config, args.multihop, trials, args.seed)
    else:
        builder = MeanFieldWtmBuilder(config=config)
        solution = mapel_solve(builder.build())
        policy = PowerPolicy.from_vector(solution.p, builder.table.NI, len(builder.direct))
        report = simulate_massive(config, policy, trials, args.seed, builder=builder)
    _emit(report.to_dict(), args, "simulation.json")
    if args.out is not None:
        report.histogram_to_csv(args.out / "rate_histogram.csv")
    return EXIT_OK


def _cmd_validate(args: argparse.Namespace) -> int:
    diagnostics = collect_diagnostics(args.path)
    for field, message in diagnostics:
        print(f"{field}: {message}")
    if diagnostics:
        return EXIT_CONFIG
    print(f"{args.path}: ok")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="master random seed")
    common.add_argument("--trials", type=int, default=None, help="Monte Carlo trials")
    common.add_argument("--out", type=Path, default=None, help="output directory")
    common.add_argument("--full", action="store_true", help=f"use {FULL_TRIALS} trials")
    common.add_argument(
        "--set",
        action="append",
        metavar="KEY=VALUE",
        help="override a config field; values are parsed as JSON when possible",
    )
    common.add_argument("-v", "--verbose", action="count", default=0)
    common.add_argument("--log-dir", type=Path, default=None)

    parser = argparse.ArgumentParser(
        prog="meanfieldnet",
        description="Mean-field throughput analysis and power control for large wireless networks.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", parents=[common], help="run an experiment preset")
    run.add_argument("preset", choices=PresetFactory.names())
    run.add_argument("--workers", type=int, default=1, help="worker processes for the sweep points")
    run.set_defaults(handler=_cmd_run)

    wtm = sub.add_parser("solve-wtm", parents=[common], help="solve a WTM problem JSON")
    wtm.add_argument("problem", type=Path)
    wtm.add_argument("--method", choices=["mapel", "grid"], default="mapel")
    wtm.add_argument("--delta0", type=float, default=0.01)
    wtm.add_argument("--grid-points", type=int, default=50)
    wtm.set_defaults(handler=_cmd_solve_wtm)

    mfg = sub.add_parser("mfg", parents=[common], help="solve a mean-field game config")
    mfg.add_argument("config", type=Path)
    mfg.set_defaults(handler=_cmd_mfg)

    capacity = sub.add_parser("capacity", parents=[common], help="IESH transport capacity")
    capacity.add_argument("method", choices=["iesh-s", "iesh-g"])
    capacity.add_argument("config", type=Path)
    capacity.set_defaults(handler=_cmd_capacity)

    simulate = sub.add_parser("simulate", parents=[common], help="Monte Carlo rates")
    simulate.add_argument("config", type=Path)
    simulate.add_argument(
        "--multihop",
        type=float,
        default=None,
        metavar="R0",
        help="simulate relayed links with hop length R0 instead of single-hop links",
    )
    simulate.set_defaults(handler=_cmd_simulate)

    validate = sub.add_parser("validate", parents=[common], help="check a config file")
    validate.add_argument("path", type=Path)
    validate.set_defaults(handler=_cmd_validate)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    setup_logger("meanfieldnet", log_dir=args.log_dir, level=level)
    try:
        return args.handler(args)
    except ValidationError as e:
        logger.error("Invalid input: %s", e)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as e:
        code = exit_code_for(e)
        logger.error("%s failed: %s", args.command, e)
        print(f"error: {e}", file=sys.stderr)
        for field, message in getattr(e, "diagnostics", []):
            print(f"  {field}: {message}", file=sys.stderr)
        return code
