"""
Command-line entry point for the terminal sliding mode simulator.

    python tsm_sim.py simulate --config scenarios/coulomb_friction.cfg --out results
    python tsm_sim.py batch --config-dir scenarios --out results
    python tsm_sim.py sweep --config scenarios/sweeps/alpha_regimes.cfg --out results
    python tsm_sim.py check --config scenarios/harmonic.cfg

Exit codes: 0 success, 1 validation failure, 2 simulation divergence, 3 I/O failure.
"""

import argparse
import logging
import os
import sys

from dotenv import load_dotenv

import scenario_io
from errors import (
    EXIT_DIVERGED,
    EXIT_IO,
    EXIT_OK,
    EXIT_VALIDATION,
    DomainError,
    ScenarioError,
    SimulationDiverged,
)

load_dotenv()

CONFIG = {
    'log_level': os.getenv('TSM_LOG_LEVEL', 'INFO'),
    'workers': os.getenv('TSM_WORKERS', '1'),
}

logger = logging.getLogger(__name__)


def setup_logging(verbose=False):
    level = logging.DEBUG if verbose else getattr(logging, CONFIG['log_level'].upper(), logging.INFO)
    logging.basicConfig(
        level=level,
        format='%(asctime)s - %(levelname)s - %(message)s',
    )


def default_workers():
    try:
        return max(1, int(CONFIG['workers']))
    except ValueError:
        logger.warning(f"Ignoring TSM_WORKERS={CONFIG['workers']!r}: not an integer")
        return 1


def print_rows(rows, columns):
    for row in rows:
        print("  ".join(f"{c}={scenario_io.format_cell(row.get(c))}" for c in columns if row.get(c) is not None))


def cmd_simulate(args):
    scenario = scenario_io.load_scenario(args.config)
    os.makedirs(args.out, exist_ok=True)
    row = scenario_io.execute_scenario(scenario, args.out)
    print_rows([row], scenario_io.SUMMARY_COLUMNS)
    return scenario_io.exit_code([row])


def cmd_batch(args):
    scenarios = scenario_io.load_scenarios(args.config_dir)
    rows = scenario_io.run_batch(scenarios, args.out, workers=args.workers)
    print_rows(rows, scenario_io.SUMMARY_COLUMNS)
    message = scenario_io.failure_message(rows)
    if message:
        logger.error(f"Batch finished with failures: {message}")
    return scenario_io.exit_code(rows)


def cmd_sweep(args):
    values = scenario_io.split_values(args.values) if args.values else None
    sweep = scenario_io.load_sweep(args.config, parameter=args.param, values=values)
    rows = scenario_io.run_sweep(sweep, args.out, workers=args.workers)
    print_rows(rows, ["name", sweep.parameter] + scenario_io.SWEEP_COLUMNS[1:])
    message = scenario_io.failure_message(rows)
    if message:
        logger.error(f"Sweep finished with failures: {message}")
    return scenario_io.exit_code(rows)


def cmd_check(args):
    scenario = scenario_io.load_scenario(args.config)
    for label, value in scenario_io.check_scenario(scenario):
        print(f"{label}: {value}")
    print()
    print(scenario_io.normalize_dump(scenario), end="")
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(
        prog='tsm_sim',
        description='Simulate and analyze optimal terminal sliding mode control of a bounded double integrator.',
    )
    ap.add_argument('--verbose', '-v', action='store_true', help='Log at DEBUG level.')
    sub = ap.add_subparsers(dest='command', required=True)

    p = sub.add_parser('simulate', help='Run a single scenario.')
    p.add_argument('--config', required=True, help='Scenario .cfg file.')
    p.add_argument('--out', required=True, help='Output directory.')
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser('batch', help='Run every *.cfg in a directory.')
    p.add_argument('--config-dir', required=True)
    p.add_argument('--out', required=True)
    p.add_argument('--workers', type=int, default=None, help='Parallel runs (default: TSM_WORKERS or 1).')
    p.set_defaults(func=cmd_batch)

    p = sub.add_parser('sweep', help='Run one scenario over a list of parameter values.')
    p.add_argument('--config', required=True)
    p.add_argument('--param', default=None, help='Dotted key, e.g. surface.alpha (default: [sweep] parameter).')
    p.add_argument('--values', default=None, help='Comma-separated values (default: [sweep] values).')
    p.add_argument('--out', required=True)
    p.add_argument('--workers', type=int, default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser('check', help='Validate a scenario and print its condition verdicts.')
    p.add_argument('--config', required=True)
    p.set_defaults(func=cmd_check)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    setup_logging(args.verbose)
    if getattr(args, 'workers', 0) is None:
        args.workers = default_workers()

    try:
        return args.func(args)
    except (ScenarioError, DomainError) as e:
        logger.error(f"Invalid scenario: {e}")
        return EXIT_VALIDATION
    except SimulationDiverged as e:
        logger.error(str(e))
        return EXIT_DIVERGED
    except OSError as e:
        logger.error(f"I/O error: {e}")
        return EXIT_IO


if __name__ == '__main__':
    sys.exit(main())
