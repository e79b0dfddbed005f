from utils.config_loader import get_config, reload_config
from utils.logger import setup_logger
from utils.operator_io import parse_operator_file, write_grid_csv
from utils.report_generator import emit_report
from modules.errors import PhiError
from modules.scenario_runner import load_scenario, run_scenario
from modules.semigroups import koopman_shift_truncated, orbit_grid_function, semigroup_at, semigroup_limit
from modules.spectral_core import eig_decompose, resolution_defects
from modules.spectral_maps import parse_map
from modules.transfinite_engine import ScalarMapTransform
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from colorama import Fore, Style, init as colorama_init
from config import DEFAULT_CONFIG_PATH, VERSION
import numpy as np
import argparse
import os
import sys


def _vector(text):
    try:
        return np.array([float(value) for value in text.split(',')])
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}")


def parse_arguments(argv=None):
    """Parse command-line arguments for phi."""
    parser = argparse.ArgumentParser(
        prog='phi',
        description='phi: transfinite iteration of spectral transforms on self-adjoint operators',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python3 main.py run configs/scenarios/square_projection.yaml
  python3 main.py run configs/scenarios/*.yaml --jobs 4 --out runs/batch
  python3 main.py decompose data/operators/mixed3.txt
  python3 main.py semigroup data/operators/generator3.txt --t 2.5
  python3 main.py koopman data/operators/mixed3.txt --map square --blocks 4
        """
    )
    parser.add_argument('--version', action='version', version=f'phi {VERSION}')
    parser.add_argument('--config', '-c', type=str, default=None,
                        help=f'Configuration file (default: {DEFAULT_CONFIG_PATH} when present)')
    parser.add_argument('--log-level', type=str, default=None,
                        help='Override the configured log level')

    subparsers = parser.add_subparsers(dest='command', required=True)

    run = subparsers.add_parser('run', help='Run one or more scenario files')
    run.add_argument('scenarios', nargs='+', help='Scenario YAML files')
    run.add_argument('--out', '-o', type=str, default=None,
                     help='Output directory (one subdirectory per scenario when several are given)')
    run.add_argument('--seed', type=int, default=None, help='Override the scenario seed')
    run.add_argument('--jobs', '-j', type=int, default=1, help='Scenarios run in parallel (default: 1)')

    decompose = subparsers.add_parser('decompose', help='Print the spectral decomposition of an operator')
    decompose.add_argument('operator', help='Operator file')

    semigroup = subparsers.add_parser('semigroup', help='Print exp(tA) and its long-time limit')
    semigroup.add_argument('operator', help='Operator file')
    semigroup.add_argument('--t', type=float, required=True, help='Time t >= 0')

    koopman = subparsers.add_parser('koopman', help='Assemble the truncated Koopman shift')
    koopman.add_argument('operator', help='Operator file')
    koopman.add_argument('--map', '-m', type=str, required=True, help='Spectral map, e.g. square or power:3')
    koopman.add_argument('--blocks', '-n', type=int, default=None, help='Number of sequence slots N')
    koopman.add_argument('--orbit-csv', type=str, default=None, help='Write the orbit grid function of x0 here')
    koopman.add_argument('--x0', type=_vector, default=None, help='Comma-separated start vector (default: all ones)')

    args = parser.parse_args(argv)
    if args.command == 'run' and args.jobs < 1:
        parser.error('--jobs must be at least 1')
    return args


def _print_matrix(title, matrix):
    print(f"{Style.BRIGHT}{title}{Style.RESET_ALL}")
    print(np.array2string(np.asarray(matrix), precision=6, suppress_small=True))


def _run_one(path, args, config, batch):
    scenario = load_scenario(path, config)
    if args.seed is not None:
        scenario = replace(scenario, seed=args.seed)
    if args.out:
        output = os.path.join(args.out, scenario.name) if batch else args.out
    else:
        output = scenario.output
    report = run_scenario(scenario)
    emit_report(report, output)
    return scenario.name, report, output


def command_run(args, config):
    batch = len(args.scenarios) > 1
    if args.jobs > 1 and batch:
        with ThreadPoolExecutor(max_workers=args.jobs) as executor:
            outcomes = list(executor.map(lambda path: _run_one(path, args, config, batch), args.scenarios))
    else:
        outcomes = [_run_one(path, args, config, batch) for path in args.scenarios]

    for name, report, output in outcomes:
        fixed_point = report.fixed_point
        if report.stabilized:
            print(f"{Fore.GREEN}[STABILIZED]{Style.RESET_ALL} {name}: stage {fixed_point['stage']}, "
                  f"residual {fixed_point['final_residual']:.3e}, dim {fixed_point['dim']} -> {output}")
        else:
            print(f"{Fore.YELLOW}[NOT STABILIZED]{Style.RESET_ALL} {name}: {fixed_point['reason']} "
                  f"after {fixed_point['stages_recorded']} stages -> {output}")
    return 0


def command_decompose(args, config):
    A = parse_operator_file(args.operator, config.get('numerics.sym_tol'))
    D = eig_decompose(A, config.get('numerics.cluster_tol'), config.get('numerics.max_sweeps'))
    print(f"{Style.BRIGHT}Operator{Style.RESET_ALL} {args.operator} (dim {A.dim})")
    for value, multiplicity in zip(D.eigenvalues, D.multiplicities):
        print(f"  eigenvalue {value: .12g}  multiplicity {multiplicity}")
    print(f"{Style.BRIGHT}Resolution defects{Style.RESET_ALL}")
    for name, value in resolution_defects(D).items():
        print(f"  {name:<15} {value:.3e}")
    return 0


def command_semigroup(args, config):
    A = parse_operator_file(args.operator, config.get('numerics.sym_tol'))
    D = eig_decompose(A, config.get('numerics.cluster_tol'), config.get('numerics.max_sweeps'))
    _print_matrix(f"exp({args.t} A)", semigroup_at(D, args.t).entries)
    limit = semigroup_limit(D, config.get('semigroups.kernel_tol'))
    _print_matrix("Kernel projection P", limit.projection.entries)
    print(f"gap {limit.gap:.12g}; ||exp(tA) - P|| <= {limit.decay_bound(args.t):.3e} at t = {args.t}")
    return 0


def command_koopman(args, config):
    A = parse_operator_file(args.operator, config.get('numerics.sym_tol'))
    f = parse_map(args.map, config.get('orbits.escape_bound'))
    T = ScalarMapTransform(f, enforce_axioms=config.get('iteration.enforce_axioms', True),
                           cluster_tol=config.get('numerics.cluster_tol'), max_sweeps=config.get('numerics.max_sweeps'))
    blocks = args.blocks or config.get('semigroups.koopman_blocks')
    K = koopman_shift_truncated(T, A, blocks, config.get('iteration.space_budget'))
    print(f"{Style.BRIGHT}Truncated shift{Style.RESET_ALL}: {K.block_count} blocks of dim {K.block_dim} "
          f"({K.matrix.shape[0]}x{K.matrix.shape[1]})")
    print("  nonzero blocks: " + ", ".join(f"({n}, {n - 1})" for n in range(1, K.block_count)))
    print(f"  spectral norm {K.spectral_norm:.6g}; nilpotent of order <= {K.block_count}")
    if args.orbit_csv:
        x0 = args.x0 if args.x0 is not None else np.ones(A.dim)
        path = write_grid_csv(orbit_grid_function(K.stage_maps, x0), args.orbit_csv)
        print(f"  orbit grid function written to {path}")
    return 0


COMMANDS = {
    'run': command_run,
    'decompose': command_decompose,
    'semigroup': command_semigroup,
    'koopman': command_koopman,
}


def main(argv=None):
    args = parse_arguments(argv)
    colorama_init()

    if args.config and not os.path.exists(args.config):
        print(f"{Fore.RED}[ERROR]{Style.RESET_ALL} Configuration file not found: {args.config}", file=sys.stderr)
        return 1
    try:
        config = reload_config(args.config) if args.config else get_config()
    except ValueError as e:
        print(f"{Fore.RED}[ERROR]{Style.RESET_ALL} {e}", file=sys.stderr)
        return 2
    if not config.validate():
        print(f"{Fore.RED}[ERROR]{Style.RESET_ALL} Invalid configuration: " + "; ".join(config.errors()),
              file=sys.stderr)
        return 2
    logger = setup_logger(level=args.log_level)
    logger.debug(f"phi {VERSION}: command {args.command}")

    try:
        return COMMANDS[args.command](args, config)
    except (PhiError, ValueError) as e:
        logger.error(str(e))
        print(f"{Fore.RED}[ERROR]{Style.RESET_ALL} {e}", file=sys.stderr)
        return 2
    except OSError as e:
        logger.error(str(e))
        print(f"{Fore.RED}[ERROR]{Style.RESET_ALL} {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
