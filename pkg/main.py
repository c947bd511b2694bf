#!/usr/bin/env python3
"""
Stokes Workbench - Quantum Stokes Parameter Measurement Simulator

A command-line tool that builds two-mode polarization states, simulates the
wave-plate and photon-counting measurements of their intensities and
intensity correlations, and reconstructs the Stokes means, the Stokes
variance matrix and the normally ordered Stokes correlations from them.

Usage:
    python main.py state --state elliptic
    python main.py measure --state squeezed --out records.json
    python main.py reconstruct records.json --state squeezed --oracle-check

Requirements:
- Python packages: numpy, scipy, pydantic, python-dotenv, tabulate, tqdm
"""

import argparse
import csv
import json
import logging
import sys
import warnings
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
from pydantic import TypeAdapter, ValidationError
from tabulate import tabulate

from config import EXAMPLE_STATES, RunConfig, StateSpec, StateSpecFile, config
from measurement import (
    Realization,
    default_plan,
    load_records,
    measure_plan,
    records_to_csv,
    save_records,
)
from optics import compose_gadget, gadget_for, projective_distance, su2
from reconstruct import (
    oracle_deviation,
    reconstruct_all,
    report_to_text,
    save_report,
    verify_identities,
)
from stokes import stokes_oracle, su2_algebra_deviation

VERSION = 'Stokes Workbench v1.0.0'

EXIT_OK, EXIT_ERROR, EXIT_WARNINGS = 0, 1, 2

_STATE_SPEC = TypeAdapter(StateSpec)


class StokesWorkbench:
    """Main application class for the Stokes workbench."""

    def __init__(self, run_config: RunConfig):
        """
        Initialize the workbench.

        Args:
            run_config: Validated run configuration
        """
        self.run_config = run_config

    def run(self, command: str, args: argparse.Namespace) -> int:
        """
        Run one subcommand, echoing any warnings it raised to stderr.

        Args:
            command: Subcommand name
            args: Parsed command-line arguments

        Returns:
            int: Exit code (0 clean, 1 error, 2 completed with warnings)
        """
        handler = getattr(self, f'cmd_{command}')
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter('always')
            try:
                code = handler(args)
            except KeyboardInterrupt:
                print("\n\nInterrupted by user.", file=sys.stderr)
                return EXIT_ERROR
            except ValidationError as e:
                print(f"Error: invalid input:\n{e}", file=sys.stderr)
                return EXIT_ERROR
            except (ValueError, OSError) as e:
                print(f"Error: {e}", file=sys.stderr)
                return EXIT_ERROR

        for warning in caught:
            print(f"Warning ({warning.category.__name__}): {warning.message}", file=sys.stderr)
        if code == EXIT_OK and caught:
            return EXIT_WARNINGS
        return code

    def _state(self):
        if self.run_config.state is None:
            raise ValueError("no state given; use --state NAME|FILE or a config file with a 'state' entry")
        return self.run_config.state.build()

    def _plan(self, include_identities: bool):
        return default_plan(
            self.run_config.theta_set_phi0,
            self.run_config.theta_set_phi_half,
            realization=Realization(self.run_config.realization),
            include_identities=include_identities,
        )

    def cmd_state(self, args: argparse.Namespace) -> int:
        """Print norm, boundary mass and the oracle Stokes summary of a state."""
        state = self._state()
        summary = stokes_oracle(state)

        print(f"Norm:                   {state.norm:.12f}")
        print(f"Boundary mass:          {state.boundary_mass:.3e}")
        print(f"Degree of polarization: {summary.degree_of_polarization:.6g}")
        print("\nStokes means:")
        print(tabulate([[f'S{i}', summary.S[i]] for i in range(4)], headers=['', 'value'], floatfmt='.6g'))
        print("\nVariance matrix V:")
        print(_matrix(summary.V))

        if self.run_config.out:
            payload = {
                'state': self.run_config.state.model_dump(mode='json'),
                'norm': state.norm,
                'boundary_mass': state.boundary_mass,
                'degree_of_polarization': summary.degree_of_polarization,
                'summary': summary.to_dict(),
            }
            self._write_json(payload, self.run_config.out)
        if self.run_config.csv_out:
            row = summary.csv_row()
            with open(self.run_config.csv_out, 'w', newline='', encoding='utf-8') as handle:
                writer = csv.DictWriter(handle, fieldnames=list(row))
                writer.writeheader()
                writer.writerow(row)
            print(f"CSV saved to: {self.run_config.csv_out}")
        return EXIT_OK

    def cmd_measure(self, args: argparse.Namespace) -> int:
        """Simulate every setting of the plan and write the records file."""
        state = self._state()
        plan = self._plan(self.run_config.verify_identities)
        records = measure_plan(
            state, plan,
            mode=self.run_config.mode,
            shots=self.run_config.shots,
            seed=self.run_config.seed,
            workers=args.workers,
        )

        rows = [
            [r.setting.role.value, r.setting.theta, r.setting.phi, r.I1, r.I2, r.G11, r.G22, r.G12]
            for r in records
        ]
        print(tabulate(rows, headers=['role', 'theta', 'phi', 'I1', 'I2', 'G11', 'G22', 'G12'], floatfmt='.6g'))
        print(f"\n{len(records)} records ({self.run_config.mode})")

        out = self.run_config.out or 'records.json'
        save_records(records, out)
        print(f"Records saved to: {out}")
        if self.run_config.csv_out:
            records_to_csv(records, self.run_config.csv_out)
            print(f"CSV saved to: {self.run_config.csv_out}")
        return EXIT_OK

    def cmd_reconstruct(self, args: argparse.Namespace) -> int:
        """Reconstruct the Stokes summary from a records file."""
        records = load_records(args.records)
        tolerances = self.run_config.tolerances
        report = reconstruct_all(
            records,
            bootstrap=self.run_config.bootstrap,
            seed=self.run_config.seed,
            tolerance=tolerances.consistency,
            progress=args.progress,
        )
        print(report_to_text(report), end='')

        code = EXIT_OK
        if self.run_config.verify_identities:
            checks = verify_identities(report, records)
            print("\nIdentity checks:")
            print(tabulate(
                [[c.name, c.measured, c.assembled, c.discrepancy] for c in checks],
                headers=['identity', 'records', 'assembled', 'discrepancy'],
                floatfmt='.6g',
            ))
            if report.mode == 'exact' and any(c.discrepancy > tolerances.identities for c in checks):
                print("Identity check failed", file=sys.stderr)
                code = EXIT_ERROR

        if args.oracle_check or args.state:
            deviation = oracle_deviation(report, self._state())
            print(f"\nMax |reconstructed - oracle|: {deviation:.3e}")
            if report.mode == 'exact' and deviation > tolerances.oracle:
                print(f"Oracle deviation exceeds {tolerances.oracle:.1e}", file=sys.stderr)
                code = EXIT_ERROR

        if self.run_config.out:
            save_report(report, self.run_config.out)
            print(f"\nReport saved to: {self.run_config.out}")
        return code

    def cmd_gadget(self, args: argparse.Namespace) -> int:
        """Print the Q-Q-H plate angles for (theta, phi)."""
        setting = gadget_for(args.theta, args.phi)
        residual = projective_distance(compose_gadget(setting), su2(args.theta, args.phi))

        rows = [
            [name, radians, degrees]
            for name, radians, degrees in zip(('q1', 'q2', 'h'), (setting.q1, setting.q2, setting.h), setting.degrees())
        ]
        print(f"Gadget for theta = {args.theta:.6g}, phi = {args.phi:.6g}:")
        print(tabulate(rows, headers=['plate', 'radians', 'degrees'], floatfmt='.9g'))
        print(f"\nProjective residual: {residual:.3e}")
        return EXIT_OK

    def cmd_verify(self, args: argparse.Namespace) -> int:
        """Run the algebra, gadget and round-trip checks and print a table."""
        tolerances = self.run_config.tolerances
        results = []

        algebra = su2_algebra_deviation(10)
        results.append(['SU(2) algebra (N=10)', max(algebra.values()), 1e-12])
        results.append(['Q-Q-H gadget fidelity', _gadget_fidelity(), 1e-10])

        plan = self._plan(include_identities=True)
        names = [args.example] if args.example else sorted(EXAMPLE_STATES)
        for name in names:
            state = EXAMPLE_STATES[name].build()
            records = measure_plan(state, plan)
            report = reconstruct_all(records, tolerance=tolerances.consistency)
            identities = max(c.discrepancy for c in verify_identities(report, records))
            results.append([f'{name}: round trip', oracle_deviation(report, state), tolerances.oracle])
            results.append([f'{name}: identities', identities, tolerances.identities])

        table = [[check, value, limit, 'PASS' if value <= limit else 'FAIL'] for check, value, limit in results]
        print(tabulate(table, headers=['check', 'deviation', 'tolerance', 'status'], floatfmt='.3e'))

        failed = sum(row[3] == 'FAIL' for row in table)
        print(f"\n{len(table) - failed}/{len(table)} checks passed")
        return EXIT_ERROR if failed else EXIT_OK

    def _write_json(self, payload: Dict, path: str) -> None:
        try:
            Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + '\n', encoding='utf-8')
            print(f"\nSaved to: {path}")
        except OSError as e:
            print(f" Warning: Could not save to file: {e}", file=sys.stderr)


def _matrix(matrix: np.ndarray) -> str:
    rows = [[f'S{i}', *matrix[i]] for i in range(4)]
    return tabulate(rows, headers=['', 'S0', 'S1', 'S2', 'S3'], floatfmt='.6g')


def _gadget_fidelity() -> float:
    """Largest projective distance between the gadget and u(theta, phi)."""
    worst = 0.0
    for phi in (0.0, np.pi / 2):
        for theta in np.linspace(0, np.pi, 50, endpoint=False):
            worst = max(worst, projective_distance(compose_gadget(gadget_for(theta, phi)), su2(theta, phi)))

    mixed = np.array([[1, np.exp(1j * np.pi / 4)], [-np.exp(-1j * np.pi / 4), 1]]) / np.sqrt(2)
    worst = max(worst, projective_distance(compose_gadget(gadget_for(np.pi / 4, np.pi / 4)), mixed))
    return worst


def load_state_spec(value: str):
    """
    Resolve --state: a built-in example name or a JSON state spec file.

    The file may hold the spec itself or {"state": spec}.
    """
    if value in EXAMPLE_STATES:
        return EXAMPLE_STATES[value]

    path = Path(value)
    if not path.exists():
        raise ValueError(
            f"unknown state '{value}': not a file and not one of {', '.join(sorted(EXAMPLE_STATES))}"
        )
    data = json.loads(path.read_text(encoding='utf-8'))
    if isinstance(data, dict) and 'state' in data:
        return StateSpecFile.model_validate(data).state
    return _STATE_SPEC.validate_python(data)


def _theta_overrides(entries: List[str]) -> Dict[str, List[float]]:
    overrides = {}
    for entry in entries:
        family, _, values = entry.partition('=')
        key = {'phi0': 'theta_set_phi0', 'phi_half': 'theta_set_phi_half'}.get(family.strip())
        if key is None or not values:
            raise ValueError(f"--theta-set expects phi0=... or phi_half=..., got {entry!r}")
        try:
            overrides[key] = [float(v) for v in values.split(',')]
        except ValueError:
            raise ValueError(f"--theta-set values must be numbers (radians), got {values!r}")
    return overrides


def build_run_config(args: argparse.Namespace) -> RunConfig:
    """
    Merge the optional --config file with command-line overrides.

    Raises:
        ValidationError: If the merged configuration violates the schema
        ValueError: On a bad --state or --theta-set value
    """
    data = {}
    if getattr(args, 'config', None):
        data = RunConfig.model_validate_json(Path(args.config).read_text(encoding='utf-8')).model_dump()

    if getattr(args, 'state', None):
        data['state'] = load_state_spec(args.state).model_dump()
    for flag in ('mode', 'shots', 'seed', 'bootstrap', 'out', 'realization'):
        value = getattr(args, flag, None)
        if value is not None:
            data[flag] = value
    if getattr(args, 'csv', None):
        data['csv_out'] = args.csv
    if getattr(args, 'verify_identities', False):
        data['verify_identities'] = True
    data.update(_theta_overrides(getattr(args, 'theta_set', None) or []))

    return RunConfig.model_validate(data)


def parse_arguments(argv: Optional[List[str]] = None) -> argparse.Namespace:
    """
    Parse command-line arguments.

    Returns:
        argparse.Namespace: Parsed arguments
    """
    parser = argparse.ArgumentParser(
        description="Simulate and reconstruct quantum Stokes parameter measurements",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=f"""
Examples:
  python main.py state --state elliptic
  python main.py measure --state squeezed --mode sampled --shots 100000 --seed 7 --out records.json
  python main.py measure --state twin_photons --verify-identities --out records.json --csv records.csv
  python main.py reconstruct records.json --state twin_photons --oracle-check --verify-identities
  python main.py gadget 0.6 0
  python main.py verify

Built-in states: {', '.join(sorted(EXAMPLE_STATES))}

Environment Setup (optional, .env in the project root):
  STOKES_BOUNDARY_THRESHOLD, STOKES_NORM_TOLERANCE, STOKES_SAMPLING_TOLERANCE,
  STOKES_BOOTSTRAP_RESAMPLES, STOKES_LOG_LEVEL
        """
    )
    parser.add_argument('--version', action='version', version=VERSION)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='Run configuration JSON file')
    common.add_argument('--state', help='Built-in state name or JSON state spec file')
    common.add_argument('--out', help='Output JSON path')

    pipeline = argparse.ArgumentParser(add_help=False)
    pipeline.add_argument('--mode', choices=['exact', 'sampled'], help='Measurement mode')
    pipeline.add_argument('--shots', type=int, help='Shots per setting (sampled mode)')
    pipeline.add_argument('--seed', type=int, help='Base seed for sampling and bootstrap')
    pipeline.add_argument('--theta-set', action='append', metavar='FAMILY=T1,T2,...',
                          help='Override a theta family, e.g. phi0=0.2,0.5,0.8,1.1,1.4 (radians)')
    pipeline.add_argument('--realization', choices=['abstract_su2', 'qqh_gadget'],
                          help='Ideal SU(2) rotations or the Q-Q-H gadget')
    pipeline.add_argument('--verify-identities', action='store_true',
                          help='Add theta = pi/4, 3pi/4 settings and check the sum/difference identities')

    subparsers = parser.add_subparsers(dest='command', required=True)

    state = subparsers.add_parser('state', parents=[common], help='Print the Stokes summary of a state')
    state.add_argument('--csv', help='Also write S, V and NO as one CSV row')

    measure = subparsers.add_parser('measure', parents=[common, pipeline], help='Simulate a measurement plan')
    measure.add_argument('--csv', help='Also write the records as CSV')
    measure.add_argument('--workers', type=int, default=1, help='Threads for sampled settings')

    reconstruct = subparsers.add_parser('reconstruct', parents=[common, pipeline],
                                        help='Reconstruct Stokes moments from records')
    reconstruct.add_argument('records', help='Records JSON file')
    reconstruct.add_argument('--bootstrap', type=int, help='Bootstrap resamples for sampled records')
    reconstruct.add_argument('--oracle-check', action='store_true',
                             help='Compare against the oracle of --state')
    reconstruct.add_argument('--progress', action='store_true', help='Show bootstrap progress')

    gadget = subparsers.add_parser('gadget', help='Print Q-Q-H plate angles for a rotation')
    gadget.add_argument('theta', type=float, help='Mixing angle (radians)')
    gadget.add_argument('phi', type=float, help='Relative phase (radians)')

    verify = subparsers.add_parser('verify', parents=[common], help='Run the built-in acceptance checks')
    verify.add_argument('--example', choices=sorted(EXAMPLE_STATES), help='Check a single built-in state')

    return parser.parse_args(argv)


def main(argv: Optional[List[str]] = None) -> int:
    """
    Main entry point for the application.

    Returns:
        int: Exit code
    """
    logging.basicConfig(
        level=getattr(logging, config.log_level, logging.WARNING),
        stream=sys.stderr,
        format='%(levelname)s %(name)s: %(message)s',
    )

    try:
        args = parse_arguments(argv)
        run_config = build_run_config(args)
    except ValidationError as e:
        print(f"Error: invalid configuration:\n{e}", file=sys.stderr)
        return EXIT_ERROR
    except (ValueError, OSError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_ERROR

    workbench = StokesWorkbench(run_config)
    return workbench.run(args.command, args)


if __name__ == "__main__":
    sys.exit(main())
