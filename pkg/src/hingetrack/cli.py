"""Command-line interface: simulate, estimate, analyze, reproduce.

All commands read a scenario file (YAML) and write CSV files plus rendered
PNG figures into the output directory. CSV conventions: comma delimiter, '.'
decimal separator, a single header row, time in seconds, angles and angular
rates in degrees, and 17-significant-digit floats so re-reading a file
reproduces the values exactly.

Exit codes: 0 success, 1 usage error, 2 acceptance-criterion failure,
3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .chain import ChainState
from .mhe import evaluate_errors, run_estimator
from .observability import observability_verdict
from .scenario import Scenario, ScenarioError, load_scenario, save_scenario
from .simulator import GyroRecord, build_chain_pose, generate, measure, project_rates
from .quatmath import IDENTITY

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CRITERION = 2
EXIT_IO = 3

_FLOAT_FMT = "%.17g"


class CliError(Exception):
    """I/O or data-format failure attributable to the invocation."""


# -- CSV helpers --------------------------------------------------------------


def write_csv(path, header, columns):
    """Write columns (equal-length sequences) under a single header row."""
    rows = len(columns[0])
    for col in columns:
        if len(col) != rows:
            raise CliError(f"column length mismatch while writing {path}")
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(",".join(header) + "\n")
            for r in range(rows):
                fh.write(",".join(
                    _FLOAT_FMT % col[r] if isinstance(col[r], float) or isinstance(col[r], np.floating)
                    else str(col[r])
                    for col in columns
                ) + "\n")
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc}") from exc
    return path


def read_csv(path, expected_header):
    """Read a CSV written by write_csv; returns a (rows, cols) float array.

    Raises CliError naming the offending row when the file is truncated or a
    field does not parse.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}") from exc
    if not lines:
        raise CliError(f"{path}: empty file")
    header = lines[0].split(",")
    if header != list(expected_header):
        raise CliError(
            f"{path}: header mismatch, expected {','.join(expected_header)}"
        )
    values = np.empty((len(lines) - 1, len(header)))
    for idx, line in enumerate(lines[1:], start=2):
        fields = line.split(",")
        if len(fields) != len(header):
            raise CliError(
                f"{path}: row {idx} has {len(fields)} fields (expected "
                f"{len(header)}); last valid row is {idx - 1}"
            )
        try:
            values[idx - 2] = [float(f) for f in fields]
        except ValueError as exc:
            raise CliError(
                f"{path}: row {idx} does not parse ({exc}); last valid row is {idx - 1}"
            ) from exc
    return values


_QUAT_COLS = [f"q{seg}_{c}" for seg in ("i", "j", "k") for c in "wxyz"]
TRAJECTORY_HEADER = (["t"] + _QUAT_COLS
                     + [f"w{seg}_{a}_deg_per_s" for seg in ("i", "j", "k") for a in "xyz"])
MEASUREMENTS_HEADER = ["t"] + [f"y{seg}_{a}_deg_per_s" for seg in ("i", "k") for a in "xyz"]
ESTIMATES_HEADER = ["t"] + _QUAT_COLS + ["converged", "cost"]
ERRORS_HEADER = ["t", "phi_err_ji_deg", "phi_err_ki_deg"]
PROJECTIONS_HEADER = ["t", "w_perp_deg_per_s", "w_nonperp_deg_per_s",
                      "w_li_deg_per_s", "w_lk_deg_per_s"]
VERDICTS_HEADER = ["t", "w_perp_mag_deg_per_s", "w_nonperp_mag_deg_per_s", "observable"]


def _ensure_out_dir(out_dir):
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise CliError(f"cannot create output directory {out_dir}: {exc}") from exc
    return out_dir


def write_trajectory(samples, path):
    t = [s.t for s in samples]
    cols = [t]
    for attr in ("q_i", "q_j", "q_k"):
        for c in range(4):
            cols.append([float(getattr(s.truth, attr)[c]) for s in samples])
    for attr in ("w_i_bi", "w_j_bj", "w_k_bk"):
        for c in range(3):
            cols.append([float(np.rad2deg(getattr(s, attr)[c])) for s in samples])
    return write_csv(path, TRAJECTORY_HEADER, cols)


def write_measurements(records, path):
    cols = [[r.t for r in records]]
    for attr in ("y_i_bi", "y_k_bk"):
        for c in range(3):
            cols.append([float(np.rad2deg(getattr(r, attr)[c])) for r in records])
    return write_csv(path, MEASUREMENTS_HEADER, cols)


def read_measurements(path):
    data = read_csv(path, MEASUREMENTS_HEADER)
    return [
        GyroRecord(t=row[0], y_i_bi=np.deg2rad(row[1:4]), y_k_bk=np.deg2rad(row[4:7]))
        for row in data
    ]


def read_trajectory_quaternions(path):
    data = read_csv(path, TRAJECTORY_HEADER)
    return data[:, 0], data[:, 1:5], data[:, 5:9], data[:, 9:13]


def write_estimates(result, times, path):
    cols = [list(times)]
    for attr in ("q_i", "q_j", "q_k"):
        for c in range(4):
            cols.append([float(getattr(st, attr)[c]) for st in result.states])
    cols.append([int(c) for c in result.converged])
    cols.append([float(c) for c in result.costs])
    return write_csv(path, ESTIMATES_HEADER, cols)


def write_errors(times, phi_ji, phi_ki, path):
    return write_csv(path, ERRORS_HEADER, [
        list(times),
        [float(v) for v in np.rad2deg(phi_ji)],
        [float(v) for v in np.rad2deg(phi_ki)],
    ])


# -- commands -----------------------------------------------------------------


def cold_start_state(scenario: Scenario) -> ChainState:
    """Zero-joint-angle alignment pose with the first segment at identity."""
    return build_chain_pose(scenario.chain, IDENTITY, 0.0, 0.0)


def _simulate(scenario: Scenario):
    samples = generate(scenario.movement, scenario.duration, scenario.ts,
                       scenario.seed, scenario.chain)
    records = measure(samples, scenario.noise)
    return samples, records


def cmd_simulate(scenario: Scenario, out_dir) -> int:
    from . import report

    _ensure_out_dir(out_dir)
    samples, records = _simulate(scenario)
    write_trajectory(samples, os.path.join(out_dir, "trajectory.csv"))
    write_measurements(records, os.path.join(out_dir, "measurements.csv"))
    save_scenario(scenario, os.path.join(out_dir, "scenario.yaml"))
    report.plot_rates(
        [s.t for s in samples],
        np.array([s.w_i_bi for s in samples]),
        np.array([s.w_j_bj for s in samples]),
        np.array([s.w_k_bk for s in samples]),
        os.path.join(out_dir, "rates.png"),
    )
    print(f"wrote {len(samples)} samples to {out_dir}")
    return EXIT_OK


def cmd_estimate(scenario: Scenario, out_dir) -> int:
    from . import report

    _ensure_out_dir(out_dir)
    samples, _ = _simulate(scenario)
    meas_path = os.path.join(out_dir, "measurements.csv")
    if os.path.exists(meas_path):
        records = read_measurements(meas_path)
        if len(records) != len(samples):
            raise CliError(
                f"{meas_path}: {len(records)} rows do not match the scenario's "
                f"{len(samples)} samples"
            )
    else:
        records = measure(samples, scenario.noise)
        write_measurements(records, meas_path)

    anchor = (np.array([s.truth.q_i for s in samples])
              if scenario.mode == "m1" else None)
    result = run_estimator(records, scenario.mode, anchor, scenario.chain,
                           scenario.mhe, cold_start_state(scenario))
    times = [r.t for r in records]
    write_estimates(result, times, os.path.join(out_dir, "estimates.csv"))
    phi_ji, phi_ki = evaluate_errors(result.states, samples)
    write_errors(times, phi_ji, phi_ki, os.path.join(out_dir, "errors.csv"))
    report.plot_errors(times, np.rad2deg(phi_ji), np.rad2deg(phi_ki),
                       os.path.join(out_dir, "errors.png"))
    print(f"estimated {len(times)} instants (mode {scenario.mode}); "
          f"final errors {np.rad2deg(phi_ji[-1]):.2f} / {np.rad2deg(phi_ki[-1]):.2f} deg")
    return EXIT_OK


def cmd_analyze(scenario: Scenario, out_dir) -> int:
    from . import report

    _ensure_out_dir(out_dir)
    samples, _ = _simulate(scenario)
    w_perp, w_nonperp, w_li, w_lk = project_rates(samples, scenario.chain)
    times = [s.t for s in samples]
    write_csv(os.path.join(out_dir, "projections.csv"), PROJECTIONS_HEADER, [
        times,
        [float(v) for v in np.rad2deg(w_perp)],
        [float(v) for v in np.rad2deg(w_nonperp)],
        [float(v) for v in np.rad2deg(w_li)],
        [float(v) for v in np.rad2deg(w_lk)],
    ])
    verdicts = [observability_verdict(s, scenario.chain) for s in samples]
    observable = [v.observable for v in verdicts]
    write_csv(os.path.join(out_dir, "verdicts.csv"), VERDICTS_HEADER, [
        times,
        [float(np.rad2deg(v.omega_perp_mag)) for v in verdicts],
        [float(np.rad2deg(v.omega_nonperp_mag)) for v in verdicts],
        [int(v.observable) for v in verdicts],
    ])
    report.plot_projections(times, w_perp, w_nonperp, w_li, w_lk, observable,
                            os.path.join(out_dir, "projections.png"))
    frac = float(np.mean(observable))
    print(f"observable at {100.0 * frac:.1f}% of {len(samples)} instants")
    return EXIT_OK


def cmd_reproduce(out_dir) -> int:
    from . import acceptance, report

    _ensure_out_dir(out_dir)
    results = acceptance.run_all(out_dir=out_dir)
    payload = [r.as_dict() for r in results]
    try:
        with open(os.path.join(out_dir, "report.json"), "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2)
    except OSError as exc:
        raise CliError(f"cannot write report: {exc}") from exc
    report.plot_criteria_summary(
        [{"criterion": f"{r.number}. {r.name}", "passed": r.passed, "detail": r.detail}
         for r in results],
        os.path.join(out_dir, "criteria.png"),
    )
    for r in results:
        print(f"criterion {r.number} ({r.name}): {'PASS' if r.passed else 'FAIL'} - {r.detail}")
    if all(r.passed for r in results):
        print("all criteria passed")
        return EXIT_OK
    print("one or more criteria failed")
    return EXIT_CRITERION


# -- argument handling --------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _parse_bool(text):
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hingetrack",
                     description="Double-hinge chain simulation, observability "
                                 "analysis, and moving-horizon orientation estimation.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, needs_scenario=True):
        if needs_scenario:
            p.add_argument("--scenario", metavar="PATH",
                           help="scenario YAML file (omit for the built-in default)")
        p.add_argument("--out", metavar="DIR", required=True, help="output directory")
        p.add_argument("--seed", type=int, metavar="N",
                       help="override the scenario's trajectory and noise seeds")
        p.add_argument("--mode", choices=("m1", "m2"),
                       help="override the scenario's estimation mode")
        p.add_argument("--rates-free", type=_parse_bool, metavar="BOOL",
                       help="override whether measured-rate corrections are free")

    add_common(sub.add_parser("simulate", help="generate ground truth and measurements"))
    add_common(sub.add_parser("estimate", help="run the moving-horizon estimator"))
    add_common(sub.add_parser("analyze", help="rate projections and observability verdicts"))
    add_common(sub.add_parser("reproduce", help="run the acceptance study"),
               needs_scenario=False)
    return parser


def _load_with_overrides(args) -> Scenario:
    if getattr(args, "scenario", None):
        scenario = load_scenario(args.scenario)
    else:
        scenario = Scenario()
    if args.seed is not None:
        scenario.seed = args.seed
        scenario.noise.seed = args.seed + 1
    if args.mode is not None:
        scenario.mode = args.mode
    if args.rates_free is not None:
        scenario.mhe.rates_free = args.rates_free
    return scenario


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "reproduce":
            return cmd_reproduce(args.out)
        scenario = _load_with_overrides(args)
        if args.command == "simulate":
            return cmd_simulate(scenario, args.out)
        if args.command == "estimate":
            return cmd_estimate(scenario, args.out)
        if args.command == "analyze":
            return cmd_analyze(scenario, args.out)
    except (CliError, ScenarioError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
