"""Command-line front end (``covtest``).

Exit codes:
    0  success
    2  malformed input or configuration (including missing required fields)
    3  precondition violation (e.g. too few samples for the detector)
    4  runtime failure during a simulation (too many redrawn trials)
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .calibration import ThresholdRecord, empirical_threshold, wilks_threshold
from .detectors import DetectorId, check_applicable, evaluate
from .errors import CovtestError, MalformedInput, PreconditionError, SimulationAborted
from .harness import RUNNERS, RunConfig, write_outputs
from .invariance import DATA_STREAM, GroupKind, check_invariance, natural_group
from .model import BlockGeometry, random_pd
from .sampling import read_csv, sample_gaussian, stream_rng

EXIT_OK, EXIT_INPUT, EXIT_PRECONDITION, EXIT_RUNTIME = 0, 2, 3, 4

log = logging.getLogger("covtest")


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _detector(name: str) -> DetectorId:
    try:
        return DetectorId.parse(name)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit non-negative integer")
    return value


def _geometry(args) -> BlockGeometry:
    return BlockGeometry(args.L, args.N)


def _emit(payload: dict, out: str | None = None) -> None:
    text = json.dumps(payload, indent=2) + "\n"
    if out:
        Path(out).write_text(text)
    sys.stdout.write(text)


def cmd_simulate(args) -> int:
    try:
        raw = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read config {args.config}: {exc}", EXIT_INPUT) from None
    if not isinstance(raw, dict):
        raise CliError("config must be a JSON object", EXIT_INPUT)
    try:
        config = RunConfig.from_dict(raw, seed=args.seed, mode=args.experiment)
    except KeyError as exc:
        raise CliError(str(exc.args[0]), EXIT_INPUT) from None
    except (ValueError, TypeError, CovtestError) as exc:
        raise CliError(f"invalid config: {exc}", EXIT_INPUT) from None
    runner = RUNNERS[args.experiment][0]
    try:
        result = runner(config, workers=args.workers)
    except SimulationAborted as exc:
        for f in exc.failures[:20]:
            log.error("trial %d hypothesis %d attempt %d: %s", f.trial, f.hypothesis, f.attempt, f.reason)
        raise CliError(str(exc), EXIT_RUNTIME) from None
    except PreconditionError as exc:
        raise CliError(f"invalid config: {exc}", EXIT_INPUT) from None
    csv_path, json_path = write_outputs(result, args.out)
    log.info("wrote %s and %s", csv_path, json_path)
    return EXIT_OK


def cmd_calibrate(args) -> int:
    geometry = _geometry(args)
    if args.method == "wilks":
        record = wilks_threshold(args.detector, geometry, args.M, args.pfa)
    else:
        if args.seed is None:
            raise CliError("--seed is required for empirical calibration", EXIT_INPUT)
        trials = args.trials if args.trials is not None else int(np.ceil(100 / args.pfa))
        record = empirical_threshold(args.detector, geometry, args.M, args.pfa, trials,
                                     args.seed, workers=args.workers)
    _emit(record.to_dict(), args.out)
    return EXIT_OK


def _threshold_for(args, det: DetectorId, geometry: BlockGeometry, m: int) -> float:
    if args.threshold is not None:
        return float(args.threshold)
    if args.threshold_file is not None:
        try:
            record = ThresholdRecord.from_dict(json.loads(Path(args.threshold_file).read_text()))
        except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
            raise CliError(f"cannot read threshold file {args.threshold_file}: {exc}", EXIT_INPUT) from None
        if record.detector is not det:
            raise CliError(
                f"threshold file is for {record.detector.value}, not {det.value}", EXIT_PRECONDITION
            )
        if (record.l, record.n) != (geometry.l, geometry.n):
            raise CliError(
                f"threshold file is for L={record.l}, N={record.n}; data has L={geometry.l}, N={geometry.n}",
                EXIT_PRECONDITION,
            )
        if record.m != m:
            log.warning("threshold was calibrated for M=%d but the data has M=%d", record.m, m)
        return record.threshold
    if args.pfa is None:
        raise CliError("--wilks needs --pfa", EXIT_INPUT)
    return wilks_threshold(det, geometry, m, args.pfa).threshold


def cmd_detect(args) -> int:
    geometry = _geometry(args)
    try:
        data = read_csv(args.input, geometry)
    except OSError as exc:
        raise CliError(f"cannot read {args.input}: {exc}", EXIT_INPUT) from None
    check_applicable(args.detector, geometry, data.m)
    threshold = _threshold_for(args, args.detector, geometry, data.m)
    stat = evaluate(args.detector, data)
    _emit({
        "detector": stat.id.value,
        "statistic_raw": stat.raw,
        "statistic_oriented": stat.value,
        "threshold": threshold,
        "decision": "H1" if stat.value > threshold else "H0",
        "L": geometry.l,
        "N": geometry.n,
        "M": data.m,
    })
    return EXIT_OK


def cmd_invariance(args) -> int:
    geometry = _geometry(args)
    check_applicable(args.detector, geometry, args.M)
    kind = GroupKind(args.group) if args.group else natural_group(args.detector)
    worst, passed = 0.0, True
    for i in range(args.datasets):
        cov = random_pd(geometry.dim, stream_rng(args.seed, DATA_STREAM + i, attempt=1))
        data = sample_gaussian(cov, args.M, args.seed, DATA_STREAM + i, geometry)
        rep = check_invariance(args.detector, data, kind, args.trials, args.seed, args.rel_tol)
        worst = max(worst, rep.max_rel_dev)
        passed = passed and rep.passed
    _emit({
        "detector": args.detector.value,
        "group": kind.value,
        "trials": args.trials,
        "max_rel_dev": worst,
        "pass": passed,
    }, args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="covtest", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"covtest {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a Monte Carlo experiment from a JSON config")
    sim.add_argument("experiment", choices=sorted(RUNNERS))
    sim.add_argument("--config", required=True)
    sim.add_argument("--out", required=True, help="output directory")
    sim.add_argument("--seed", required=True, type=_seed)
    sim.add_argument("--workers", type=_positive_int, default=1)
    sim.set_defaults(func=cmd_simulate)

    def geometry_args(p, with_m=True):
        p.add_argument("--detector", required=True, type=_detector)
        p.add_argument("--L", required=True, type=_positive_int)
        p.add_argument("--N", required=True, type=_positive_int)
        if with_m:
            p.add_argument("--M", required=True, type=_positive_int)

    cal = sub.add_parser("calibrate", help="compute a detection threshold")
    geometry_args(cal)
    cal.add_argument("--pfa", required=True, type=float)
    cal.add_argument("--method", choices=("empirical", "wilks"), default="empirical")
    cal.add_argument("--trials", type=_positive_int)
    cal.add_argument("--seed", type=_seed)
    cal.add_argument("--workers", type=_positive_int, default=1)
    cal.add_argument("--out", help="also write the threshold record to this file")
    cal.set_defaults(func=cmd_calibrate)

    det = sub.add_parser("detect", help="apply a detector to a sample CSV")
    geometry_args(det, with_m=False)
    det.add_argument("--input", required=True)
    src = det.add_mutually_exclusive_group(required=True)
    src.add_argument("--threshold", type=float, help="threshold on the oriented statistic")
    src.add_argument("--threshold-file")
    src.add_argument("--wilks", action="store_true")
    det.add_argument("--pfa", type=float)
    det.set_defaults(func=cmd_detect)

    inv = sub.add_parser("invariance", help="check a statistic's group invariance")
    geometry_args(inv)
    inv.add_argument("--trials", type=_positive_int, default=20)
    inv.add_argument("--seed", required=True, type=_seed)
    inv.add_argument("--group", choices=[g.value for g in GroupKind])
    inv.add_argument("--datasets", type=_positive_int, default=1)
    inv.add_argument("--rel-tol", type=float, default=1e-8)
    inv.add_argument("--out")
    inv.set_defaults(func=cmd_invariance)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="covtest: %(levelname)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"covtest: error: {exc}", file=sys.stderr)
        return exc.code
    except MalformedInput as exc:
        print(f"covtest: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except PreconditionError as exc:
        print(f"covtest: precondition violated: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except SimulationAborted as exc:
        print(f"covtest: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (CovtestError, ValueError) as exc:
        print(f"covtest: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
