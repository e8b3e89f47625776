"""
Command-line interface.

Every subcommand builds an ExperimentConfig, runs it and writes the report
to --out (or stdout). Library errors exit with code 2 and print
{"error": {"code", "message"}}; anything unexpected exits with code 1.
"""

import argparse
import json
import sys
from datetime import datetime
from pathlib import Path
from typing import TextIO

import humanize
from pydantic import ValidationError

from qmldesk import __app_name__, __version__
from qmldesk.errors import ConfigError, QmlDeskError
from qmldesk.experiments import (
    SWEEPS,
    AlgorithmParams,
    ExperimentConfig,
    RunReport,
    report_json,
    report_tsv,
    run_experiment,
    write_report,
)
from qmldesk.settings import SettingsManager, parse_assignment

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_LIBRARY_ERROR = 2


class ConsoleLog:
    """
    Timestamped log lines on stderr with a bounded history.

    DEBUG lines are shown only when verbose.
    """

    def __init__(self, verbose: bool = False, stream: TextIO | None = None, max_lines: int = 1000):
        self.verbose = verbose
        self.stream = stream
        self.max_lines = max_lines
        self.log_buffer: list[str] = []

    def __call__(self, message: str, level: str = "INFO") -> None:
        if level == "DEBUG" and not self.verbose:
            return
        timestamp = datetime.now().strftime("%H:%M:%S")
        log_line = f"[{timestamp}] {level}: {message}"
        self.log_buffer.append(log_line)

        # Limit buffer to max_lines
        if len(self.log_buffer) > self.max_lines:
            self.log_buffer = self.log_buffer[-self.max_lines :]

        print(log_line, file=self.stream or sys.stderr)

    def clear(self) -> None:
        self.log_buffer.clear()


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--dataset", "--data", dest="dataset", metavar="PATH", help="Input data file")
    common.add_argument("--seed", type=int, default=0, metavar="U64", help="Master random seed")
    common.add_argument("--shots", type=int, default=0, metavar="N", help="Measurement shots (0 = exact probabilities)")
    common.add_argument("--out", metavar="PATH", help="Write the report here instead of stdout")
    common.add_argument("--format", choices=("json", "tsv"), default="json", help="Report format")
    common.add_argument("--verbose", action="store_true", help="Show debug log lines")
    common.add_argument("--config-dir", type=Path, metavar="DIR", help="Settings directory (default ~/.config/qmldesk)")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(
        prog=__app_name__,
        description="Quantum machine-learning algorithms on a statevector simulator.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("classify", parents=[common], help="Nearest-centroid classification")
    p.add_argument("--query", metavar="PATH", help="CSV of query points (default: the training points)")
    p.add_argument("--centroids", action="store_true", help="Use class means as the only references")

    p = sub.add_parser("binary-classify", parents=[common], help="Two-class distance comparison")
    p.add_argument("--query", metavar="PATH", help="CSV of query points")

    p = sub.add_parser("knn", parents=[common], help="k-nearest neighbours with minimum finding")
    p.add_argument("--query", metavar="PATH", help="CSV of query points")
    p.add_argument("--k", type=int, default=3, help="Neighbours (odd)")
    p.add_argument("--backend", choices=("exact", "sampled"), default="exact", help="Distance estimator")
    p.add_argument("--verify", action="store_true", help="Verify each minimum with a linear check")

    p = sub.add_parser("mst-cluster", parents=[common], help="Spanning-tree clustering")
    p.add_argument("--k", type=int, default=2, help="Clusters")

    p = sub.add_parser("hhl-solve", parents=[common], help="Solve A x = b with HHL")
    p.add_argument("--clock-qubits", type=int, default=8, help="Clock register width")
    p.add_argument("--mode", choices=("exact", "sampled"), default="exact", help="Post-selection mode")

    p = sub.add_parser("train-perceptron", parents=[common], help="Train perceptron weights with HHL")
    p.add_argument("--clock-qubits", type=int, default=8, help="Clock register width")
    p.add_argument("--mode", choices=("exact", "least-squares"), default="exact", help="Consistency handling")
    p.add_argument("--bias", type=float, default=0.0, help="Global bias b")

    p = sub.add_parser("qpca", parents=[common], help="Principal components by density-matrix exponentiation")
    p.add_argument("--time", type=float, default=1.0, help="Evolution time t")
    p.add_argument("--copies", type=int, default=128, help="Copies of rho")
    p.add_argument("--clock-qubits", type=int, default=6, help="Clock register width")
    p.add_argument("--input", choices=("covariance", "density"), default="covariance", help="How to read --data")

    p = sub.add_parser("train-bm", parents=[common], help="Train a Boltzmann machine")
    p.add_argument("--hidden", type=int, default=3, help="Hidden units")
    p.add_argument("--backend", choices=("exact", "mean-field"), default="exact", help="Gradient backend")
    p.add_argument("--steps", type=int, default=500, help="Training steps")
    p.add_argument("--lr", type=float, default=0.1, help="Learning rate")

    p = sub.add_parser("bench", parents=[common], help="Scaling sweeps with exponent fits")
    p.add_argument("--sweep", choices=SWEEPS, default="shots", help="What to sweep")
    p.add_argument("--grid", type=float, nargs="+", help="Grid of the swept parameter")
    p.add_argument("--reps", type=int, default=200, help="Repetitions per point (shots sweep)")
    p.add_argument("--time", type=float, default=1.0, help="Evolution time (copies sweep)")
    p.add_argument("--verify", action="store_true", help="Verify minima (knn sweep)")

    sub.add_parser("schema", help="Print the report JSON schema")

    p = sub.add_parser("settings", help="Show or change stored settings")
    p.add_argument("--set", dest="assignments", action="append", default=[], metavar="NAME=VALUE", help="Change a setting")
    p.add_argument("--reset", action="store_true", help="Restore every setting to its default")
    p.add_argument("--config-dir", type=Path, metavar="DIR", help="Settings directory (default ~/.config/qmldesk)")
    return parser


def _run_settings(args: argparse.Namespace, out: TextIO) -> int:
    """Apply --reset then --set, persist, and print the stored settings."""
    try:
        manager = SettingsManager(args.config_dir)
        if args.reset:
            manager.reset()
        if args.assignments:
            manager.update(**dict(parse_assignment(text) for text in args.assignments))
    except QmlDeskError as e:
        _print_error(e.to_dict(), out)
        return EXIT_LIBRARY_ERROR
    out.write(json.dumps({"settings": manager.stored.to_dict()}, sort_keys=True, indent=2) + "\n")
    return EXIT_OK


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    """ExperimentConfig for a parsed subcommand."""
    known = AlgorithmParams.model_fields
    params = {
        name: value
        for name, value in vars(args).items()
        if name in known and value is not None
    }
    return ExperimentConfig(
        algorithm=args.command,
        dataset=args.dataset,
        seed=args.seed,
        shots=args.shots,
        params=AlgorithmParams(**params),
        out=args.out,
        format=args.format,
    )


def _print_error(error: dict, out: TextIO) -> None:
    print(json.dumps({"error": error}, sort_keys=True), file=out)


def _emit(report: RunReport, cfg: ExperimentConfig, log: ConsoleLog, out: TextIO) -> None:
    if cfg.out:
        path = write_report(report, cfg.out, cfg.format)
        log(f"Report written to {path}", "INFO")
    else:
        out.write(report_json(report) if cfg.format == "json" else report_tsv(report))


def run_cli(argv: list[str] | None = None, out: TextIO | None = None, err: TextIO | None = None) -> int:
    """Parse arguments, run the command and return the exit code."""
    out = out or sys.stdout
    args = build_parser().parse_args(argv)

    if args.command == "schema":
        out.write(json.dumps(RunReport.model_json_schema(), sort_keys=True, indent=2) + "\n")
        return EXIT_OK
    if args.command == "settings":
        return _run_settings(args, out)

    log = ConsoleLog(verbose=args.verbose, stream=err)
    try:
        settings = SettingsManager(args.config_dir).current()
        cfg = config_from_args(args)
        log(f"{__app_name__} {__version__}: {cfg.algorithm} (seed {cfg.seed}, {humanize.intcomma(cfg.shots)} shots)", "INFO")
        report = run_experiment(cfg, settings, log)
    except QmlDeskError as e:
        log(str(e), "ERROR")
        _print_error(e.to_dict(), out)
        return EXIT_LIBRARY_ERROR
    except ValidationError as e:
        error = ConfigError(f"Invalid arguments: {e.error_count()} problem(s): " + "; ".join(err["msg"] for err in e.errors()))
        log(str(error), "ERROR")
        _print_error(error.to_dict(), out)
        return EXIT_LIBRARY_ERROR
    except Exception as e:
        log(f"Unexpected error: {e!r}", "ERROR")
        return EXIT_UNEXPECTED

    if report.status == "error":
        if cfg.out:
            write_report(report, cfg.out, cfg.format)
        _print_error(report.error, out)
        return EXIT_LIBRARY_ERROR

    _emit(report, cfg, log, out)
    ledger = report.ledger
    log(
        f"Done in {humanize.precisedelta(report.wall_time, minimum_unit='milliseconds')}: "
        f"{humanize.intcomma(ledger.get('oracle_queries', 0))} queries, "
        f"{humanize.intcomma(ledger.get('shots', 0))} shots, peak {ledger.get('qubits_peak', 0)} qubits",
        "INFO",
    )
    return EXIT_OK
