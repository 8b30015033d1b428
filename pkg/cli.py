#!/usr/bin/env python3
"""
Command-line entry point: single runs, multi-seed replication and figure
rendering.

    python cli.py run       [--config PATH] [--seed N] [--algorithm A] [--out-dir DIR] [--smoothing W] [--plots]
    python cli.py replicate [--config PATH] [--seeds N|a,b,c] [--algorithm A [A ...]] [--out-dir DIR] [--jobs J]
    python cli.py plot      --metrics CSV [CSV ...] [--labels L ...] [--out-dir DIR] [--smoothing W]

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""
import argparse
import json
import logging
import os
import sys
from multiprocessing import Pool
from typing import List, NamedTuple, Optional, Sequence

from dotenv import load_dotenv

import hypervisor
from database import DB_NAME, dispose_engine, init_db, load_phase_frame, store_run
from errors import ConfigInvalid, ScenarioParseError
from metrics import (PhaseFlowSummary, aggregate_frame, metrics_frame, paired_frame, read_metrics_csv,
                     write_metrics_csv, write_summary)
from models import Algorithm, Scenario, parse_scenario
from plotting import render_figures
from tracking import init_mlflow, log_cell

logger = logging.getLogger(__name__)

ROOT = os.path.dirname(os.path.abspath(__file__))
DEFAULT_CONFIG = os.path.join(ROOT, "scenarios", "paper.scenario")
DEFAULT_OUT_DIR = "out"
DEFAULT_SMOOTHING = 25


def configure_logging() -> None:
    level = getattr(logging, os.getenv("HYPERVISOR_LOG_LEVEL", "INFO").upper(), None)
    if not isinstance(level, int):
        level = logging.INFO
    logging.basicConfig(level=level, format='%(asctime)s - %(levelname)s - %(message)s')


def load_scenario(path: str) -> Scenario:
    """
    Read, parse and validate a scenario file.

    Raises:
        ScenarioParseError: unreadable file or malformed JSON
        ScenarioValidationError: schema or invariant violation, with the field path
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise ScenarioParseError(f"cannot read scenario {path}: {e}") from e
    try:
        document = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioParseError(f"{path}: line {e.lineno} column {e.colno}: {e.msg}") from e
    scenario = parse_scenario(document)
    logger.debug(f"Loaded scenario {path}")
    return scenario


def write_run_outputs(result: hypervisor.SimResult, out_dir: str, smoothing_window: int,
                      plots: bool = False) -> List[str]:
    """Write metrics.csv, events.log, summary.txt and optionally the figures of one run."""
    os.makedirs(out_dir, exist_ok=True)
    frame = metrics_frame(result.rounds, smoothing_window)
    metrics_path = os.path.join(out_dir, "metrics.csv")
    write_metrics_csv(frame, metrics_path)
    events_path = os.path.join(out_dir, "events.log")
    hypervisor.write_events(result.events, events_path)
    summary_path = os.path.join(out_dir, "summary.txt")
    write_summary(result.summary, result.meta, summary_path)
    written = [metrics_path, events_path, summary_path]
    if plots:
        written += render_figures({result.algorithm.value: frame}, out_dir, smoothing_window)
    return written


def run_command(config: str, seed: int, algorithm: Optional[str], out_dir: str,
                smoothing: Optional[int] = None, plots: bool = False) -> int:
    scenario = load_scenario(config)
    result = hypervisor.run(scenario, seed, algorithm)
    write_run_outputs(result, out_dir, smoothing or scenario.smoothing_window, plots)
    logger.info(f"Run outputs written to {out_dir}")
    return 0


class Cell(NamedTuple):
    scenario: Scenario
    seed: int
    algorithm: str
    out_dir: str
    smoothing_window: int
    plots: bool


class CellOutcome(NamedTuple):
    algorithm: str
    seed: int
    out_dir: str
    meta: Optional[dict] = None
    summary: Optional[List[PhaseFlowSummary]] = None
    error: Optional[str] = None


def run_cell(cell: Cell) -> CellOutcome:
    """Run one (seed, algorithm) cell; failures are returned, not raised."""
    try:
        result = hypervisor.run(cell.scenario, cell.seed, cell.algorithm)
        write_run_outputs(result, cell.out_dir, cell.smoothing_window, cell.plots)
        return CellOutcome(cell.algorithm, cell.seed, cell.out_dir, result.meta, result.summary)
    except Exception as e:
        logger.exception(f"Cell {cell.algorithm} seed {cell.seed} failed")
        return CellOutcome(cell.algorithm, cell.seed, cell.out_dir, error=f"{type(e).__name__}: {e}")


def parse_seeds(text: str) -> List[int]:
    """``N`` means seeds 0..N-1; a comma separated list is taken literally."""
    try:
        if "," in text:
            seeds = [int(part) for part in text.split(",") if part.strip()]
        else:
            count = int(text)
            if count < 1:
                raise argparse.ArgumentTypeError("at least one seed is required")
            seeds = list(range(count))
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"invalid seeds {text!r}: {e}") from e
    if not seeds:
        raise argparse.ArgumentTypeError("at least one seed is required")
    if len(set(seeds)) != len(seeds):
        raise argparse.ArgumentTypeError(f"duplicate seeds in {text!r}")
    return seeds


def replicate_command(config: str, seeds: Sequence[int], algorithms: Sequence[str], out_dir: str,
                      jobs: Optional[int] = None, smoothing: Optional[int] = None, plots: bool = False) -> int:
    """
    Run every (seed, algorithm) cell, store the summaries and write the cross-seed tables.

    Returns:
        0 when every cell succeeded, 1 when at least one failed (listed in failures.txt)
    """
    scenario = load_scenario(config)
    window = smoothing or scenario.smoothing_window
    cells = [Cell(scenario, seed, algorithm, os.path.join(out_dir, algorithm, f"seed-{seed}"), window, plots)
             for algorithm in algorithms for seed in seeds]
    jobs = max(1, min(jobs or os.cpu_count() or 1, len(cells)))
    logger.info(f"Replicating {len(seeds)} seeds x {len(algorithms)} algorithms with {jobs} jobs")
    if jobs == 1:
        outcomes = [run_cell(cell) for cell in cells]
    else:
        with Pool(processes=jobs) as pool:
            outcomes = pool.map(run_cell, cells)

    os.makedirs(out_dir, exist_ok=True)
    db_path = os.path.join(out_dir, DB_NAME)
    if os.path.exists(db_path):
        logger.info(f"Replacing previous results database {db_path}")
        dispose_engine(db_path)
        os.remove(db_path)
    init_db(db_path)
    mlflow = init_mlflow()

    failures = []
    for outcome in outcomes:
        if outcome.error is not None:
            failures.append(outcome)
            logger.error(f"Cell {outcome.algorithm} seed {outcome.seed} failed: {outcome.error}")
            continue
        store_run(db_path, outcome.meta, outcome.summary, outcome.out_dir)
        log_cell(mlflow, outcome.meta, outcome.summary)
        logger.info(f"Cell {outcome.algorithm} seed {outcome.seed} complete")

    frame = load_phase_frame(db_path)
    aggregate_frame(frame).to_csv(os.path.join(out_dir, "aggregate.csv"), index=False, float_format="%.6f")
    paired_frame(frame).to_csv(os.path.join(out_dir, "paired.csv"), index=False, float_format="%.6f")
    logger.info(f"Wrote aggregate.csv and paired.csv to {out_dir}")

    if failures:
        with open(os.path.join(out_dir, "failures.txt"), "w", encoding="utf-8") as fh:
            for outcome in failures:
                fh.write(f"{outcome.algorithm}\tseed-{outcome.seed}\t{outcome.error}\n")
        logger.error(f"{len(failures)} of {len(cells)} cells failed; see failures.txt")
        return 1
    return 0


def plot_command(metrics_paths: Sequence[str], labels: Optional[Sequence[str]], out_dir: str,
                 smoothing: Optional[int] = None, config: Optional[str] = None) -> int:
    """Re-render the figure set from existing metrics.csv files."""
    if labels and len(labels) != len(metrics_paths):
        raise ConfigInvalid(f"{len(labels)} labels given for {len(metrics_paths)} metrics files")
    if smoothing is None:
        smoothing = load_scenario(config).smoothing_window if config else DEFAULT_SMOOTHING
    if not labels:
        labels = [os.path.basename(os.path.dirname(os.path.abspath(p))) for p in metrics_paths]
        if len(set(labels)) != len(labels):
            labels = [f"run{i}" for i in range(len(metrics_paths))]
    runs = {label: read_metrics_csv(path) for label, path in zip(labels, metrics_paths)}
    render_figures(runs, out_dir, smoothing)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Wireless hypervisor embedding simulator")
    sub = parser.add_subparsers(dest="command", required=True)
    algorithms = [a.value for a in Algorithm]

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", default=DEFAULT_CONFIG, help="scenario file")
        p.add_argument("--out-dir", default=None, help="output directory (env HYPERVISOR_OUT_DIR)")
        p.add_argument("--smoothing", type=int, default=None, help="smoothing window in rounds")
        p.add_argument("--plots", action="store_true", help="also write SVG figures")

    run_p = sub.add_parser("run", help="simulate one seed")
    common(run_p)
    run_p.add_argument("--seed", type=int, default=0)
    run_p.add_argument("--algorithm", choices=algorithms, default=None)

    rep_p = sub.add_parser("replicate", help="simulate many seeds and algorithms")
    common(rep_p)
    rep_p.add_argument("--seeds", type=parse_seeds, default=parse_seeds("20"), help="count N or list a,b,c")
    rep_p.add_argument("--algorithm", choices=algorithms, nargs="+", default=["static", "dynamic"])
    rep_p.add_argument("--jobs", type=int, default=None, help="parallel cells (default: CPU count)")

    plot_p = sub.add_parser("plot", help="render figures from metrics.csv files")
    plot_p.add_argument("--metrics", nargs="+", required=True)
    plot_p.add_argument("--labels", nargs="+", default=None)
    plot_p.add_argument("--config", default=None, help="scenario giving the smoothing window")
    plot_p.add_argument("--out-dir", default=None)
    plot_p.add_argument("--smoothing", type=int, default=None)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    load_dotenv()
    configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2

    out_dir = args.out_dir or os.getenv("HYPERVISOR_OUT_DIR", DEFAULT_OUT_DIR)
    if args.smoothing is not None and args.smoothing < 1:
        logger.error("--smoothing must be at least 1")
        return 2
    try:
        if args.command == "run":
            return run_command(args.config, args.seed, args.algorithm, out_dir, args.smoothing, args.plots)
        if args.command == "replicate":
            if args.jobs is not None and args.jobs < 1:
                logger.error("--jobs must be at least 1")
                return 2
            return replicate_command(args.config, args.seeds, list(dict.fromkeys(args.algorithm)), out_dir,
                                     args.jobs, args.smoothing, args.plots)
        return plot_command(args.metrics, args.labels, out_dir, args.smoothing, args.config)
    except ConfigInvalid as e:
        logger.error(f"Invalid configuration: {e}")
        return 2
    except Exception:
        logger.exception(f"{args.command} failed")
        return 1


if __name__ == "__main__":
    sys.exit(main())
