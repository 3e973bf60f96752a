"""Command-line front end for lanczos-kn studies."""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from . import config

logging.basicConfig(
    level=getattr(logging, config.LOG_LEVEL, logging.INFO),
    format='%(asctime)s | %(levelname)-8s | %(name)s | %(message)s',
    datefmt='%H:%M:%S',
    stream=sys.stdout
)
logger = logging.getLogger('kn.cli')

from . import storage
from .config import RunConfig, load_run_config, save_run_config
from .core import as_shift
from .errors import KnError
from .jobs import RunManager, RunStatus
from .selftest import run_selftest
from .studies import (
    load_problem,
    phi_checkpoints,
    run_convergence,
    run_optimize,
    run_state,
    sweep_shifts,
    write_state_outputs,
)

COMMANDS = ("convergence", "sweep", "optimize", "state", "selftest")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lanczos-kn",
        description="Block Lanczos transfer functions with Krein-Nudelman terminators",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        cmd = sub.add_parser(name)
        if name == "selftest":
            cmd.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
            continue
        cmd.add_argument("--config", type=Path, default=None, help="run configuration JSON")
        cmd.add_argument("--output", type=str, default=None, help="output directory")
        cmd.add_argument("--threads", type=int, default=None, help="worker threads for shift evaluations")
        cmd.add_argument("--seed", type=int, default=None, help="seed recorded with the run")
    return parser


def _banner(command: str, cfg: RunConfig):
    logger.info("=" * 60)
    logger.info(f"LANCZOS-KN {command.upper()}")
    logger.info("=" * 60)
    logger.info(f"Output dir: {cfg.output_dir}")
    logger.info(f"Threads: {cfg.threads}")
    logger.info(f"Seed: {cfg.seed}")
    logger.info(f"Problem: {cfg.problem if isinstance(cfg.problem, str) else ('inline' if cfg.problem else 'desk default')}")
    logger.info("=" * 60)


def cmd_convergence(cfg: RunConfig, base_dir: Path, run: RunManager) -> List[Path]:
    problem = load_problem(cfg, base_dir)
    shifts = [as_shift(s) for s in cfg.shifts]
    rows = run_convergence(cfg, problem, shifts, cfg.checkpoints(), run, run.checkpoint_done)
    out = Path(cfg.output_dir) / "convergence.csv"
    return [storage.write_csv(out, "convergence", storage.CONVERGENCE_COLUMNS, rows)]


def cmd_sweep(cfg: RunConfig, base_dir: Path, run: RunManager) -> List[Path]:
    problem = load_problem(cfg, base_dir)
    m = cfg.fixed_m
    rows = run_convergence(
        cfg, problem, sweep_shifts(cfg), phi_checkpoints(cfg, m), run, run.checkpoint_done, report=[m]
    )
    out = Path(cfg.output_dir) / "sweep.csv"
    return [storage.write_csv(out, "sweep", storage.CONVERGENCE_COLUMNS, rows)]


def cmd_optimize(cfg: RunConfig, base_dir: Path, run: RunManager) -> List[Path]:
    problem = load_problem(cfg, base_dir)
    report = run_optimize(cfg, problem, run, run.checkpoint_done)
    return [storage.write_json(Path(cfg.output_dir) / "optimize.json", report)]


def cmd_state(cfg: RunConfig, base_dir: Path, run: RunManager) -> List[Path]:
    problem = load_problem(cfg, base_dir)
    results = run_state(cfg, problem, run)
    return write_state_outputs(results, problem, Path(cfg.output_dir))


def cmd_selftest(inject_fault: bool = False) -> int:
    logger.info("=" * 60)
    logger.info("LANCZOS-KN SELFTEST" + (" (fault injected)" if inject_fault else ""))
    logger.info("=" * 60)
    results = run_selftest(inject_fault)
    failed = [r for r in results if not r.passed]
    if failed:
        logger.error(f"✗ {len(failed)} check(s) failed: {', '.join(r.name for r in failed)}")
        return 1
    logger.info("✓ all checks passed")
    return 0


HANDLERS = {
    "convergence": cmd_convergence,
    "sweep": cmd_sweep,
    "optimize": cmd_optimize,
    "state": cmd_state,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "selftest":
        return cmd_selftest(args.inject_fault)

    try:
        cfg = load_run_config(
            args.config,
            {"output_dir": args.output, "threads": args.threads, "seed": args.seed},
        )
    except KnError as e:
        logger.error(f"✗ {type(e).__name__}: {e}")
        return 1

    _banner(args.command, cfg)
    storage.ensure_output_dir(cfg.output_dir)
    save_run_config(cfg, cfg.output_dir)
    run = RunManager(cfg.output_dir, args.command, cfg.seed, cfg.record_timing)
    run.update_status(RunStatus.RUNNING)
    base_dir = args.config.parent if args.config is not None else Path('.')

    try:
        outputs = HANDLERS[args.command](cfg, base_dir, run)
    except (KnError, OSError) as e:
        logger.error(f"✗ {type(e).__name__}: {e}")
        run.update_status(RunStatus.ERROR, f"{type(e).__name__}: {e}")
        return 1

    for path in outputs:
        run.add_output(str(path))
    run.update_status(RunStatus.COMPLETE)
    logger.info(f"✓ {args.command} complete: {len(outputs)} file(s) in {cfg.output_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
