"""Study pipelines behind the CLI commands: convergence, sweep, optimize and state."""

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import ValidationError

from . import storage
from .config import OptimizePolicy, PhiPolicy, RunConfig
from .core import Shift, as_shift
from .errors import ConfigError, KnError, TooFewRitzValues
from .jobs import RunManager
from .lanczos import LanczosDecomposition, assemble_tridiagonal, block_lanczos, ritz_values
from .optimizer import (
    ContourPolicy,
    PhiResult,
    average_phi,
    build_contour,
    cheated_phi,
    optimize_phi,
    precompute_smw,
)
from .parallel import evaluate_parallel
from .problems import Problem, ProblemDefinition, build_problem, reference_transfer
from .quadratures import (
    averaged_eval,
    extended_kn_eval,
    gauss_eval,
    kn_eval_tridiag,
    radau_eval,
)
from .statefield import (
    cross_section_series,
    snapshot,
    snapshot_table,
    state_solution,
    vertical_line,
)
from .stieltjes import StieltjesParams, extract_stieltjes

logger = logging.getLogger('kn.studies')


@dataclass
class Checkpoint:
    """Everything derived from the first m Lanczos steps."""

    m: int
    dec: LanczosDecomposition
    params: Optional[StieltjesParams]
    error: Optional[str] = None

    @property
    def T(self):
        return assemble_tridiagonal(self.dec)


@dataclass
class PhiTracker:
    """Applies a phi policy across increasing checkpoints."""

    config: RunConfig
    history: List[PhiResult] = field(default_factory=list)
    index: int = 0

    def step(self, cp: Checkpoint, run: Optional[RunManager] = None) -> Tuple[Optional[float], Optional[dict]]:
        """
        Advance to checkpoint cp.

        Returns:
            Tuple (phi to use or None, optimization details or None)
        """
        policy = self.config.phi_policy
        self.index += 1
        if policy is None:
            return None, None
        if policy.fixed is not None:
            return policy.fixed, None

        opt = policy.optimize
        details = None
        if (self.index - 1) % opt.every == 0 and cp.params is not None:
            try:
                details = optimize_checkpoint(cp, opt.init, opt.n_pts)
                result = details.pop("result")
                self.history.append(result)
                if result.at_bound and run is not None:
                    run.add_warning(f"m={cp.m}: phi={result.phi:.3e} sits on the search bracket")
                result.averaged_phi = average_phi(self.history, opt.average_window)
                details["averaged_phi"] = result.averaged_phi
            except TooFewRitzValues as e:
                details = {"m": cp.m, "warning": str(e)}
                if run is not None:
                    run.add_warning(f"m={cp.m}: {e}")
            except KnError as e:
                details = {"m": cp.m, "warning": f"{type(e).__name__}: {e}"}
                if run is not None:
                    run.add_warning(f"m={cp.m}: {type(e).__name__}: {e}")
        if not self.history:
            return None, details
        return average_phi(self.history, opt.average_window), details


def optimize_checkpoint(cp: Checkpoint, init: float, n_pts: int) -> dict:
    """Contour, SMW cache and Nelder-Mead at one checkpoint."""
    T = cp.T
    contour = build_contour(ritz_values(cp.dec), cp.dec.p, ContourPolicy(n_pts=n_pts))
    cache = precompute_smw(T, contour, cp.params)
    result = optimize_phi(cache, contour, init)
    return {
        "m": cp.m,
        "phi": result.phi,
        "objective": result.objective_value,
        "d": contour.d,
        "delta": contour.delta,
        "skipped": result.skipped,
        "evaluations": len(result.history),
        "converged": result.converged,
        "at_bound": result.at_bound,
        "result": result,
    }


def load_problem(config: RunConfig, base_dir: Optional[Path] = None) -> Problem:
    """Resolve config.problem (path, inline JSON or None for the desk problem)."""
    base_dir = base_dir or Path('.')
    if config.problem is None:
        definition = ProblemDefinition()
    elif isinstance(config.problem, dict):
        try:
            definition = ProblemDefinition.model_validate(config.problem)
        except ValidationError as e:
            raise ConfigError(f"invalid inline problem: {e}") from e
    else:
        path = base_dir / config.problem
        try:
            with open(path, 'r', encoding='utf-8') as f:
                definition = ProblemDefinition.model_validate(json.load(f))
        except (OSError, json.JSONDecodeError, ValidationError) as e:
            raise ConfigError(f"cannot read problem {path}: {e}") from e
        base_dir = path.parent
    return build_problem(definition, base_dir)


def run_checkpoints(
    problem: Problem,
    config: RunConfig,
    checkpoints: Sequence[int],
    keep_basis: bool = False,
    need_tail: bool = False,
) -> List[Checkpoint]:
    """One Lanczos run to the last checkpoint, sliced at every checkpoint."""
    m_max = max(checkpoints)
    dec_full = block_lanczos(problem.operator, problem.rhs, m_max, reorth=config.reorth, keep_basis=keep_basis)
    result = []
    for m in checkpoints:
        dec = dec_full.truncated(m)
        try:
            params = extract_stieltjes(dec, with_tail=need_tail and dec.has_tail)
            error = None
        except KnError as e:
            logger.warning(f"✗ m={m}: string extraction failed: {type(e).__name__}: {e}")
            params, error = None, f"{type(e).__name__}: {e}"
        result.append(Checkpoint(m, dec, params, error))
    return result


def evaluate_variant(
    variant: str,
    cp: Checkpoint,
    s: Shift,
    phi: Optional[float],
    xi: Optional[float],
) -> np.ndarray:
    """Approximant value for the raw right-hand side."""
    T = cp.T
    if variant == "gauss":
        sample = gauss_eval(T, s)
    elif cp.params is None:
        raise RuntimeError(cp.error or "string parameters unavailable")
    elif variant == "radau":
        sample = radau_eval(T, cp.params, s)
    elif variant == "average":
        sample = averaged_eval(T, cp.params, s)
    elif variant == "kn":
        sample = kn_eval_tridiag(T, cp.params, phi, s)
    elif variant == "extended_kn":
        length = xi if xi is not None else cp.params.gammas[-1]
        sample = extended_kn_eval(cp.dec, cp.params, phi, length, s)
    else:
        raise ValueError(f"unknown variant {variant}")
    return sample.raw(cp.dec.rhs_factor)


def reference_values(problem: Problem, shifts: Sequence[Shift], threads: int) -> List[Optional[np.ndarray]]:
    logger.info(f"▶ reference solves at {len(shifts)} shifts")
    samples = evaluate_parallel(
        [lambda s=s: reference_transfer(problem.operator, problem.rhs, s) for s in shifts],
        threads,
        [f"reference s={s}" for s in shifts],
    )
    return [None if sample is None else sample.value for sample in samples]


def _variants(config: RunConfig) -> List[str]:
    variants = list(config.variants)
    if config.phi_policy is not None and "kn" not in variants:
        variants.append("kn")
    return variants


def _rows_for_checkpoint(
    cp: Checkpoint,
    shifts: Sequence[Shift],
    references: Sequence[Optional[np.ndarray]],
    variants: Sequence[str],
    phi: Optional[float],
    objective: Optional[float],
    config: RunConfig,
    run: Optional[RunManager],
) -> List[list]:
    jobs, labels, keys = [], [], []
    for s, ref in zip(shifts, references):
        for variant in variants:
            if variant in ("kn", "extended_kn") and phi is None:
                continue
            if variant == "extended_kn" and not cp.dec.has_tail:
                continue

            def job(variant=variant, s=s, ref=ref):
                start = time.perf_counter()
                value = evaluate_variant(variant, cp, s, phi, config.xi)
                elapsed = (time.perf_counter() - start) * 1e3
                error = None if ref is None else float(np.linalg.norm(value - ref) / np.linalg.norm(ref))
                return error, elapsed

            jobs.append(job)
            labels.append(f"m={cp.m} {variant} s={s}")
            keys.append((s, variant))

    skipped = [v for v in ("kn", "extended_kn") if v in variants and phi is None]
    if skipped and run is not None:
        run.add_warning(f"m={cp.m}: no phi available yet, {', '.join(skipped)} rows omitted")

    results = evaluate_parallel(jobs, config.threads, labels)
    rows = []
    for (s, variant), result in zip(keys, results):
        error, elapsed = result if result is not None else (None, 0.0)
        kn_like = variant in ("kn", "extended_kn")
        rows.append([
            cp.m,
            float(np.real(s)),
            float(np.imag(s)),
            variant,
            error,
            phi if kn_like else None,
            objective if kn_like else None,
            round(elapsed, 3) if config.record_timing else 0.0,
        ])
    return rows


def run_convergence(
    config: RunConfig,
    problem: Problem,
    shifts: Sequence[Shift],
    checkpoints: Sequence[int],
    run: Optional[RunManager] = None,
    on_checkpoint: Optional[Callable[[int], None]] = None,
    report: Optional[Sequence[int]] = None,
) -> List[list]:
    """
    Evaluate every variant at every shift for each checkpoint.

    Args:
        config: Run configuration
        problem: Operator and right-hand side
        shifts: Shifts to evaluate
        checkpoints: Increasing m values
        run: Optional manifest receiving warnings
        on_checkpoint: Optional callback(m) after each checkpoint
        report: Checkpoints that produce rows (all when None); the others only advance phi

    Returns:
        Rows in CONVERGENCE_COLUMNS order
    """
    variants = _variants(config)
    references = reference_values(problem, shifts, config.threads)
    cps = run_checkpoints(problem, config, checkpoints, need_tail="extended_kn" in variants)
    tracker = PhiTracker(config)
    rows: List[list] = []
    for cp in cps:
        logger.info(f"▶ checkpoint m={cp.m}")
        phi, details = tracker.step(cp, run)
        objective = details.get("objective") if details else None
        if report is not None and cp.m not in report:
            continue
        rows.extend(_rows_for_checkpoint(cp, shifts, references, variants, phi, objective, config, run))
        if on_checkpoint:
            on_checkpoint(cp.m)
    return rows


def sweep_shifts(config: RunConfig) -> List[Shift]:
    """Real shifts first, then imaginary ones, each log-spaced over the configured decades."""
    spec = config.sweep
    shifts: List[Shift] = []
    if spec.real_decades is not None:
        shifts.extend(float(v) for v in np.logspace(*spec.real_decades, spec.points))
    if spec.imag_decades is not None:
        shifts.extend(complex(0.0, v) for v in np.logspace(*spec.imag_decades, spec.points))
    return shifts


def phi_checkpoints(config: RunConfig, m: int) -> List[int]:
    """Checkpoints up to m used to build the phi history for a fixed-m study."""
    points = [k for k in config.checkpoints() if k < m]
    return points + [m]


def run_optimize(
    config: RunConfig,
    problem: Problem,
    run: Optional[RunManager] = None,
    on_checkpoint: Optional[Callable[[int], None]] = None,
) -> dict:
    """Per-checkpoint phi optimization with the cheated phi as a yardstick."""
    policy = config.phi_policy
    if policy is None or policy.optimize is None:
        config = config.model_copy(update={"phi_policy": PhiPolicy(optimize=OptimizePolicy())})

    validation = [as_shift(v) for v in config.validation_shifts] if config.validation_shifts else sweep_shifts(config)
    references = reference_values(problem, validation, config.threads)
    have_reference = all(r is not None for r in references)
    grid = np.logspace(np.log10(config.cheat_grid.lo), np.log10(config.cheat_grid.hi), config.cheat_grid.points)

    tracker = PhiTracker(config)
    entries = []
    for cp in run_checkpoints(problem, config, config.checkpoints()):
        _, details = tracker.step(cp, run)
        entry = dict(details) if details else {"m": cp.m, "warning": cp.error or "no optimization at this checkpoint"}
        if "warning" not in entry and have_reference:
            cache = precompute_smw(cp.T, validation, cp.params)
            raw_to_normalized = np.linalg.inv(cp.dec.rhs_factor)
            reference = np.array([raw_to_normalized.T @ r @ raw_to_normalized for r in references])
            best, errors = cheated_phi(cache, reference, grid)
            entry["cheated_phi"] = best
            entry["cheated_error"] = float(np.min(errors))
        entries.append(entry)
        if on_checkpoint:
            on_checkpoint(cp.m)
    return {
        "validation_shifts": [[float(np.real(s)), float(np.imag(s))] for s in validation],
        "checkpoints": entries,
    }


def run_state(
    config: RunConfig,
    problem: Problem,
    run: Optional[RunManager] = None,
) -> Dict[str, dict]:
    """
    States, snapshots and cross-sections for every requested variant.

    Returns:
        Mapping variant -> {"state": complex state, "snapshots": [...], "series": array, "line": rows}
    """
    spec = config.state
    m = config.fixed_m
    variants = list(spec.variants)
    cps = run_checkpoints(problem, config, phi_checkpoints(config, m), keep_basis=True)
    tracker = PhiTracker(config)
    phi = None
    for cp in cps:
        phi, _ = tracker.step(cp, run)
    cp = cps[-1]
    if cp.params is None:
        extract_stieltjes(cp.dec)

    grid = problem.diffusion.grid if problem.diffusion is not None else None
    if spec.line is not None:
        line = spec.line
    elif problem.diffusion is not None:
        column = int(np.flatnonzero(problem.rhs[:, 0])[0]) % grid.nx
        line = vertical_line(grid, column)
    else:
        line = list(range(min(problem.operator.n, 50)))

    epsilon = spec.damping()
    results: Dict[str, dict] = {}
    for variant in variants:
        if variant == "kn" and phi is None:
            if run is not None:
                run.add_warning("no phi available, kn state omitted")
            continue
        state = state_solution(cp.dec, cp.params, variant, spec.omega, epsilon, phi if variant == "kn" else None)
        results[variant] = {
            "state": state,
            "snapshots": [snapshot(state, spec.omega, t, grid, epsilon=epsilon, variant=variant) for t in spec.times],
            "series": cross_section_series(state, spec.omega, line, spec.times),
            "line": line,
        }
        logger.info(f"✓ state {variant}: |state| = {np.linalg.norm(state):.4e}")
    return results


def write_state_outputs(results: Dict[str, dict], problem: Problem, output_dir: Path) -> List[Path]:
    paths = []
    grid = problem.diffusion.grid if problem.diffusion is not None else None
    for variant, result in results.items():
        for k, snap in enumerate(result["snapshots"]):
            header = ["x", "y", "exterior", "value"] if grid is not None else ["row", "value"]
            paths.append(storage.write_csv(
                output_dir / f"snapshot_{variant}_t{k}.csv", "snapshot", header, snapshot_table(snap)
            ))
        if grid is not None:
            xs, ys = grid.x(), grid.y()
            labels = [f"{xs[row % grid.nx]!r}:{ys[row // grid.nx]!r}" for row in result["line"]]
        else:
            labels = [str(row) for row in result["line"]]
        times = [snap.t for snap in result["snapshots"]]
        rows = [[t] + [float(v) for v in values] for t, values in zip(times, result["series"])]
        paths.append(storage.write_csv(
            output_dir / f"cross_section_{variant}.csv", "cross_section", ["t"] + labels, rows
        ))
    return paths
