"""Choice of the KN damper phi by energy-outflow maximization, plus port-Hamiltonian diagnostics."""

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg
from pydantic import BaseModel, Field

from .core import BlockTridiagonal, Shift, as_phi, principal_sqrt, small_inverse
from .errors import (
    AllNodesSkipped,
    DegenerateWindow,
    EmptyHistory,
    SingularPencil,
    SingularUpdate,
    TooFewRitzValues,
)
from .quadratures import TransferSample
from .stieltjes import StieltjesParams, bidiagonal_j

logger = logging.getLogger('kn.optimizer')

# Search bracket for phi, in the same range the SMW update is validated on
PHI_BOUNDS = (1e-6, 1e6)

# Nodes with lambda_min(Re F) <= SKIP_TOL * ||F||_2 are skipped
SKIP_TOL = 0.05


class ContourPolicy(BaseModel):
    """How the contour around the dense part of the Ritz spectrum is built."""
    n_pts: int = Field(default=128, ge=4)
    min_ritz: Optional[int] = Field(default=None, ge=2)
    gap_factor: float = Field(default=2.0, gt=0.0)
    skip_tol: float = Field(default=SKIP_TOL, ge=0.0, lt=1.0)

    def required(self, p: int) -> int:
        return self.min_ritz if self.min_ritz is not None else max(20, 10 * p * p)


@dataclass(frozen=True)
class Contour:
    """Rectangle around [-d, 0] at distance delta, with trapezoid arclength weights."""

    nodes: np.ndarray
    weights: np.ndarray
    d: float
    delta: float
    skip_tol: float = SKIP_TOL

    def __len__(self) -> int:
        return len(self.nodes)


@dataclass(frozen=True)
class SmwCache:
    """
    Resolvent blocks of T_m at fixed shifts.

    q1 and qm are (K, mp, p): (T_m + s I)^{-1} E_1 and (T_m + s I)^{-1} E_m.
    f11, f1m and fmm are (K, p, p): E_1^T Q^1 (the Gauss value),
    E_m^T Q^1 and E_m^T Q^m.
    """

    shifts: np.ndarray
    q1: np.ndarray
    qm: np.ndarray
    f11: np.ndarray
    f1m: np.ndarray
    fmm: np.ndarray
    params: StieltjesParams

    def index_of(self, s: Shift) -> int:
        hits = np.flatnonzero(self.shifts == s)
        if len(hits) == 0:
            raise KeyError(f"shift {s} is not cached")
        return int(hits[0])


@dataclass(frozen=True)
class ObjectiveEvaluation:
    value: float
    used: int
    skipped: int


@dataclass
class PhiResult:
    """Outcome of one phi optimization; history holds (phi, objective) per evaluation."""

    phi: float
    objective_value: float
    history: List[Tuple[float, float]] = field(default_factory=list)
    averaged_phi: Optional[float] = None
    converged: bool = False
    at_bound: bool = False
    skipped: int = 0


@dataclass(frozen=True)
class FirstOrderPencil:
    """Port-Hamiltonian pencil S + D + sqrt(s) M of size 2mp."""

    S: np.ndarray
    D: np.ndarray
    M: np.ndarray
    p: int


def build_contour(ritz_values: Sequence[float], p: int, policy: Optional[ContourPolicy] = None) -> Contour:
    """
    Rectangle enclosing the dense spectral window [-d, 0].

    d starts as the smallest value capturing the required number of Ritz
    values and grows while the next gap stays within gap_factor times the
    median gap. delta is the median adjacent gap inside the window.
    """
    policy = policy or ContourPolicy()
    required = policy.required(p)
    mags = np.sort(np.abs(np.asarray(ritz_values, dtype=float)))
    if len(mags) < required:
        raise TooFewRitzValues(len(mags), required)

    count = required
    baseline = float(np.median(np.diff(mags[:count])))
    while count < len(mags) and mags[count] - mags[count - 1] <= policy.gap_factor * baseline:
        count += 1
    d = float(mags[count - 1])
    gaps = np.diff(mags[:count])
    positive = gaps[gaps > 0]
    if len(positive) == 0:
        raise DegenerateWindow(count)
    delta = float(np.median(gaps)) if np.median(gaps) > 0 else float(np.median(positive))

    left, right = -d - delta, delta
    width, height = right - left, 2 * delta
    perimeter = 2 * (width + height)
    t = (np.arange(policy.n_pts) + 0.5) * perimeter / policy.n_pts
    nodes = np.empty(policy.n_pts, dtype=complex)
    # counterclockwise from the lower-left corner
    bottom = t < width
    nodes[bottom] = left + t[bottom] - 1j * delta
    up = (t >= width) & (t < width + height)
    nodes[up] = right + 1j * (t[up] - width - delta)
    top = (t >= width + height) & (t < 2 * width + height)
    nodes[top] = right - (t[top] - width - height) + 1j * delta
    down = t >= 2 * width + height
    nodes[down] = left + 1j * (delta - (t[down] - 2 * width - height))

    logger.debug(f"contour window d={d:.4e}, delta={delta:.4e}, {count} Ritz values inside")
    return Contour(nodes, np.full(policy.n_pts, perimeter / policy.n_pts), d, delta, policy.skip_tol)


def precompute_smw(
    T: BlockTridiagonal,
    contour: Union[Contour, Sequence[Shift]],
    params: StieltjesParams,
) -> SmwCache:
    """Solve (T_m + sI) [Q^1, Q^m] = [E_1, E_m] once per node."""
    shifts = np.asarray(contour.nodes if isinstance(contour, Contour) else contour)
    p, m = T.p, T.m
    rhs = T.unit_blocks(1, m)
    solutions = np.array([T.solve(rhs, s) for s in shifts])
    q1, qm = solutions[:, :, :p], solutions[:, :, p:]
    return SmwCache(
        shifts=shifts,
        q1=q1,
        qm=qm,
        f11=q1[:, :p, :],
        f1m=q1[:, -p:, :],
        fmm=qm[:, -p:, :],
        params=params,
    )


def _update(f11, f1m, fmm, delta_alpha, shifts) -> np.ndarray:
    p = f11.shape[-1]
    M = np.eye(p) + delta_alpha @ fmm
    cond = np.linalg.cond(M)
    bad = ~np.isfinite(cond) | (cond > 1e14)
    if np.any(bad):
        raise SingularUpdate(complex(shifts[np.flatnonzero(bad)[0]]))
    X = np.linalg.solve(M, delta_alpha @ f1m)
    return f11 - np.swapaxes(f1m, -1, -2) @ X


def smw_eval(cache: SmwCache, delta_alpha: np.ndarray, s: Shift) -> np.ndarray:
    """
    E_1-block of the resolvent of T_m + E_m delta_alpha E_m^T at a cached shift.

    Evaluated as E_1^T Q^1 - (F^{1,m})^T (I + delta_alpha F^{m,m})^{-1} delta_alpha F^{1,m},
    so delta_alpha = 0 returns the Gauss value.
    """
    k = cache.index_of(s)
    return _update(cache.f11[k], cache.f1m[k], cache.fmm[k], np.asarray(delta_alpha), cache.shifts[k:k + 1])


def kn_values(cache: SmwCache, phi) -> np.ndarray:
    """KN values at every cached shift, shape (K, p, p)."""
    params = cache.params
    phi = as_phi(phi, params.p)
    Gi = params.gamma_invs[-1]
    Ki = params.kappa_hat_invs[-1]
    roots = np.sqrt(cache.shifts.astype(complex))
    inner = np.linalg.inv(Gi[None] + roots[:, None, None] * phi[None])
    delta_alpha = -Ki.T @ Gi @ inner @ Gi @ Ki
    return _update(cache.f11, cache.f1m, cache.fmm, delta_alpha, cache.shifts)


def _outflow(values: np.ndarray, weights: np.ndarray, skip_tol: float) -> ObjectiveEvaluation:
    re = 0.5 * (values.real + np.swapaxes(values.real, -1, -2))
    im = 0.5 * (values.imag + np.swapaxes(values.imag, -1, -2))
    lam, V = np.linalg.eigh(re)
    scale = np.linalg.norm(values, ord=2, axis=(-2, -1))
    used = lam[:, 0] > skip_tol * scale
    if not np.any(used):
        raise AllNodesSkipped(len(values))
    V, lam, im = V[used], lam[used], im[used]
    root_inv = (V * lam[:, None, :] ** -0.5) @ np.swapaxes(V, -1, -2)
    ratio = root_inv @ im @ root_inv
    norms = np.abs(np.linalg.eigvalsh(ratio)).max(axis=-1)
    skipped = int(np.count_nonzero(~used))
    if skipped:
        logger.debug(f"→ {skipped} contour nodes skipped (Re F indefinite or nearly singular)")
    return ObjectiveEvaluation(float(np.sum(weights[used] * norms)), int(np.count_nonzero(used)), skipped)


def evaluate_objective(cache: SmwCache, contour: Contour, phi: Optional[float]) -> ObjectiveEvaluation:
    """Relative energy outflow over the contour; phi=None evaluates the Gauss approximant."""
    values = cache.f11 if phi is None else kn_values(cache, phi)
    return _outflow(values, contour.weights, contour.skip_tol)


def kn_objective(cache: SmwCache, contour: Contour, phi: float) -> float:
    """Sum of w_k ||(Re F)^{-1/2} Im F (Re F)^{-1/2}||_2 over the contour nodes."""
    return evaluate_objective(cache, contour, phi).value


def nelder_mead_1d(
    func: Callable[[float], float],
    x_start: float,
    step: float = 1.0,
    xatol: float = 1e-3,
    max_evals: int = 200,
    alpha: float = 1.0,
    gamma: float = 2.0,
    beta: float = 0.5,
    delta: float = 0.5,
    bounds: Optional[Tuple[float, float]] = None,
) -> Tuple[float, float, List[Tuple[float, float]], bool]:
    """
    Minimize a scalar function of one variable with a two-point simplex.

    Args:
        func: Function to minimize
        x_start: Initial point
        step: Offset of the second simplex point
        xatol: Stop once the simplex diameter drops below this
        max_evals: Evaluation budget
        alpha: Reflection coefficient
        gamma: Expansion coefficient
        beta: Contraction coefficient
        delta: Shrink coefficient
        bounds: Optional (lo, hi); trial points are clipped into it

    Returns:
        Tuple (x_best, f_best, history, converged)
    """
    lo, hi = bounds if bounds is not None else (-np.inf, np.inf)
    if not lo < hi:
        raise ValueError(f"empty bracket [{lo}, {hi}]")
    history: List[Tuple[float, float]] = []

    def evaluate(x: float) -> List[float]:
        x = float(min(max(x, lo), hi))
        value = float(func(x))
        history.append((x, value))
        return [x, value]

    x_start = float(min(max(x_start, lo), hi))
    second = x_start + step if x_start + step <= hi else x_start - step
    res = [evaluate(x_start), evaluate(second)]
    converged = False
    while len(history) < max_evals:
        res.sort(key=lambda pair: pair[1])
        # equal values only stop the search at the initial simplex
        flat_start = len(history) == 2 and res[1][1] == res[0][1]
        if abs(res[1][0] - res[0][0]) < xatol or flat_start:
            converged = True
            break

        x0 = res[0][0]
        worst_x, worst_f = res[-1]

        # Reflection
        reflected = evaluate(x0 + alpha * (x0 - worst_x))
        rscore = reflected[1]

        # Expansion
        if rscore < res[0][1]:
            if len(history) >= max_evals:
                res[-1] = reflected
                break
            expanded = evaluate(x0 + gamma * (x0 - worst_x))
            res[-1] = expanded if expanded[1] < rscore else reflected
            continue
        if len(history) >= max_evals:
            if rscore < worst_f:
                res[-1] = reflected
            break

        # Contraction, outside when the reflection beat the worst point
        if rscore < worst_f:
            xc = x0 + beta * (reflected[0] - x0)
        else:
            xc = x0 + beta * (worst_x - x0)
        contracted = evaluate(xc)
        if contracted[1] < min(rscore, worst_f):
            res[-1] = contracted
            continue
        if len(history) >= max_evals:
            break

        # Reduction
        res[-1] = evaluate(x0 + delta * (worst_x - x0))

    res.sort(key=lambda pair: pair[1])
    return res[0][0], res[0][1], history, converged


def optimize_phi(
    cache: Optional[SmwCache],
    contour: Optional[Contour],
    init: float,
    objective: Optional[Callable[[float], float]] = None,
    step: float = 1.0,
    xatol: float = 1e-3,
    max_evals: int = 200,
    bounds: Tuple[float, float] = PHI_BOUNDS,
) -> PhiResult:
    """
    Maximize the KN objective over log10(phi) with Nelder-Mead.

    Args:
        cache: SMW cache on the contour nodes
        contour: Contour supplying the weights
        init: Starting phi (clipped into bounds)
        objective: Replacement objective phi -> value (used instead of the cache)
        step: Initial simplex size in decades
        xatol: Simplex diameter tolerance in decades
        max_evals: Evaluation budget
        bounds: Search bracket (phi_lo, phi_hi)

    Returns:
        PhiResult with the best phi and the evaluation history
    """
    if not init > 0:
        raise ValueError(f"init must be positive, got {init}")
    if not 0 < bounds[0] < bounds[1]:
        raise ValueError(f"invalid phi bracket {bounds}")
    if objective is None:
        objective = lambda phi: kn_objective(cache, contour, phi)

    lo, hi = np.log10(bounds[0]), np.log10(bounds[1])
    x, f, history, converged = nelder_mead_1d(
        lambda x: -objective(10.0 ** x), np.log10(init), step, xatol, max_evals, bounds=(lo, hi)
    )
    phi = float(10.0 ** x)
    at_bound = x - lo < xatol or hi - x < xatol
    skipped = evaluate_objective(cache, contour, phi).skipped if cache is not None and contour is not None else 0
    logger.info(
        f"{'✓' if converged else '→'} phi = {phi:.4e}, objective = {-f:.6e} "
        f"after {len(history)} evaluations"
    )
    if at_bound:
        logger.warning(f"✗ phi = {phi:.4e} sits on the search bracket [{bounds[0]:.0e}, {bounds[1]:.0e}]")
    return PhiResult(
        phi=phi,
        objective_value=-f,
        history=[(float(10.0 ** xi), -fi) for xi, fi in history],
        converged=converged,
        at_bound=at_bound,
        skipped=skipped,
    )


def average_phi(history: Sequence[Union[PhiResult, float]], window: int) -> float:
    """Geometric mean of the last `window` phi values."""
    if window < 1:
        raise ValueError("window must be >= 1")
    if not history:
        raise EmptyHistory()
    phis = [h.phi if isinstance(h, PhiResult) else float(h) for h in history[-window:]]
    return float(np.exp(np.mean(np.log(phis))))


def cheated_phi(
    cache: SmwCache,
    reference: np.ndarray,
    phis: Sequence[float],
) -> Tuple[float, np.ndarray]:
    """
    The phi on a grid that minimizes the true error against reference values.

    Args:
        cache: SMW cache built on the validation shifts
        reference: Reference values (K, p, p) at the same shifts
        phis: Candidate phi grid

    Returns:
        Tuple (best phi, summed relative Frobenius error per candidate)
    """
    ref_norms = np.linalg.norm(reference, axis=(1, 2))
    errors = np.array([
        np.sum(np.linalg.norm(kn_values(cache, phi) - reference, axis=(1, 2)) / ref_norms)
        for phi in phis
    ])
    return float(phis[int(np.argmin(errors))]), errors


def assemble_first_order_pencil(params: StieltjesParams, phi) -> FirstOrderPencil:
    """
    S = [[0, J], [-J^T, 0]], D = blkdiag(0, E_m phi^{-1} E_m^T), M = blkdiag(Gamma_hat, Gamma).
    """
    m, p = params.m, params.p
    phi = as_phi(phi, p)
    n = m * p
    J = bidiagonal_j(m, p)
    zero = np.zeros((n, n))
    S = np.block([[zero, J], [-J.T, zero]])
    damper = np.zeros((n, n))
    damper[-p:, -p:] = small_inverse(phi, m)
    D = scipy.linalg.block_diag(zero, damper)
    M = scipy.linalg.block_diag(scipy.linalg.block_diag(*params.gamma_hats), scipy.linalg.block_diag(*params.gammas))
    return FirstOrderPencil(S, D, M, p)


def solve_first_order_pencil(pencil: FirstOrderPencil, s: Shift) -> np.ndarray:
    """Solve (S + D + sqrt(s) M) x = [E_1 / sqrt(s); 0]; the first block of x is the KN value."""
    root = principal_sqrt(s)
    rhs = np.zeros((pencil.S.shape[0], pencil.p), dtype=complex)
    rhs[:pencil.p] = np.eye(pencil.p) / root
    try:
        x = np.linalg.solve(pencil.S + pencil.D + root * pencil.M, rhs)
    except np.linalg.LinAlgError as e:
        raise SingularPencil(s) from e
    if not np.all(np.isfinite(x)):
        raise SingularPencil(s)
    return x


def first_order_transfer(pencil: FirstOrderPencil, s: Shift) -> np.ndarray:
    """First-order transfer value F(s) / sqrt(s)."""
    return solve_first_order_pencil(pencil, s)[:pencil.p] / principal_sqrt(s)


def energy_split(fhat: TransferSample, s: Shift) -> Tuple[float, float]:
    """(stored, dissipated) as the real and imaginary parts of fhat / sqrt(s), p = 1."""
    value = np.asarray(fhat.value)
    if value.size != 1:
        raise ValueError("energy split is a scalar diagnostic (p = 1)")
    ratio = complex(value.reshape(())) / principal_sqrt(s)
    return ratio.real, ratio.imag
