"""State-space solutions and time-harmonic snapshots."""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .core import BlockTridiagonal
from .lanczos import LanczosDecomposition
from .problems import GridSpec
from .quadratures import Variant, kn_matrix, radau_matrix
from .stieltjes import StieltjesParams

logger = logging.getLogger('kn.statefield')


@dataclass(frozen=True)
class StateSnapshot:
    """Real field Re(state * exp(i omega t)); shaped (ny, nx) when a grid is attached."""

    field: np.ndarray
    t: float
    omega: float
    epsilon: Optional[float] = None
    variant: Optional[Variant] = None
    grid: Optional[GridSpec] = None


def harmonic_shift(omega: float, epsilon: float) -> complex:
    """s = (i omega + epsilon)^2."""
    return (1j * omega + epsilon) ** 2


def state_solution(
    dec: LanczosDecomposition,
    params: StieltjesParams,
    variant: Union[Variant, str],
    omega: float,
    epsilon: float,
    phi=None,
) -> np.ndarray:
    """
    Q_m (T_variant(s) + sI)^{-1} E_1 R_B with s = (i omega + epsilon)^2.

    Args:
        dec: Decomposition computed with keep_basis
        params: String parameters of T_m
        variant: gauss, radau, average or kn
        omega: Angular frequency
        epsilon: Positive damping
        phi: Damper for the kn variant

    Returns:
        Complex n x p state
    """
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    Q = dec.require_basis()
    variant = Variant(variant)
    s = harmonic_shift(omega, epsilon)
    T = BlockTridiagonal(dec.alphas, dec.betas)
    E1 = T.unit_blocks(1)

    if variant is Variant.GAUSS:
        X = T.solve(E1, s)
    elif variant is Variant.RADAU:
        X = radau_matrix(T, params).solve(E1, s)
    elif variant is Variant.AVERAGE:
        X = 0.5 * (T.solve(E1, s) + radau_matrix(T, params).solve(E1, s))
    elif variant is Variant.KN:
        if phi is None:
            raise ValueError("the kn state needs phi")
        X = kn_matrix(T, params, phi, s).solve(E1, s)
    else:
        raise ValueError(f"no state for variant {variant.value}")
    logger.debug(f"state {variant.value}: omega={omega}, epsilon={epsilon}, s={s}")
    return Q @ X @ dec.rhs_factor


def snapshot(
    state: np.ndarray,
    omega: float,
    t: float,
    grid: Optional[GridSpec] = None,
    column: int = 0,
    epsilon: Optional[float] = None,
    variant: Optional[Variant] = None,
) -> StateSnapshot:
    state = np.asarray(state)
    if state.ndim == 2:
        state = state[:, column]
    field = np.real(state * np.exp(1j * omega * t))
    if grid is not None:
        field = field.reshape(grid.ny, grid.nx)
    return StateSnapshot(field, t, omega, epsilon, variant, grid)


def cross_section_series(
    state: np.ndarray,
    omega: float,
    line: Sequence[int],
    times: Sequence[float],
    column: int = 0,
) -> np.ndarray:
    """Field values at the `line` rows for every time; rows are times."""
    state = np.asarray(state)
    if state.ndim == 2:
        state = state[:, column]
    values = state[np.asarray(line, dtype=int)]
    phases = np.exp(1j * omega * np.asarray(times, dtype=float))
    return np.real(phases[:, None] * values[None, :])


def snapshot_table(snap: StateSnapshot) -> List[Tuple]:
    """Rows (x, y, exterior, value) on the full grid, or (row, value) without a grid."""
    if snap.grid is None:
        return [(k, float(v)) for k, v in enumerate(snap.field)]
    X, Y = np.meshgrid(snap.grid.x(), snap.grid.y())
    exterior = ~snap.grid.interior_mask()
    return [
        (float(x), float(y), int(e), float(v))
        for x, y, e, v in zip(X.ravel(), Y.ravel(), exterior.ravel(), snap.field.ravel())
    ]


def vertical_line(grid: GridSpec, column: int) -> List[int]:
    """Node rows of the grid column `column`, bottom to top."""
    return [j * grid.nx + column for j in range(grid.ny)]
