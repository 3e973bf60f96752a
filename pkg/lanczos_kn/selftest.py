"""Built-in invariant checks on small cases, run by `lanczos-kn selftest`."""

import logging
from contextlib import nullcontext
from dataclasses import dataclass
from typing import Callable, List, Tuple
from unittest import mock

import numpy as np

from . import stieltjes
from .core import BlockTridiagonal, SparseSpdOperator, symmetrize
from .lanczos import assemble_tridiagonal, block_lanczos
from .optimizer import assemble_first_order_pencil, first_order_transfer, kn_values, precompute_smw
from .quadratures import (
    Terminator,
    gauss_eval,
    kn_delta_alpha,
    kn_eval_tridiag,
    radau_eval,
    radau_matrix,
    sfraction_eval,
    sqrt_terminator_closed,
    sqrt_terminator_truncated,
)

logger = logging.getLogger('kn.selftest')


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def _random_operator(rng: np.random.Generator, n: int) -> SparseSpdOperator:
    M = rng.standard_normal((n, n))
    return SparseSpdOperator.from_matrix(symmetrize(M @ M.T / n + np.eye(n)))


def _random_chains(seed: int = 0, count: int = 6):
    rng = np.random.default_rng(seed)
    for k in range(count):
        p = 1 + k % 3
        op = _random_operator(rng, 60)
        B = rng.standard_normal((60, p))
        dec = block_lanczos(op, B, 6)
        yield op, B, dec


def _rel(a, b) -> float:
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b)) / np.linalg.norm(np.asarray(b)))


def check_two_by_two() -> str:
    op = SparseSpdOperator.from_matrix(np.array([[2.0, 1.0], [1.0, 2.0]]))
    dec = block_lanczos(op, np.array([[1.0], [0.0]]), 2)
    T = assemble_tridiagonal(dec)
    params = stieltjes.extract_stieltjes(dec)
    expected = {
        "gamma_1": (params.gammas[0, 0, 0], 0.5),
        "gamma_2": (params.gammas[1, 0, 0], 1.0 / 6.0),
        "gamma_hat_2": (params.gamma_hats[1, 0, 0], 4.0),
        "gauss": (gauss_eval(T, 1.0).value[0, 0], 0.375),
        "dirichlet": (sfraction_eval(params, 1.0, Terminator.dirichlet()).value[0, 0], 0.375),
        "pencil": (stieltjes.solve_string(params, 1.0)[0, 0], 0.375),
        "kn_alpha_2": (T.diagonal[-1, 0, 0] + kn_delta_alpha(params, 1.0, 1.0)[0, 0], 5.0 / 7.0),
    }
    for name, (got, want) in expected.items():
        if abs(got - want) > 1e-12:
            raise AssertionError(f"{name} = {got}, expected {want}")
    return "gamma, pencil, S-fraction and KN block match the hand values"


def check_round_trip() -> str:
    worst = 0.0
    for _, _, dec in _random_chains():
        T = assemble_tridiagonal(dec)
        rebuilt = stieltjes.reconstruct_tridiagonal(stieltjes.extract_stieltjes(dec))
        worst = max(worst, np.linalg.norm(rebuilt.dense() - T.dense()) / np.linalg.norm(T.dense()))
    if worst > 1e-11:
        raise AssertionError(f"reconstruction residual {worst:.3e}")
    return f"worst relative residual {worst:.1e}"


def check_limits() -> str:
    shifts = [0.3 + 0.7j, 2.0 + 0.1j, 0.05 + 1.5j]
    worst = 0.0
    for _, _, dec in _random_chains(seed=1, count=3):
        T = assemble_tridiagonal(dec)
        params = stieltjes.extract_stieltjes(dec)
        for s in shifts:
            worst = max(worst, _rel(kn_eval_tridiag(T, params, 1e12, s).value, gauss_eval(T, s).value))
            worst = max(worst, _rel(kn_eval_tridiag(T, params, 1e-12, s).value, radau_eval(T, params, s).value))
    if worst > 1e-6:
        raise AssertionError(f"limit mismatch {worst:.3e}")
    return f"phi -> infinity gives Gauss, phi -> 0 gives Radau ({worst:.1e})"


def check_cross_forms() -> str:
    shifts = np.array([0.5 + 0.5j, 1.0 + 0.0j, 0.1 + 2.0j])
    worst = 0.0
    for _, _, dec in _random_chains(seed=2, count=3):
        T = assemble_tridiagonal(dec)
        params = stieltjes.extract_stieltjes(dec)
        cache = precompute_smw(T, shifts, params)
        batched = kn_values(cache, 0.7)
        pencil = assemble_first_order_pencil(params, 0.7)
        for k, s in enumerate(shifts):
            direct = kn_eval_tridiag(T, params, 0.7, s).value
            fraction = sfraction_eval(params, s, Terminator.impedance(0.7, params.p)).value
            first_order = first_order_transfer(pencil, s) * np.sqrt(s)
            worst = max(worst, _rel(batched[k], direct), _rel(fraction, direct), _rel(first_order, direct))
    if worst > 1e-10:
        raise AssertionError(f"KN forms disagree by {worst:.3e}")
    return f"tridiagonal, S-fraction, SMW and pencil agree ({worst:.1e})"


def check_sqrt_terminator() -> str:
    for s in (1.0, 10.0, 1.0 + 1.0j):
        closed = sqrt_terminator_closed(1.0, 1.0, s)
        truncated = sqrt_terminator_truncated(1.0, 1.0, s)
        if abs(closed - truncated) > 1e-8:
            raise AssertionError(f"s={s}: closed {closed} vs truncated {truncated}")
    if abs(sqrt_terminator_closed(1.0, 1.0, 1.0) - np.sqrt(5.0) / 2.0) > 1e-14:
        raise AssertionError("closed form at s=1 is not sqrt(5)/2")
    return "closed form matches depth-2000 fraction"


def check_radau_null() -> str:
    worst = 0.0
    for _, _, dec in _random_chains(seed=3, count=3):
        T = assemble_tridiagonal(dec)
        params = stieltjes.extract_stieltjes(dec)
        lam = np.sort(np.abs(radau_matrix(T, params).eigvalsh()))
        worst = max(worst, lam[params.p - 1] / np.linalg.norm(T.dense(), 2))
    if worst > 1e-10:
        raise AssertionError(f"Radau null eigenvalue {worst:.3e}")
    return f"p null eigenvalues ({worst:.1e})"


def check_moments() -> str:
    rng = np.random.default_rng(4)
    op = _random_operator(rng, 40)
    A = op.dense()
    B = rng.standard_normal((40, 1))
    m = 4
    dec = block_lanczos(op, B, m)
    Td = assemble_tridiagonal(dec).dense()
    Bn = B @ np.linalg.inv(dec.rhs_factor)
    E1 = np.zeros((Td.shape[0], 1))
    E1[0, 0] = 1.0
    worst = 0.0
    for i in range(2 * m):
        lhs = E1.T @ np.linalg.matrix_power(Td, i) @ E1
        rhs = Bn.T @ np.linalg.matrix_power(A, i) @ Bn
        worst = max(worst, _rel(lhs, rhs))
    if worst > 1e-8:
        raise AssertionError(f"moment mismatch {worst:.3e}")
    return f"moments 0..{2 * m - 1} matched ({worst:.1e})"


CHECKS: List[Tuple[str, Callable[[], str]]] = [
    ("two_by_two", check_two_by_two),
    ("round_trip", check_round_trip),
    ("limits", check_limits),
    ("cross_forms", check_cross_forms),
    ("sqrt_terminator", check_sqrt_terminator),
    ("radau_null", check_radau_null),
    ("moments", check_moments),
]


def run_selftest(inject_fault: bool = False) -> List[CheckResult]:
    """
    Run every built-in check.

    Args:
        inject_fault: Flip the kappa-hat sign of the extraction; the suite must then fail

    Returns:
        One CheckResult per check
    """
    results = []
    patch = mock.patch.object(stieltjes, "_KAPPA_SIGN", 1.0) if inject_fault else nullcontext()
    with patch:
        for name, check in CHECKS:
            try:
                detail = check()
                results.append(CheckResult(name, True, detail))
                logger.info(f"  ✓ {name}: {detail}")
            except Exception as e:
                results.append(CheckResult(name, False, f"{type(e).__name__}: {e}"))
                logger.error(f"  ✗ {name}: {type(e).__name__}: {e}")
    passed = sum(1 for r in results if r.passed)
    logger.info(f"selftest: {passed}/{len(results)} checks passed")
    return results
