import numpy as np
import pytest

from lanczos_kn.core import SparseSpdOperator
from lanczos_kn.errors import Breakdown, DimensionMismatch, MissingBasis, RankDeficient
from lanczos_kn.lanczos import (
    assemble_tridiagonal,
    block_lanczos,
    normalize_rhs,
    ritz_values,
)

from .conftest import random_chain


def test_two_by_two_coefficients(t2_dec):
    assert t2_dec.alphas[:, 0, 0] == pytest.approx([2.0, 2.0], abs=1e-14)
    assert t2_dec.betas[0, 0, 0] == pytest.approx(1.0, abs=1e-14)
    assert not t2_dec.has_tail


def test_two_by_two_tridiagonal(t2):
    assert np.allclose(t2.dense(), [[2.0, 1.0], [1.0, 2.0]], atol=1e-14)


def test_diagonal_operator_against_hand_values():
    op = SparseSpdOperator.from_matrix(np.diag([1.0, 2.0, 3.0, 4.0]))
    dec = block_lanczos(op, 0.5 * np.ones((4, 1)), 2)
    assert dec.alphas[0, 0, 0] == pytest.approx(2.5, abs=1e-14)
    assert dec.alphas[1, 0, 0] == pytest.approx(2.5, abs=1e-14)
    assert dec.betas[0, 0, 0] == pytest.approx(np.sqrt(5.0) / 2.0, abs=1e-14)


def test_breakdown_on_invariant_start():
    op = SparseSpdOperator.from_matrix(np.eye(3))
    with pytest.raises(Breakdown) as info:
        block_lanczos(op, np.array([1.0, 0.0, 0.0]), 2)
    assert info.value.step == 2


def test_dimension_checks(t2_operator):
    with pytest.raises(DimensionMismatch):
        block_lanczos(t2_operator, np.ones((3, 1)), 1)
    with pytest.raises(DimensionMismatch):
        block_lanczos(t2_operator, np.eye(2), 2)


def test_normalize_rhs_scaling():
    B, R = normalize_rhs(np.array([[2.0], [0.0], [0.0]]))
    assert np.allclose(B[:, 0], [1.0, 0.0, 0.0])
    assert R[0, 0] == pytest.approx(2.0)
    B, R = normalize_rhs(np.eye(3)[:, :2])
    assert np.allclose(R, np.eye(2))


def test_normalize_rhs_coincident_columns():
    e = np.zeros(5)
    e[2] = 1.0
    with pytest.raises(RankDeficient):
        normalize_rhs(np.column_stack([e, e]))


@pytest.mark.parametrize("p", [1, 2, 3])
def test_orthogonality_and_lanczos_relation(p):
    op, B, dec = random_chain(11 + p, 80, p, 6, keep_basis=True)
    Q = dec.require_basis()
    T = assemble_tridiagonal(dec)
    assert np.linalg.norm(Q.T @ Q - np.eye(6 * p)) <= 1e-10
    E_m = T.unit_blocks(6)
    residual = op.apply(Q) - Q @ T.dense() - dec.residual_q @ dec.residual_beta @ E_m.T
    assert np.linalg.norm(residual) <= 1e-10 * op.norm1()
    assert np.allclose(Q[:, :p] @ dec.rhs_factor, B, atol=1e-12)


def test_basis_requires_keep_basis():
    _, _, dec = random_chain(3, 30, 1, 3)
    with pytest.raises(MissingBasis):
        dec.require_basis()


def test_moment_matching():
    op, B, dec = random_chain(21, 60, 1, 5)
    A = op.dense()
    Bn = B @ np.linalg.inv(dec.rhs_factor)
    Td = assemble_tridiagonal(dec).dense()
    norm = np.linalg.norm(A, 2)
    for i in range(2 * dec.m):
        lhs = np.linalg.matrix_power(Td, i)[0, 0]
        rhs = (Bn.T @ np.linalg.matrix_power(A, i) @ Bn)[0, 0]
        assert abs(lhs - rhs) <= 1e-8 * norm ** i


def test_truncated_matches_shorter_run():
    op, B, dec = random_chain(5, 50, 2, 6)
    short = block_lanczos(op, B, 4)
    cut = dec.truncated(4)
    assert cut.m == 4
    assert np.allclose(cut.alphas, short.alphas, atol=1e-12)
    assert np.allclose(cut.betas, short.betas, atol=1e-12)
    assert np.allclose(cut.residual_beta, short.residual_beta, atol=1e-12)
    with pytest.raises(ValueError):
        dec.truncated(7)


def test_leading_blocks_stable_in_m():
    op, B, dec = random_chain(6, 50, 1, 5)
    longer = block_lanczos(op, B, 6)
    assert np.allclose(longer.alphas[:5], dec.alphas, atol=1e-12)


def test_ritz_values_interlace():
    op, _, dec = random_chain(8, 40, 2, 4)
    ritz = ritz_values(dec)
    assert np.all(ritz < 0)
    assert np.all(np.diff(ritz) >= 0)
    lam = np.linalg.eigvalsh(op.dense())
    assert -ritz.max() >= lam[0] - 1e-10
    assert -ritz.min() <= lam[-1] + 1e-10


def test_without_reorthogonalization_coefficients_close():
    op, B, dec = random_chain(9, 60, 1, 4)
    plain = block_lanczos(op, B, 4, reorth=False)
    assert np.allclose(plain.alphas, dec.alphas, atol=1e-8)
