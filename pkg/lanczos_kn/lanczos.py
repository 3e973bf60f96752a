"""Block Lanczos iteration."""

import logging
from dataclasses import dataclass, replace
from typing import List, Optional, Tuple

import numpy as np

from .core import RANK_TOL, BlockTridiagonal, SparseSpdOperator, block_qr, symmetrize
from .errors import Breakdown, DimensionMismatch, MissingBasis, RankDeficient

logger = logging.getLogger('kn.lanczos')


@dataclass(frozen=True)
class LanczosDecomposition:
    """
    Coefficients of m block Lanczos steps.

    alphas has shape (m, p, p); betas holds beta_2..beta_m with shape
    (m-1, p, p). The residual pair (residual_q, residual_beta) is the
    QR factorization of the final W and is None when the Krylov space
    was exhausted at step m. rhs_factor is R_B from normalize_rhs.
    """

    alphas: np.ndarray
    betas: np.ndarray
    rhs_factor: np.ndarray
    basis: Optional[np.ndarray] = None
    residual_q: Optional[np.ndarray] = None
    residual_beta: Optional[np.ndarray] = None

    @property
    def m(self) -> int:
        return self.alphas.shape[0]

    @property
    def p(self) -> int:
        return self.alphas.shape[1]

    @property
    def has_tail(self) -> bool:
        return self.residual_beta is not None

    def require_basis(self) -> np.ndarray:
        if self.basis is None:
            raise MissingBasis()
        return self.basis

    def truncated(self, k: int) -> "LanczosDecomposition":
        """The decomposition after the first k steps, with beta_{k+1} taken from this run."""
        if not 1 <= k <= self.m:
            raise ValueError(f"cannot truncate {self.m} steps to {k}")
        if k == self.m:
            return self
        p = self.p
        basis = None if self.basis is None else self.basis[:, :k * p]
        residual_q = None if self.basis is None else self.basis[:, k * p:(k + 1) * p]
        return replace(
            self,
            alphas=self.alphas[:k],
            betas=self.betas[:k - 1],
            basis=basis,
            residual_q=residual_q,
            residual_beta=self.betas[k - 1],
        )


def normalize_rhs(B_raw: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Orthonormalize the right-hand side block.

    Args:
        B_raw: n x p block of full column rank

    Returns:
        Tuple (B, R_B) with B_raw = B @ R_B; transfer values for B_raw are
        R_B^T F R_B
    """
    B_raw = np.asarray(B_raw, dtype=float)
    if B_raw.ndim == 1:
        B_raw = B_raw[:, None]
    return block_qr(B_raw)


def block_lanczos(
    op: SparseSpdOperator,
    B: np.ndarray,
    m: int,
    reorth: bool = True,
    keep_basis: bool = False,
    rank_tol: float = RANK_TOL,
) -> LanczosDecomposition:
    """
    Run m steps of block Lanczos on op starting from span(B).

    B is orthonormalized internally. With reorth on, every new block is
    reorthogonalized twice (classical Gram-Schmidt) against all stored
    blocks. beta_{m+1} and Q_{m+1} come from the final W without another
    product with A.

    Raises:
        Breakdown: when the QR of W is rank deficient before step m
        DimensionMismatch: when B does not fit op or mp > n
    """
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B[:, None]
    n, p = B.shape
    if n != op.n:
        raise DimensionMismatch(f"B has {n} rows, operator dimension is {op.n}")
    if m < 1 or m * p > n:
        raise DimensionMismatch(f"need 1 <= m*p <= n, got m={m}, p={p}, n={n}")

    Q, R_B = normalize_rhs(B)
    stored: List[np.ndarray] = [Q]
    alphas: List[np.ndarray] = []
    betas: List[np.ndarray] = []

    AQ = op.apply(Q)
    scale = np.linalg.norm(AQ)
    alpha = symmetrize(Q.T @ AQ)
    W = AQ - Q @ alpha
    alphas.append(alpha)
    if reorth:
        W = _reorthogonalize(W, stored)

    for i in range(2, m + 1):
        try:
            Q_next, beta = block_qr(W, rank_tol, scale)
        except RankDeficient as e:
            raise Breakdown(i, e.smallest_sv) from e
        Q_prev, Q = Q, Q_next
        AQ = op.apply(Q)
        scale = np.linalg.norm(AQ)
        W = AQ - Q_prev @ beta.T
        alpha = symmetrize(Q.T @ W)
        W = W - Q @ alpha
        if reorth or keep_basis:
            stored.append(Q)
        if reorth:
            W = _reorthogonalize(W, stored)
        alphas.append(alpha)
        betas.append(beta)
        logger.debug(f"step {i}: |W| = {np.linalg.norm(W):.3e}, |beta| = {np.linalg.norm(beta):.3e}")

    try:
        residual_q, residual_beta = block_qr(W, rank_tol, scale)
    except RankDeficient as e:
        logger.warning(f"→ Krylov space exhausted after {m} steps; no residual block ({e})")
        residual_q = residual_beta = None

    basis = np.hstack(stored) if keep_basis else None
    logger.info(f"✓ block Lanczos: n={n}, p={p}, m={m}, reorth={'on' if reorth else 'off'}")
    return LanczosDecomposition(
        alphas=np.array(alphas),
        betas=np.array(betas).reshape(m - 1, p, p),
        rhs_factor=R_B,
        basis=basis,
        residual_q=residual_q,
        residual_beta=residual_beta,
    )


def _reorthogonalize(W: np.ndarray, stored: List[np.ndarray]) -> np.ndarray:
    V = np.hstack(stored)
    for _ in range(2):
        W = W - V @ (V.T @ W)
    return W


def assemble_tridiagonal(dec: LanczosDecomposition) -> BlockTridiagonal:
    """T_m with alpha_i on the diagonal and beta_i below it."""
    return BlockTridiagonal(dec.alphas, dec.betas)


def ritz_values(dec: LanczosDecomposition) -> np.ndarray:
    """Eigenvalues of T_m negated, sorted ascending (all negative for SPD A)."""
    return np.sort(-assemble_tridiagonal(dec).eigvalsh())
