"""Stieltjes string parameters from the block LDL^T factorization of T_m."""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from .core import BlockTridiagonal, Shift, check_spd, small_inverse, symmetrize
from .errors import MissingTail, SingularGamma, SingularStep
from .lanczos import LanczosDecomposition

logger = logging.getLogger('kn.stieltjes')

# Sign of the kappa-hat recursion; selftest flips it to check that faults are caught
_KAPPA_SIGN = -1.0
_GAMMA_RATIO = 1e-12


@dataclass(frozen=True)
class StieltjesParams:
    """
    Masses gamma_hat_i, lengths gamma_i and scalings kappa_hat_i of a block string.

    All lists are stored as (m, p, p) arrays. gamma_invs caches gamma_i^{-1},
    which is what the recursions produce. The optional tail holds
    kappa_hat_{m+1} and gamma_hat_{m+1}.
    """

    gammas: np.ndarray
    gamma_invs: np.ndarray
    gamma_hats: np.ndarray
    kappa_hats: np.ndarray
    kappa_hat_invs: np.ndarray
    tail_kappa_hat: Optional[np.ndarray] = None
    tail_kappa_hat_inv: Optional[np.ndarray] = None
    tail_gamma_hat: Optional[np.ndarray] = None

    @property
    def m(self) -> int:
        return self.gammas.shape[0]

    @property
    def p(self) -> int:
        return self.gammas.shape[1]

    @property
    def has_tail(self) -> bool:
        return self.tail_kappa_hat is not None

    def require_tail(self) -> Tuple[np.ndarray, np.ndarray]:
        if not self.has_tail:
            raise MissingTail()
        return self.tail_kappa_hat, self.tail_kappa_hat_inv

    @classmethod
    def from_string(
        cls, gammas: Sequence[np.ndarray], gamma_hats: Sequence[np.ndarray]
    ) -> "StieltjesParams":
        """
        Build parameters for an arbitrary SPD string.

        gamma_hats[0] must be the identity. Each kappa_hat_i is the upper
        Cholesky factor of gamma_hat_i, so that gamma_hat_i = kappa_hat_i^T kappa_hat_i.
        """
        gammas = np.array([check_spd(g, f"gamma_{i + 1}") for i, g in enumerate(gammas)])
        gamma_hats = np.array([check_spd(g, f"gamma_hat_{i + 1}") for i, g in enumerate(gamma_hats)])
        p = gammas.shape[1]
        if not np.allclose(gamma_hats[0], np.eye(p), rtol=0.0, atol=1e-14):
            raise ValueError("gamma_hat_1 must be the identity")
        kappa_hats = np.array([np.linalg.cholesky(g).T for g in gamma_hats])
        return cls(
            gammas=gammas,
            gamma_invs=np.array([symmetrize(np.linalg.inv(g)) for g in gammas]),
            gamma_hats=gamma_hats,
            kappa_hats=kappa_hats,
            kappa_hat_invs=np.array([np.linalg.inv(k) for k in kappa_hats]),
        )


def _check_gamma_inv(gamma_inv: np.ndarray, index: int) -> None:
    lam = np.linalg.eigvalsh(gamma_inv)
    if lam[0] <= _GAMMA_RATIO * abs(lam[-1]):
        raise SingularGamma(index, float(lam[0]), float(lam[-1]))


def _next_kappa_inv(gamma_prev: np.ndarray, kappa_prev: np.ndarray, beta: np.ndarray) -> np.ndarray:
    return _KAPPA_SIGN * gamma_prev @ kappa_prev.T @ beta.T


def extract_stieltjes(dec: LanczosDecomposition, with_tail: bool = False) -> StieltjesParams:
    """
    Block LDL^T of T_m written as string parameters.

    kappa_hat_1 = I, gamma_1^{-1} = alpha_1, and for i = 2..m
    kappa_hat_i^{-1} = -gamma_{i-1} kappa_hat_{i-1}^T beta_i^T,
    gamma_i^{-1} = kappa_hat_i^T alpha_i kappa_hat_i - gamma_{i-1}^{-1}.

    Raises:
        SingularGamma: gamma_i^{-1} is indefinite or numerically singular
        MissingTail: with_tail requested but the decomposition has no beta_{m+1}
    """
    m, p = dec.m, dec.p
    if with_tail and not dec.has_tail:
        raise MissingTail()

    kappa = np.eye(p)
    kappa_inv = np.eye(p)
    gamma_inv = symmetrize(dec.alphas[0])
    _check_gamma_inv(gamma_inv, 1)
    gamma = symmetrize(small_inverse(gamma_inv, 1))

    gammas, gamma_invs = [gamma], [gamma_inv]
    kappas, kappa_invs = [kappa], [kappa_inv]
    for i in range(2, m + 1):
        kappa_inv = _next_kappa_inv(gamma, kappa, dec.betas[i - 2])
        kappa = small_inverse(kappa_inv, i)
        gamma_inv = symmetrize(kappa.T @ dec.alphas[i - 1] @ kappa - gamma_invs[-1])
        _check_gamma_inv(gamma_inv, i)
        gamma = symmetrize(small_inverse(gamma_inv, i))
        gammas.append(gamma)
        gamma_invs.append(gamma_inv)
        kappas.append(kappa)
        kappa_invs.append(kappa_inv)
        logger.debug(f"gamma_{i}^-1 eigenvalues {np.linalg.eigvalsh(gamma_inv)}")

    tail_kappa = tail_kappa_inv = tail_gamma_hat = None
    if with_tail:
        tail_kappa_inv = _next_kappa_inv(gamma, kappa, dec.residual_beta)
        tail_kappa = small_inverse(tail_kappa_inv, m + 1)
        tail_gamma_hat = symmetrize(tail_kappa.T @ tail_kappa)

    kappas = np.array(kappas)
    return StieltjesParams(
        gammas=np.array(gammas),
        gamma_invs=np.array(gamma_invs),
        gamma_hats=np.array([symmetrize(k.T @ k) for k in kappas]),
        kappa_hats=kappas,
        kappa_hat_invs=np.array(kappa_invs),
        tail_kappa_hat=tail_kappa,
        tail_kappa_hat_inv=tail_kappa_inv,
        tail_gamma_hat=tail_gamma_hat,
    )


def reconstruct_tridiagonal(params: StieltjesParams) -> BlockTridiagonal:
    """K^{-T} J Gamma^{-1} J^T K^{-1} assembled block by block."""
    m, p = params.m, params.p
    Ki = params.kappa_hat_invs
    Gi = params.gamma_invs
    diagonal = np.empty((m, p, p))
    lower = np.empty((m - 1, p, p))
    diagonal[0] = Gi[0]
    for i in range(1, m):
        diagonal[i] = symmetrize(Ki[i].T @ (Gi[i - 1] + Gi[i]) @ Ki[i])
        lower[i - 1] = -Ki[i].T @ Gi[i - 1] @ Ki[i - 1]
    return BlockTridiagonal(diagonal, lower)


def assemble_pencil(params: StieltjesParams) -> Tuple[np.ndarray, np.ndarray]:
    """
    Pencil (Z_m, Gamma_hat_m) with Z_m = J Gamma^{-1} J^T.

    E_1^T (Z_m + s Gamma_hat_m)^{-1} E_1 equals the Gauss value at s.
    """
    J = bidiagonal_j(params.m, params.p)
    Z = J @ scipy.linalg.block_diag(*params.gamma_invs) @ J.T
    return Z, scipy.linalg.block_diag(*params.gamma_hats)


def bidiagonal_j(m: int, p: int) -> np.ndarray:
    """J_m, whose transpose has I on the block diagonal and -I above it."""
    J = np.eye(m * p)
    if m > 1:
        J -= np.eye(m * p, k=-p)
    return J


def solve_string(params: StieltjesParams, s: Shift, terminal_gamma_inv: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Solve the string equations (Z + s Gamma_hat) U = E_1.

    Args:
        params: String parameters
        s: Shift
        terminal_gamma_inv: Replacement for gamma_m^{-1} in the last block,
            encoding the terminator (None keeps the Dirichlet end U_{m+1} = 0)

    Returns:
        The mp x p solution; its first block is the transfer value
    """
    Z, Gamma_hat = assemble_pencil(params)
    Z = Z.astype(np.result_type(Z, s, terminal_gamma_inv if terminal_gamma_inv is not None else 0.0))
    if terminal_gamma_inv is not None:
        p = params.p
        Z[-p:, -p:] += terminal_gamma_inv - params.gamma_invs[-1]
    E1 = np.zeros((Z.shape[0], params.p))
    E1[:params.p] = np.eye(params.p)
    try:
        return np.linalg.solve(Z + s * Gamma_hat, E1)
    except np.linalg.LinAlgError as e:
        raise SingularStep(params.m) from e
