"""Small dense kernels, block tridiagonal solves and the sparse SPD operator."""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from .errors import (
    DimensionMismatch,
    NonHermitian,
    NotSpd,
    RankDeficient,
    ShiftOnSpectrum,
    SingularStep,
)

logger = logging.getLogger('kn.core')

# Relative threshold on singular values for breakdown detection
RANK_TOL = 1e-10
SYMMETRY_TOL = 1e-12
# p x p blocks with a larger condition number count as singular
SINGULAR_COND = 1e14

Shift = Union[float, complex]


def principal_sqrt(s: Shift) -> Shift:
    """Principal square root: Re sqrt(s) >= 0, branch cut on the negative real axis."""
    if np.isrealobj(s) and s >= 0:
        return float(np.sqrt(s))
    return complex(np.sqrt(complex(s)))


def as_shift(value) -> Shift:
    """Accept a number or an [re, im] pair and return a real or complex shift."""
    if isinstance(value, (list, tuple)):
        if len(value) != 2:
            raise ValueError(f"shift pairs must be [re, im], got {value!r}")
        re, im = float(value[0]), float(value[1])
        return re if im == 0.0 else complex(re, im)
    if isinstance(value, complex) and value.imag == 0.0:
        return value.real
    return value


def relative_asymmetry(M: np.ndarray, hermitian: bool = True) -> float:
    other = M.conj().T if hermitian else M.T
    scale = np.linalg.norm(M)
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(M - other) / scale)


def symmetrize(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.T)


def check_hermitian(M: np.ndarray, tol: float = SYMMETRY_TOL) -> np.ndarray:
    """Return the Hermitian part of M after checking that M is Hermitian to `tol`."""
    asym = relative_asymmetry(M)
    if asym > tol:
        raise NonHermitian(asym)
    return 0.5 * (M + M.conj().T)


def check_spd(M: np.ndarray, name: str = "matrix", tol: float = SYMMETRY_TOL) -> np.ndarray:
    """Validate that M is symmetric positive definite and return its symmetric part."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[0] != M.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got shape {M.shape}")
    asym = relative_asymmetry(M)
    if asym > tol:
        raise NotSpd(name, float("nan"))
    M = symmetrize(M)
    min_eig = float(np.linalg.eigvalsh(M)[0])
    if min_eig <= 0.0:
        raise NotSpd(name, min_eig)
    return M


def as_phi(phi, p: int, name: str = "phi") -> np.ndarray:
    """Turn a positive scalar or an SPD matrix into a p x p SPD matrix."""
    if np.isscalar(phi):
        if not phi > 0:
            raise NotSpd(name, float(phi))
        return float(phi) * np.eye(p)
    M = check_spd(phi, name)
    if M.shape != (p, p):
        raise DimensionMismatch(f"{name} must be {p}x{p}, got {M.shape}")
    return M


def block_qr(
    W: np.ndarray,
    rank_tol: float = RANK_TOL,
    scale: Optional[float] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Householder QR of an n x p block with a positive diagonal in R.

    Args:
        W: Block to factor
        rank_tol: Relative threshold on the smallest singular value
        scale: Optional reference norm; the block also counts as rank
            deficient when its smallest singular value is below
            rank_tol * scale (detects exhausted Krylov spaces)

    Returns:
        Tuple (Q, R) with Q orthonormal and R upper triangular
    """
    W = np.asarray(W)
    if W.ndim == 1:
        W = W[:, None]
    n, p = W.shape
    if p > n:
        raise DimensionMismatch(f"block width {p} exceeds row count {n}")

    Q, R = np.linalg.qr(W, mode='reduced')
    sv = np.linalg.svd(R, compute_uv=False)
    reference = max(float(sv[0]), float(scale or 0.0))
    if reference == 0.0 or sv[-1] <= rank_tol * reference:
        raise RankDeficient(float(sv[-1]), float(sv[0]))

    d = np.diag(R)
    phase = d / np.abs(d)
    Q = Q * phase[None, :]
    R = np.conj(phase)[:, None] * R
    return Q, np.triu(R)


def loewner_gap(G1: np.ndarray, G2: np.ndarray) -> float:
    """Smallest eigenvalue of G2 - G1; G1 <= G2 in Loewner order iff it is >= 0."""
    G1 = check_hermitian(np.atleast_2d(np.asarray(G1)))
    G2 = check_hermitian(np.atleast_2d(np.asarray(G2)))
    return float(np.linalg.eigvalsh(G2 - G1)[0])


def small_inverse(M: np.ndarray, index: int = 0) -> np.ndarray:
    """Dense LU inverse of a p x p block, raising SingularStep when ill conditioned."""
    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > SINGULAR_COND:
        raise SingularStep(index)
    return np.linalg.inv(M)


@dataclass(frozen=True)
class BlockTridiagonal:
    """
    Symmetric block tridiagonal matrix with m diagonal blocks of size p.

    `lower[k]` is the block at position (k+1, k); the block at (k, k+1)
    is its transpose. Diagonal blocks may be complex (s-dependent
    terminators), in which case the matrix is complex symmetric.
    """

    diagonal: np.ndarray
    lower: np.ndarray

    def __post_init__(self):
        m, p, q = self.diagonal.shape
        if p != q:
            raise DimensionMismatch(f"diagonal blocks must be square, got {p}x{q}")
        if self.lower.shape != (max(m - 1, 0), p, p):
            raise DimensionMismatch(
                f"expected {m - 1} off-diagonal blocks of size {p}x{p}, got {self.lower.shape}"
            )

    @property
    def m(self) -> int:
        return self.diagonal.shape[0]

    @property
    def p(self) -> int:
        return self.diagonal.shape[1]

    @property
    def size(self) -> int:
        return self.m * self.p

    @classmethod
    def from_dense(cls, M: np.ndarray, p: int) -> "BlockTridiagonal":
        M = np.atleast_2d(np.asarray(M))
        m = M.shape[0] // p
        diagonal = np.stack([M[k * p:(k + 1) * p, k * p:(k + 1) * p] for k in range(m)])
        lower = np.stack(
            [M[(k + 1) * p:(k + 2) * p, k * p:(k + 1) * p] for k in range(m - 1)]
        ) if m > 1 else np.zeros((0, p, p), dtype=M.dtype)
        return cls(diagonal, lower)

    def dense(self) -> np.ndarray:
        m, p = self.m, self.p
        dtype = np.result_type(self.diagonal, self.lower)
        M = np.zeros((m * p, m * p), dtype=dtype)
        for k in range(m):
            M[k * p:(k + 1) * p, k * p:(k + 1) * p] = self.diagonal[k]
        for k in range(m - 1):
            M[(k + 1) * p:(k + 2) * p, k * p:(k + 1) * p] = self.lower[k]
            M[k * p:(k + 1) * p, (k + 1) * p:(k + 2) * p] = self.lower[k].T
        return M

    def with_last_diagonal(self, block: np.ndarray) -> "BlockTridiagonal":
        diagonal = self.diagonal.astype(np.result_type(self.diagonal, block), copy=True)
        diagonal[-1] = block
        return BlockTridiagonal(diagonal, self.lower)

    def extended(self, lower_block: np.ndarray, diagonal_block: np.ndarray) -> "BlockTridiagonal":
        """Append one block row and column."""
        dtype = np.result_type(self.diagonal, diagonal_block)
        diagonal = np.concatenate([self.diagonal.astype(dtype), diagonal_block[None].astype(dtype)])
        lower = np.concatenate([self.lower, lower_block[None]])
        return BlockTridiagonal(diagonal, lower)

    def eigvalsh(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.dense())

    def _banded(self, s: Shift) -> Tuple[int, np.ndarray]:
        m, p = self.m, self.p
        u = 2 * p - 1
        dtype = np.result_type(self.diagonal, self.lower, s)
        ab = np.zeros((2 * u + 1, m * p), dtype=dtype)
        r, c = np.meshgrid(np.arange(p), np.arange(p), indexing='ij')
        k = np.arange(m)[:, None, None]
        i, j = k * p + r, k * p + c
        ab[u + i - j, j] = self.diagonal
        if m > 1:
            k = np.arange(m - 1)[:, None, None]
            i, j = (k + 1) * p + r, k * p + c
            ab[u + i - j, j] = self.lower
            i, j = k * p + r, (k + 1) * p + c
            ab[u + i - j, j] = np.transpose(self.lower, (0, 2, 1))
        ab[u, :] += s
        return u, ab

    def solve(self, rhs: np.ndarray, s: Shift = 0.0) -> np.ndarray:
        """Solve (T + sI) X = rhs by banded LU with partial pivoting."""
        u, ab = self._banded(s)
        rhs = np.asarray(rhs, dtype=np.result_type(ab, rhs))
        try:
            X = scipy.linalg.solve_banded((u, u), ab, rhs, check_finite=False)
        except np.linalg.LinAlgError as e:
            raise ShiftOnSpectrum(s) from e
        if not np.all(np.isfinite(X)):
            raise ShiftOnSpectrum(s)
        return X

    def unit_blocks(self, *indices: int) -> np.ndarray:
        """Columns [E_i, E_j, ...] for the given 1-based block indices."""
        E = np.zeros((self.size, self.p * len(indices)))
        for slot, index in enumerate(indices):
            rows = slice((index - 1) * self.p, index * self.p)
            E[rows, slot * self.p:(slot + 1) * self.p] = np.eye(self.p)
        return E

    def first_block_resolvent(self, s: Shift) -> np.ndarray:
        """E_1^T (T + sI)^{-1} E_1."""
        X = self.solve(self.unit_blocks(1), s)
        return X[:self.p]


@dataclass(frozen=True)
class SparseSpdOperator:
    """Symmetric sparse operator in CSR form acting on n x p blocks."""

    matrix: scipy.sparse.csr_matrix

    def __post_init__(self):
        A = self.matrix
        if A.shape[0] != A.shape[1]:
            raise DimensionMismatch(f"operator must be square, got {A.shape}")
        scale = abs(A).max() if A.nnz else 0.0
        asym = abs(A - A.T).max() if A.nnz else 0.0
        if asym > 1e-14 * scale:
            raise NonHermitian(float(asym / scale))

    @classmethod
    def from_matrix(cls, M) -> "SparseSpdOperator":
        return cls(scipy.sparse.csr_matrix(M))

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    def apply(self, X: np.ndarray) -> np.ndarray:
        if X.shape[0] != self.n:
            raise DimensionMismatch(f"block has {X.shape[0]} rows, operator dimension is {self.n}")
        return self.matrix @ X

    def norm1(self) -> float:
        return float(scipy.sparse.linalg.norm(self.matrix, 1))

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()
