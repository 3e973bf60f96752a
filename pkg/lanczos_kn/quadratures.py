"""Transfer-function approximants: Gauss, Gauss-Radau, averaged, Krein-Nudelman and the square-root terminator."""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np
import scipy.linalg

from .core import BlockTridiagonal, Shift, as_phi, principal_sqrt, small_inverse, symmetrize
from .errors import DimensionMismatch, MissingTail, SingularStep
from .lanczos import LanczosDecomposition
from .stieltjes import StieltjesParams

logger = logging.getLogger('kn.quadratures')


class Variant(str, Enum):
    GAUSS = "gauss"
    RADAU = "radau"
    AVERAGE = "average"
    KN = "kn"
    EXTENDED_KN = "extended_kn"
    REFERENCE = "reference"


class TerminatorKind(str, Enum):
    DIRICHLET = "dirichlet"
    NEUMANN = "neumann"
    IMPEDANCE = "impedance"


@dataclass(frozen=True)
class Terminator:
    """Tail condition of the string: C_{m+1} = 0, infinity, or (phi sqrt(s))^{-1}."""

    kind: TerminatorKind
    phi: Optional[np.ndarray] = None

    @classmethod
    def dirichlet(cls) -> "Terminator":
        return cls(TerminatorKind.DIRICHLET)

    @classmethod
    def neumann(cls) -> "Terminator":
        return cls(TerminatorKind.NEUMANN)

    @classmethod
    def impedance(cls, phi, p: int = 1) -> "Terminator":
        return cls(TerminatorKind.IMPEDANCE, as_phi(phi, p))


@dataclass(frozen=True)
class TransferSample:
    """p x p value of one approximant at one shift."""

    s: Shift
    value: np.ndarray
    variant: Variant
    phi: Optional[np.ndarray] = None
    xi: Optional[np.ndarray] = None

    def raw(self, rhs_factor: np.ndarray) -> np.ndarray:
        """Value for the un-normalized right-hand side B_raw = B R_B."""
        return rhs_factor.T @ self.value @ rhs_factor


def gauss_eval(T: BlockTridiagonal, s: Shift) -> TransferSample:
    """Block Gauss quadrature E_1^T (T_m + sI)^{-1} E_1."""
    return TransferSample(s, T.first_block_resolvent(s), Variant.GAUSS)


def sfraction_eval(params: StieltjesParams, s: Shift, term: Terminator) -> TransferSample:
    """
    Evaluate the matrix Stieltjes continued fraction by backward recursion.

    C_i = (s gamma_hat_i + (gamma_i + C_{i+1})^{-1})^{-1}, returning C_1.
    The Neumann tail drops the (gamma_m + C_{m+1})^{-1} term.
    """
    m, p = params.m, params.p
    if term.kind is TerminatorKind.IMPEDANCE:
        if term.phi.shape != (p, p):
            raise DimensionMismatch(f"phi must be {p}x{p}")
        tail = small_inverse(term.phi * principal_sqrt(s), m + 1)
    else:
        tail = np.zeros((p, p))

    C = tail
    for i in range(m, 0, -1):
        if i == m and term.kind is TerminatorKind.NEUMANN:
            inner = np.zeros((p, p))
        else:
            inner = small_inverse(params.gammas[i - 1] + C, i)
        C = small_inverse(s * params.gamma_hats[i - 1] + inner, i)

    if term.kind is TerminatorKind.DIRICHLET:
        variant = Variant.GAUSS
    elif term.kind is TerminatorKind.NEUMANN:
        variant = Variant.RADAU
    else:
        variant = Variant.KN
    return TransferSample(s, C, variant, phi=term.phi)


def kn_delta_alpha(params: StieltjesParams, phi, s: Shift, second_sheet: bool = False) -> np.ndarray:
    """
    Rank-p, s-dependent correction of the last diagonal block.

    -kappa_hat_m^{-T} gamma_m^{-1} (gamma_m^{-1} + sqrt(s) phi)^{-1} gamma_m^{-1} kappa_hat_m^{-1}
    """
    p = params.p
    phi = as_phi(phi, p)
    root = principal_sqrt(s)
    if second_sheet:
        root = -root
    Gi = params.gamma_invs[-1]
    Ki = params.kappa_hat_invs[-1]
    inner = small_inverse(Gi + root * phi, params.m)
    return -Ki.T @ Gi @ inner @ Gi @ Ki


def radau_delta_alpha(params: StieltjesParams) -> np.ndarray:
    """The phi -> 0 limit: -kappa_hat_m^{-T} gamma_m^{-1} kappa_hat_m^{-1}."""
    Ki = params.kappa_hat_invs[-1]
    return -symmetrize(Ki.T @ params.gamma_invs[-1] @ Ki)


def kn_matrix(T: BlockTridiagonal, params: StieltjesParams, phi, s: Shift, second_sheet: bool = False) -> BlockTridiagonal:
    """T_m with its last diagonal block replaced by the KN block at shift s."""
    return T.with_last_diagonal(T.diagonal[-1] + kn_delta_alpha(params, phi, s, second_sheet))


def radau_matrix(T: BlockTridiagonal, params: StieltjesParams) -> BlockTridiagonal:
    return T.with_last_diagonal(T.diagonal[-1] + radau_delta_alpha(params))


def kn_eval_tridiag(
    T: BlockTridiagonal,
    params: StieltjesParams,
    phi,
    s: Shift,
    second_sheet: bool = False,
) -> TransferSample:
    """
    Krein-Nudelman approximant via the modified tridiagonal matrix.

    Args:
        T: T_m from the Lanczos run
        params: String parameters of T_m
        phi: Positive scalar or p x p SPD damper
        s: Shift
        second_sheet: Evaluate with -sqrt(s) instead of the principal root

    Returns:
        TransferSample with variant KN
    """
    phi = as_phi(phi, params.p)
    value = kn_matrix(T, params, phi, s, second_sheet).first_block_resolvent(s)
    return TransferSample(s, value, Variant.KN, phi=phi)


def radau_eval(T: BlockTridiagonal, params: StieltjesParams, s: Shift) -> TransferSample:
    """Gauss-Radau quadrature from the explicit Neumann modification of the last block."""
    return TransferSample(s, radau_matrix(T, params).first_block_resolvent(s), Variant.RADAU)


def averaged_eval(T: BlockTridiagonal, params: StieltjesParams, s: Shift) -> TransferSample:
    value = 0.5 * (gauss_eval(T, s).value + radau_eval(T, params, s).value)
    return TransferSample(s, value, Variant.AVERAGE)


def extended_alpha(params: StieltjesParams, phi, xi, s: Shift) -> np.ndarray:
    """
    Last diagonal block of the extended string.

    kappa_hat_{m+1}^{-T} [gamma_m^{-1} + xi^{-1} - xi^{-1}(xi^{-1} + sqrt(s) phi)^{-1} xi^{-1}] kappa_hat_{m+1}^{-1}
    """
    p = params.p
    phi = as_phi(phi, p)
    xi = as_phi(xi, p, "xi")
    _, Ki = params.require_tail()
    xi_inv = symmetrize(np.linalg.inv(xi))
    inner = small_inverse(xi_inv + principal_sqrt(s) * phi, params.m + 1)
    middle = params.gamma_invs[-1] + xi_inv - xi_inv @ inner @ xi_inv
    return Ki.T @ middle @ Ki


def extended_kn_eval(
    dec: LanczosDecomposition,
    params: StieltjesParams,
    phi,
    xi,
    s: Shift,
) -> TransferSample:
    """
    Extended KN approximant on the (m+1)p-dimensional matrix.

    The extra block row uses beta_{m+1} from the Lanczos tail; xi plays the
    role of the unknown length gamma_{m+1}.
    """
    phi = as_phi(phi, params.p)
    xi = as_phi(xi, params.p, "xi")
    T = BlockTridiagonal(dec.alphas, dec.betas)
    if dec.residual_beta is None:
        raise MissingTail()
    T_ext = T.extended(dec.residual_beta, extended_alpha(params, phi, xi, s))
    return TransferSample(s, T_ext.first_block_resolvent(s), Variant.EXTENDED_KN, phi=phi, xi=xi)


def sqrt_terminator_closed(gamma: float, gamma_hat: float, s: Shift) -> Shift:
    """Closed form (gamma / 2s) sqrt(s (s + 4 / (gamma gamma_hat))) of the constant string."""
    return gamma / (2.0 * s) * principal_sqrt(s * (s + 4.0 / (gamma * gamma_hat)))


def sqrt_terminator_truncated(gamma: float, gamma_hat: float, s: Shift, depth: int = 2000) -> Shift:
    """gamma/2 + 1/(s gamma_hat + 1/(gamma + ...)) truncated after `depth` levels."""
    tail = 0.0
    for _ in range(depth):
        tail = 1.0 / (s * gamma_hat + 1.0 / (gamma + tail))
    return gamma / 2.0 + tail


def kn_poles(T: BlockTridiagonal, params: StieltjesParams, phi: float, sheet: int = 1) -> np.ndarray:
    """
    Poles of the scalar KN approximant on one sheet of sqrt(s).

    With z = sqrt(s) the KN matrix pencil becomes the cubic matrix polynomial
    phi z^3 + g z^2 + phi T z + (g T - k^2 g^2 E_m E_m^T), g = gamma_m^{-1},
    k = kappa_hat_m^{-1}. Its roots are found by companion linearization;
    sheet 1 keeps Re z >= 0, sheet 2 keeps Re z < 0. Returns the s = z^2 values.
    """
    if params.p != 1:
        raise DimensionMismatch("pole diagnostics are implemented for p = 1")
    if phi <= 0:
        raise ValueError("phi must be positive")
    n = T.size
    Td = T.dense()
    g = float(params.gamma_invs[-1][0, 0])
    k = float(params.kappa_hat_invs[-1][0, 0])
    I = np.eye(n)
    Em = np.zeros((n, n))
    Em[-1, -1] = 1.0
    A0 = g * Td - (k * g) ** 2 * Em
    A1 = phi * Td
    A2 = g * I
    A3 = phi * I

    Z = np.zeros((n, n))
    companion_a = np.block([[Z, I, Z], [Z, Z, I], [-A0, -A1, -A2]])
    companion_b = np.block([[I, Z, Z], [Z, I, Z], [Z, Z, A3]])
    roots = scipy.linalg.eigvals(companion_a, companion_b)
    roots = roots[np.isfinite(roots)]
    keep = roots.real >= 0 if sheet == 1 else roots.real < 0
    poles = roots[keep] ** 2
    if not np.all(np.isfinite(poles)):
        raise SingularStep(params.m)
    return np.sort_complex(poles)
