"""Shared fixtures: the 2x2 example, random SPD operators and a small diffusion problem."""

import numpy as np
import pytest

from lanczos_kn.core import SparseSpdOperator, symmetrize
from lanczos_kn.lanczos import assemble_tridiagonal, block_lanczos
from lanczos_kn.problems import ProblemDefinition, SigmaSpec, Inclusion, build_problem
from lanczos_kn.stieltjes import extract_stieltjes


def random_spd(rng: np.random.Generator, n: int, low: float = 1.0, high: float = 4.0) -> np.ndarray:
    """Dense SPD matrix with eigenvalues spread over [low, high]."""
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    lam = np.linspace(low, high, n)
    return symmetrize((Q * lam) @ Q.T)


def random_chain(seed: int, n: int, p: int, m: int, keep_basis: bool = False):
    rng = np.random.default_rng(seed)
    op = SparseSpdOperator.from_matrix(random_spd(rng, n))
    B = rng.standard_normal((n, p))
    dec = block_lanczos(op, B, m, keep_basis=keep_basis)
    return op, B, dec


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def t2_operator():
    return SparseSpdOperator.from_matrix(np.array([[2.0, 1.0], [1.0, 2.0]]))


@pytest.fixture
def t2_dec(t2_operator):
    return block_lanczos(t2_operator, np.array([[1.0], [0.0]]), 2)


@pytest.fixture
def t2(t2_dec):
    return assemble_tridiagonal(t2_dec)


@pytest.fixture
def t2_params(t2_dec):
    return extract_stieltjes(t2_dec)


@pytest.fixture
def chain_p2():
    """p = 2, m = 5 chain on a 60 x 60 SPD matrix."""
    op, B, dec = random_chain(7, 60, 2, 5)
    return op, B, dec, assemble_tridiagonal(dec), extract_stieltjes(dec)


@pytest.fixture(scope="session")
def small_problem():
    """16x16 interior, four exterior steps per side, one inclusion, one source."""
    definition = ProblemDefinition(
        interior=(16, 16),
        h=1.0,
        n_opt=4,
        sigma=SigmaSpec(inclusions=[Inclusion(x0=8.0, y0=4.0, x1=12.0, y1=10.0, value=10.0)]),
        sources=[(4.0, 8.0)],
    )
    return build_problem(definition)
