import numpy as np
import pytest
from pydantic import ValidationError

from lanczos_kn.core import SparseSpdOperator
from lanczos_kn.errors import (
    DimensionMismatch,
    DuplicateNode,
    NonPositiveSigma,
    NotSymmetricHeader,
    OutsideInterior,
    ParseError,
    SingularShift,
)
from lanczos_kn.problems import (
    Inclusion,
    ProblemDefinition,
    SigmaSpec,
    assemble_diffusion_2d,
    build_point_sources,
    build_problem,
    geometric_exterior_grid,
    load_dense_block,
    load_matrix_market,
    make_grid,
    reference_transfer,
    sample_sigma,
    write_dense_block,
    write_matrix_market,
)
from lanczos_kn.quadratures import Variant

T2_MTX = """%%MatrixMarket matrix coordinate real symmetric
2 2 3
1 1 2.0
2 1 1.0
2 2 2.0
"""

E1_MTX = """%%MatrixMarket matrix array real general
2 1
1.0
0.0
"""


@pytest.fixture
def t2_files(tmp_path):
    (tmp_path / "t2.mtx").write_text(T2_MTX)
    (tmp_path / "e1.mtx").write_text(E1_MTX)
    return tmp_path


# exterior grid

def test_geometric_ratio():
    steps = geometric_exterior_grid(1.0, 10)
    r = np.exp(np.pi / np.sqrt(10))
    assert steps[0] == pytest.approx(2.70068, abs=1e-5)
    np.testing.assert_allclose(steps[1:] / steps[:-1], r)


def test_single_exterior_step():
    assert geometric_exterior_grid(0.5, 1)[0] == pytest.approx(0.5 * np.exp(np.pi))


def test_exterior_needs_a_step():
    with pytest.raises(ValueError):
        geometric_exterior_grid(1.0, 0)


def test_grid_layout():
    grid = make_grid(6, 4, h=0.5, n_opt=3)
    assert grid.nx == 6 + 2 * 3
    assert grid.ny == 4 + 2 * 3
    x = grid.x()
    assert x[3] == pytest.approx(0.0, abs=1e-12)
    np.testing.assert_allclose(np.diff(x[3:9]), 0.5)
    assert x[2] == pytest.approx(-0.5)
    assert grid.extent() == pytest.approx(geometric_exterior_grid(0.5, 3).sum())
    mask = grid.interior_mask()
    assert mask.sum() == 24
    assert not mask[0].any() and not mask[:, -1].any()


# operator

def test_five_point_stencil():
    h = 0.5
    grid = make_grid(3, 3, h=h, n_opt=0)
    A = assemble_diffusion_2d(grid, 1.0).operator.dense()
    centre = 4
    assert A[centre, centre] == pytest.approx(4 / h**2)
    for neighbour in (1, 3, 5, 7):
        assert A[centre, neighbour] == pytest.approx(-1 / h**2)
    assert A[centre, 0] == 0.0


def test_sigma_scaling():
    grid = make_grid(5, 4, h=1.0, n_opt=2)
    A1 = assemble_diffusion_2d(grid, 1.0).operator.dense()
    A3 = assemble_diffusion_2d(grid, 3.0).operator.dense()
    np.testing.assert_allclose(A3, A1 / 3.0, rtol=1e-13, atol=1e-15)


def test_single_row_spectrum():
    # ny = 1 adds 2/h^2 from the Dirichlet neighbours above and below
    N, h = 5, 0.5
    grid = make_grid(N, 1, h=h, n_opt=0)
    lam = np.linalg.eigvalsh(assemble_diffusion_2d(grid, 1.0).operator.dense())
    k = np.arange(1, N + 1)
    expected = 4 / h**2 * np.sin(k * np.pi / (2 * (N + 1))) ** 2 + 2 / h**2
    np.testing.assert_allclose(np.sort(lam), np.sort(expected), rtol=1e-12)


def test_operator_spd_with_inclusion():
    grid = make_grid(8, 8, h=1.0, n_opt=3)
    spec = SigmaSpec(inclusions=[Inclusion(x0=2, y0=2, x1=5, y1=5, value=10.0)])
    A = assemble_diffusion_2d(grid, spec).operator.dense()
    np.testing.assert_allclose(A, A.T, atol=1e-14)
    assert np.linalg.eigvalsh(A).min() > 0


def test_sample_sigma():
    grid = make_grid(16, 16, h=1.0, n_opt=4)
    spec = SigmaSpec(background=2.0, inclusions=[Inclusion(x0=8, y0=4, x1=12, y1=10, value=10.0)])
    sigma = sample_sigma(grid, spec)
    assert sigma.shape == (grid.ny, grid.nx)
    assert sigma[4 + 5, 4 + 10] == 10.0
    assert sigma[0, 0] == 2.0


def test_non_positive_sigma():
    grid = make_grid(3, 3, n_opt=0)
    sigma = np.ones((3, 3))
    sigma[1, 1] = -1.0
    with pytest.raises(NonPositiveSigma):
        assemble_diffusion_2d(grid, sigma)


# sources

def test_point_source_node():
    problem = assemble_diffusion_2d(make_grid(8, 8, n_opt=2), 1.0)
    sources = build_point_sources(problem, [(3.2, 4.9)])
    assert sources.nodes == [(2 + 3, 2 + 5)]
    row = problem.node_index(5, 7)
    assert sources.B[row, 0] == 1.0
    assert sources.B.sum() == 1.0
    assert problem.node_of(row) == (5, 7)


def test_two_sources_orthonormal():
    problem = assemble_diffusion_2d(make_grid(8, 8, n_opt=2), 1.0)
    B = build_point_sources(problem, [(1.0, 1.0), (6.0, 2.0)]).B
    np.testing.assert_array_equal(B.T @ B, np.eye(2))


def test_duplicate_node():
    problem = assemble_diffusion_2d(make_grid(8, 8, n_opt=2), 1.0)
    with pytest.raises(DuplicateNode):
        build_point_sources(problem, [(3.0, 3.0), (3.2, 3.1)])


def test_outside_interior():
    problem = assemble_diffusion_2d(make_grid(8, 8, n_opt=2), 1.0)
    with pytest.raises(OutsideInterior):
        build_point_sources(problem, [(-5.0, 0.0)])


# Matrix Market

def test_read_symmetric(t2_files):
    op = load_matrix_market(t2_files / "t2.mtx")
    np.testing.assert_array_equal(op.dense(), [[2.0, 1.0], [1.0, 2.0]])
    np.testing.assert_array_equal(load_dense_block(t2_files / "e1.mtx"), [[1.0], [0.0]])


def test_general_header_rejected(tmp_path):
    path = tmp_path / "general.mtx"
    path.write_text(T2_MTX.replace("symmetric", "general"))
    with pytest.raises(NotSymmetricHeader):
        load_matrix_market(path)


def test_missing_banner(tmp_path):
    path = tmp_path / "bad.mtx"
    path.write_text("2 2 1\n1 1 1.0\n")
    with pytest.raises(ParseError) as info:
        load_matrix_market(path)
    assert info.value.line == 1


def test_bad_entry_reports_line(tmp_path):
    path = tmp_path / "bad.mtx"
    path.write_text(T2_MTX.replace("2 1 1.0", "2 1 abc"))
    with pytest.raises(ParseError) as info:
        load_matrix_market(path)
    assert info.value.line == 4


def test_write_read_exact(tmp_path, rng):
    M = rng.standard_normal((6, 6))
    M = M + M.T + 12 * np.eye(6)
    path = write_matrix_market(tmp_path / "m", M)
    assert path.suffix == ".mtx"
    np.testing.assert_array_equal(load_matrix_market(path).dense(), M)
    B = rng.standard_normal((6, 2))
    np.testing.assert_array_equal(load_dense_block(write_dense_block(tmp_path / "b.mtx", B)), B)


# reference solves

def test_reference_identity():
    op = SparseSpdOperator.from_matrix(np.eye(2))
    sample = reference_transfer(op, np.array([1.0, 0.0]), 1.0)
    assert sample.variant is Variant.REFERENCE
    assert sample.value[0, 0] == pytest.approx(0.5)


def test_reference_t2(t2_operator):
    value = reference_transfer(t2_operator, np.array([[1.0], [0.0]]), 1.0).value
    assert value[0, 0] == pytest.approx(0.375, abs=1e-15)


def test_reference_singular(t2_operator):
    with pytest.raises(SingularShift):
        reference_transfer(t2_operator, np.array([[1.0], [0.0]]), -1.0)


def test_reference_dimension(t2_operator):
    with pytest.raises(DimensionMismatch):
        reference_transfer(t2_operator, np.ones((3, 1)), 1.0)


@pytest.mark.parametrize("s", [0.5, 0.5 + 0.5j])
def test_reference_iterative_matches_direct(small_problem, s):
    direct = reference_transfer(small_problem.operator, small_problem.rhs, s).value
    iterative = reference_transfer(small_problem.operator, small_problem.rhs, s, direct_cap=0).value
    np.testing.assert_allclose(iterative, direct, rtol=1e-7)


def test_reference_complex_symmetric(chain_p2):
    op, B, *_ = chain_p2
    value = reference_transfer(op, B, 0.2 + 0.9j).value
    np.testing.assert_allclose(value, value.T, rtol=1e-12)


# problem definitions

def test_desk_default():
    problem = build_problem()
    grid = problem.diffusion.grid
    assert (grid.nx, grid.ny) == (80, 80)
    assert problem.operator.n == 6400
    assert problem.rhs.shape == (6400, 1)
    assert problem.rhs[problem.diffusion.node_index(10 + 15, 10 + 30), 0] == 1.0


def test_matrix_problem(t2_files):
    problem = build_problem(ProblemDefinition(matrix="t2.mtx", rhs="e1.mtx"), t2_files)
    assert problem.diffusion is None
    assert problem.operator.n == 2
    assert problem.rhs.shape == (2, 1)


def test_matrix_rhs_mismatch(tmp_path, t2_files):
    write_dense_block(tmp_path / "long.mtx", np.ones((3, 1)))
    with pytest.raises(DimensionMismatch):
        build_problem(ProblemDefinition(matrix="t2.mtx", rhs="long.mtx"), t2_files)


def test_matrix_needs_rhs():
    with pytest.raises(ValidationError):
        ProblemDefinition(matrix="a.mtx")
