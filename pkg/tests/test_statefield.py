import numpy as np
import pytest

from lanczos_kn.errors import MissingBasis
from lanczos_kn.lanczos import block_lanczos
from lanczos_kn.statefield import (
    cross_section_series,
    harmonic_shift,
    snapshot,
    snapshot_table,
    state_solution,
    vertical_line,
)
from lanczos_kn.stieltjes import extract_stieltjes

from .conftest import random_chain


@pytest.fixture(scope="module")
def full_chain():
    """m = n, so the Gauss state is the exact solution."""
    op, B, dec = random_chain(21, 12, 1, 12, keep_basis=True)
    return op, B, dec, extract_stieltjes(dec)


@pytest.fixture(scope="module")
def grid_chain(small_problem):
    dec = block_lanczos(small_problem.operator, small_problem.rhs, 10, keep_basis=True)
    return dec, extract_stieltjes(dec)


def test_harmonic_shift():
    assert harmonic_shift(0.0, 1.0) == 1.0
    assert harmonic_shift(2.0, 0.0) == pytest.approx(-4.0)
    assert harmonic_shift(1.0, 0.5) == pytest.approx(-0.75 + 1.0j)


def test_real_shift_gives_real_state(full_chain):
    _, _, dec, params = full_chain
    state = state_solution(dec, params, "gauss", 0.0, 1.0)
    assert np.max(np.abs(state.imag)) < 1e-14 * np.max(np.abs(state))


def test_gauss_state_exact_at_full_depth(full_chain):
    op, B, dec, params = full_chain
    s = harmonic_shift(0.3, 0.05)
    expected = np.linalg.solve(op.dense() + s * np.eye(op.n), B)
    state = state_solution(dec, params, "gauss", 0.3, 0.05)
    np.testing.assert_allclose(state, expected, rtol=1e-8, atol=1e-10 * np.abs(expected).max())


def test_conjugate_frequency(full_chain):
    _, _, dec, params = full_chain
    plus = state_solution(dec, params, "radau", 0.4, 0.01)
    minus = state_solution(dec, params, "radau", -0.4, 0.01)
    np.testing.assert_allclose(minus, np.conj(plus), rtol=1e-12, atol=1e-14)


def test_average_state(full_chain):
    _, _, dec, params = full_chain
    gauss = state_solution(dec, params, "gauss", 0.3, 0.01)
    radau = state_solution(dec, params, "radau", 0.3, 0.01)
    average = state_solution(dec, params, "average", 0.3, 0.01)
    np.testing.assert_allclose(average, 0.5 * (gauss + radau), rtol=1e-12)


def test_kn_state_large_phi_is_gauss(grid_chain):
    dec, params = grid_chain
    gauss = state_solution(dec, params, "gauss", 0.3, 0.05)
    kn = state_solution(dec, params, "kn", 0.3, 0.05, phi=1e12)
    np.testing.assert_allclose(kn, gauss, rtol=1e-6)


def test_diffusive_gauss_state_nearly_real(grid_chain):
    dec, params = grid_chain
    state = state_solution(dec, params, "gauss", 1e-8, 1e-6)
    assert np.linalg.norm(state.imag) <= 1e-6 * np.linalg.norm(state)


@pytest.mark.parametrize("variant", ["gauss", "radau"])
def test_diffusive_state_phase_bounded_by_shift(grid_chain, variant):
    dec, params = grid_chain
    omega, epsilon = 1e-4, 1e-2
    s = harmonic_shift(omega, epsilon)
    state = state_solution(dec, params, variant, omega, epsilon)
    bound = abs(s.imag) / s.real
    assert np.linalg.norm(state.imag) <= 1.001 * bound * np.linalg.norm(state.real)


def test_kn_departs_from_gauss_near_resonance(grid_chain):
    dec, params = grid_chain
    omega = 0.3

    def departure(epsilon):
        gauss = state_solution(dec, params, "gauss", omega, epsilon)
        kn = state_solution(dec, params, "kn", omega, epsilon, phi=1.0)
        return np.linalg.norm(kn - gauss) / np.linalg.norm(gauss)

    assert departure(omega / 100) > departure(omega)


def test_kn_state_needs_phi(grid_chain):
    dec, params = grid_chain
    with pytest.raises(ValueError):
        state_solution(dec, params, "kn", 0.3, 0.0015)


def test_no_extended_state(grid_chain):
    dec, params = grid_chain
    with pytest.raises(ValueError):
        state_solution(dec, params, "extended_kn", 0.3, 0.0015, phi=1.0)


@pytest.mark.parametrize("epsilon", [0.0, -0.1])
def test_epsilon_must_be_positive(grid_chain, epsilon):
    dec, params = grid_chain
    with pytest.raises(ValueError):
        state_solution(dec, params, "gauss", 0.3, epsilon)


def test_needs_basis(small_problem):
    dec = block_lanczos(small_problem.operator, small_problem.rhs, 4)
    with pytest.raises(MissingBasis):
        state_solution(dec, extract_stieltjes(dec), "gauss", 0.3, 0.01)


def test_snapshot_phases(small_problem, grid_chain):
    dec, params = grid_chain
    grid = small_problem.diffusion.grid
    omega = 0.3
    state = state_solution(dec, params, "gauss", omega, 0.0015)
    start = snapshot(state, omega, 0.0, grid)
    half = snapshot(state, omega, np.pi / omega, grid)
    assert start.field.shape == (grid.ny, grid.nx)
    np.testing.assert_allclose(start.field.ravel(), state[:, 0].real)
    np.testing.assert_allclose(half.field, -start.field, atol=1e-12 * np.abs(start.field).max())


def test_snapshot_table(small_problem, grid_chain):
    dec, params = grid_chain
    grid = small_problem.diffusion.grid
    snap = snapshot(state_solution(dec, params, "gauss", 0.3, 0.0015), 0.3, 0.0, grid)
    table = snapshot_table(snap)
    assert len(table) == grid.n
    x, y, exterior, value = table[grid.n_opt * grid.nx + grid.n_opt]
    assert x == pytest.approx(0.0, abs=1e-12)
    assert y == pytest.approx(0.0, abs=1e-12)
    assert exterior == 0
    assert table[0][2] == 1
    assert value == snap.field[grid.n_opt, grid.n_opt]


def test_snapshot_without_grid():
    snap = snapshot(np.array([1.0 + 1.0j, 2.0]), np.pi, 0.5)
    np.testing.assert_allclose(snap.field, [-1.0, 0.0], atol=1e-15)
    assert snapshot_table(snap)[0] == (0, snap.field[0])


def test_cross_section(small_problem, grid_chain):
    dec, params = grid_chain
    grid = small_problem.diffusion.grid
    state = state_solution(dec, params, "gauss", 0.3, 0.0015)
    line = vertical_line(grid, grid.n_opt + 4)
    assert len(line) == grid.ny
    assert all(row % grid.nx == grid.n_opt + 4 for row in line)
    series = cross_section_series(state, 0.3, line, [0.0, 1.0, 2.0])
    assert series.shape == (3, grid.ny)
    np.testing.assert_allclose(series[0], state[line, 0].real)
