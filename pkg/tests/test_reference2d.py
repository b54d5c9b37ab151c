import numpy as np
import pytest
import scipy.sparse as sp

from adiax.errors import GridMismatch
from adiax.reference2d import (
    CrankNicolson,
    Rect2DGrid,
    Wavefunction2D,
    assemble_2d,
    eigs_2d,
    evolve_cn,
    project_modes,
)
from adiax.transverse import Harmonic, track_branches


def _dirichlet_eigs(n_int, h):
    k = np.arange(1, n_int + 1)
    return 2 * (1 - np.cos(k * np.pi / (n_int + 1))) / h**2


def test_empty_box_spectrum_is_exact_sum_of_1d_spectra():
    grid = Rect2DGrid(np.linspace(0, 2, 31), np.linspace(0, 1, 21))
    mu = 0.3
    A = assemble_2d(mu, np.zeros((31, 21)), grid)
    lx = _dirichlet_eigs(29, grid.dx)
    ly = _dirichlet_eigs(19, grid.dy)
    expected = np.sort((0.5 * mu**2 * lx[:, None] + 0.5 * ly[None, :]).ravel())[:4]
    E, V = eigs_2d(A, 4, grid=grid)
    assert np.allclose(E, expected, rtol=1e-12)
    assert np.allclose(grid.dx * grid.dy * np.sum(np.abs(V) ** 2, axis=1), 1.0)


def test_operator_symmetric_and_callable_potential():
    grid = Rect2DGrid(np.linspace(-1, 1, 20), np.linspace(-1, 1, 18))
    X, Y = grid.mesh()
    A1 = assemble_2d(0.2, lambda x, y: x**2 + np.sin(y), grid)
    A2 = assemble_2d(0.2, X**2 + np.sin(Y), grid)
    assert abs(A1 - A1.T).max() == 0
    assert abs(A1 - A2).max() == 0
    assert A1.shape == (18 * 16, 18 * 16)


def test_grid_validation():
    with pytest.raises(GridMismatch):
        Rect2DGrid(np.linspace(0, 1, 10), np.linspace(0, 1, 20))
    grid = Rect2DGrid(np.linspace(0, 1, 16), np.linspace(0, 1, 16))
    with pytest.raises(GridMismatch):
        assemble_2d(0.1, np.zeros((16, 15)), grid)
    with pytest.raises(GridMismatch):
        Wavefunction2D(grid, np.zeros((15, 16)))
    vals = np.arange(256.0).reshape(16, 16)
    assert np.array_equal(grid.from_interior(grid.to_interior(vals))[1:-1, 1:-1], vals[1:-1, 1:-1])


def _small_problem():
    grid = Rect2DGrid(np.linspace(-3, 3, 40), np.linspace(-3, 3, 30))
    X, Y = grid.mesh()
    mu = 0.2
    return grid, mu, assemble_2d(mu, X**2 / 2 + Y**2, grid)


def test_crank_nicolson_eigenstate_phase():
    grid, mu, A = _small_problem()
    E, V = eigs_2d(A, 1, grid=grid)
    psi0 = Wavefunction2D(grid, grid.from_interior(V[0]))
    dt, steps = 0.01, 50
    _, snaps = evolve_cn(psi0, A, mu, dt, steps)
    tau = dt / (2 * mu)
    factor = ((1 - 1j * tau * E[0]) / (1 + 1j * tau * E[0])) ** steps
    assert np.allclose(snaps[-1].values, factor * psi0.values, atol=1e-9)


def test_crank_nicolson_time_reversal_and_norm():
    grid, mu, A = _small_problem()
    X, Y = grid.mesh()
    start = grid.from_interior(grid.to_interior(np.exp(-(X - 0.5) ** 2 - Y**2 + 2j * X)))
    psi0 = Wavefunction2D(grid, start)
    _, fwd = evolve_cn(psi0, A, mu, 0.02, 40)
    _, back = evolve_cn(fwd[-1], A, mu, -0.02, 40)
    assert np.allclose(back[-1].values, psi0.values, atol=1e-10)
    assert abs(fwd[-1].norm() - psi0.norm()) < 1e-12


def test_snapshots():
    grid, mu, A = _small_problem()
    X, Y = grid.mesh()
    psi0 = Wavefunction2D(grid, grid.from_interior(grid.to_interior(np.exp(-X**2 - Y**2))))
    times, snaps = evolve_cn(psi0, A, mu, 0.01, 10, snapshot_every=4)
    assert np.allclose(times, [0.0, 0.04, 0.08, 0.10])
    assert len(snaps) == 4
    with pytest.raises(ValueError):
        evolve_cn(psi0, A, mu, 0.0, 10)


def test_shift_changes_only_global_phase_rate():
    grid, mu, A = _small_problem()
    E, V = eigs_2d(A, 1, grid=grid)
    prop = CrankNicolson(A, mu, 0.01, shift=E[0])
    # the shifted propagator leaves the eigenstate it is tuned to unchanged
    assert np.allclose(prop.step(V[0]), V[0], atol=1e-10)


def test_project_modes_is_complete():
    x = np.linspace(-1, 1, 16)
    y = np.linspace(-4, 4, 18)
    grid = Rect2DGrid(x, y)
    branches = track_branches(Harmonic(1.0), x, y, 16)
    X, Y = grid.mesh()
    psi = Wavefunction2D(grid, grid.from_interior(grid.to_interior(np.exp(-(Y - 0.3) ** 2 + 1j * X * Y))))
    coef = project_modes(psi, branches)
    assert coef.shape == (16, 16)
    slice_norms = grid.dy * np.sum(np.abs(psi.values) ** 2, axis=1)
    assert np.allclose(np.sum(np.abs(coef) ** 2, axis=0), slice_norms, atol=1e-12)


def test_project_modes_grid_mismatch():
    x = np.linspace(-1, 1, 16)
    y = np.linspace(-4, 4, 18)
    branches = track_branches(Harmonic(1.0), x, y, 2)
    other = Rect2DGrid(x, np.linspace(-4, 4, 20))
    with pytest.raises(GridMismatch):
        project_modes(Wavefunction2D(other, np.zeros((16, 20))), branches)


def test_inner_product():
    grid = Rect2DGrid(np.linspace(0, 1, 16), np.linspace(0, 1, 16))
    X, Y = grid.mesh()
    u = Wavefunction2D(grid, np.sin(np.pi * X) * np.sin(np.pi * Y))
    assert u.inner(u) == pytest.approx(u.norm() ** 2)
    assert abs(u.norm() - 0.5) < 5e-3
    assert sp.issparse(assemble_2d(0.1, np.zeros((16, 16)), grid))
