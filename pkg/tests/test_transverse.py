import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from adiax.errors import DegenerateTerm, GridMismatch, OverlapAmbiguity
from adiax.transverse import (
    Harmonic,
    PowerWell,
    RigidWall,
    Tabulated,
    branch_x_derivatives,
    soft_wall_window,
    solve_transverse_at_x,
    track_branches,
)


def test_rigid_wall_levels_and_modes():
    y = np.linspace(0, 1, 401)
    eps, w = solve_transverse_at_x(RigidWall(0.0, 1.0), 0.0, y, 3)
    nu = np.arange(1, 4)
    assert np.allclose(eps, nu**2 * np.pi**2 / 2, rtol=1e-4)
    for k in range(3):
        exact = np.sqrt(2) * np.sin((k + 1) * np.pi * y)
        assert np.max(np.abs(w[k] - exact)) < 1e-4


def test_rigid_wall_second_order_convergence():
    errs = []
    for n in (51, 101, 201):
        eps, _ = solve_transverse_at_x(RigidWall(0.0, 1.0), 0.0, np.linspace(0, 1, n), 3)
        errs.append(np.abs(eps - np.arange(1, 4) ** 2 * np.pi**2 / 2))
    errs = np.array(errs)
    ratios = errs[:-1] / errs[1:]
    assert np.all((ratios > 3.5) & (ratios < 4.5))


def test_harmonic_levels():
    y = np.linspace(-6, 6, 1201)  # 12 sigma window for omega = 2
    eps, _ = solve_transverse_at_x(Harmonic(2.0), 0.0, y, 2)
    assert abs(eps[0] - 1.0) < 2e-4
    assert abs(eps[1] - 3.0) < 1e-3


def test_power_well_m1_is_harmonic():
    y = np.linspace(-8, 8, 1601)
    eps, _ = solve_transverse_at_x(PowerWell(1.0, 1), 0.0, y, 1)
    assert abs(eps[0] - np.sqrt(2) / 2) < 1e-4


def test_eigen_output_invariants():
    y = np.linspace(-7, 7, 301)
    eps, w = solve_transverse_at_x(PowerWell(1.2, 2), 0.3, y, 4)
    dy = y[1] - y[0]
    gram = dy * w @ w.T  # boundary samples vanish so trapezoid equals dy * sum
    assert np.allclose(gram, np.eye(4), atol=1e-12)
    assert np.all(np.diff(eps) > 0)
    for row in w:
        first = row[np.abs(row) > 1e-10 * np.abs(row).max()][0]
        assert first > 0


def test_errors():
    y = np.linspace(0, 1, 12)
    with pytest.raises(ValueError):
        solve_transverse_at_x(RigidWall(), 0.0, y, 11)
    with pytest.raises(ValueError):
        solve_transverse_at_x(Tabulated(lambda x, y: np.full_like(y, np.nan)), 0.0, y, 1)
    with pytest.raises(GridMismatch):
        solve_transverse_at_x(RigidWall(), 0.0, np.array([0, 0.1, 0.5, 1.0]), 1)


def test_moving_rigid_walls_use_width():
    y = np.linspace(-1, 1, 401)
    eps, w = solve_transverse_at_x(RigidWall(-0.25, 0.5), 0.0, y, 2)
    assert np.allclose(eps, np.array([1, 4]) * np.pi**2 / (2 * 0.75**2), rtol=1e-4)
    assert np.all(w[:, y < -0.25] == 0) and np.all(w[:, y > 0.5] == 0)


def test_constant_model_branches_are_constant():
    x = np.linspace(-1, 1, 21)
    y = np.linspace(-6, 6, 241)
    branches = track_branches(PowerWell(1.0, 1), x, y, 3)
    for b in branches:
        assert np.ptp(b.eps) <= 1e-12
        assert np.max(np.ptp(b.w, axis=0)) <= 1e-12
        d = branch_x_derivatives(b)
        assert np.max(np.abs(d.deps)) <= 1e-12 and np.max(np.abs(d.dw)) <= 1e-12


def test_scaling_law_for_modulated_power_well():
    x = np.linspace(-3, 3, 61)
    D = lambda s: 1 + 0.3 * np.sin(s)
    lo, hi = soft_wall_window(PowerWell(D, 1), x, 2)
    y = np.linspace(lo, hi, 801)
    branches = track_branches(PowerWell(D, 1), x, y, 2)
    for b in branches:
        scaled = b.eps * D(x) ** (2 * 1 / 2)
        assert np.ptp(scaled) / scaled.mean() < 1e-3
    # direct per-x solve oracle at two positions
    for xi in (x[5], x[40]):
        eps, _ = solve_transverse_at_x(PowerWell(D, 1), xi, y, 2)
        i = np.argmin(np.abs(x - xi))
        assert np.allclose(eps, [branches[0].eps[i], branches[1].eps[i]], rtol=1e-12)


def test_tracking_invariants_and_derivatives():
    x = np.linspace(-2, 2, 81)
    omega = lambda s: 1 + 0.1 * s
    model = Harmonic(omega)
    lo, hi = soft_wall_window(model, x, 3)
    y = np.linspace(lo, hi, 601)
    branches = track_branches(model, x, y, 3)
    wts = branches[0].weights
    W = np.array([b.w for b in branches])  # (K, nx, ny)
    for i in range(x.size):
        gram = np.einsum("ay,by,y->ab", W[:, i], W[:, i], wts)
        assert np.allclose(gram, np.eye(3), atol=1e-10)
    for b in branches:
        assert np.all(np.einsum("iy,iy,y->i", b.w[:-1], b.w[1:], wts) > 0)
        d = branch_x_derivatives(b)
        assert np.max(np.abs(np.einsum("iy,iy,y->i", b.w, d.dw, wts))) < 1e-8
        assert np.max(np.abs(d.raw_overlap)) < 1e-3
    d = branch_x_derivatives(branches[0])
    assert np.max(np.abs(d.deps - 0.05)) < 1e-4
    assert branches[1].gap_below > 0.79 and branches[0].gap_below == np.inf


def _two_level_crossing():
    # two interior nodes 10 apart: weak kinetic coupling, levels cross in x
    def v(xs, ys):
        return np.array([xs[0], -xs[1]])

    return Tabulated(v), np.linspace(-1, 1, 21), np.linspace(0, 30, 4)


def test_two_level_crossing_is_degenerate():
    model, x, y = _two_level_crossing()
    with pytest.raises(DegenerateTerm):
        track_branches(model, x, y, 1, gap_tol=0.1)


def test_sharp_avoided_crossing_is_ambiguous():
    model, x, y = _two_level_crossing()
    with pytest.raises(OverlapAmbiguity):
        track_branches(model, x, y, 1, gap_tol=1e-3)


def test_derivative_needs_three_nodes():
    x = np.linspace(0, 1, 2)
    b = track_branches(RigidWall(), x, np.linspace(0, 1, 20), 1)[0]
    with pytest.raises(GridMismatch):
        branch_x_derivatives(b)


def test_soft_wall_window_decay():
    x = np.linspace(-1, 1, 5)
    lo, hi = soft_wall_window(Harmonic(1.0), x, 2)
    y = np.linspace(lo, hi, 1001)
    _, w = solve_transverse_at_x(Harmonic(1.0), 0.0, y, 2)
    edge = np.abs(w[:, [1, -2]]).max()
    assert edge < 1e-12 * np.abs(w).max() * 10


@settings(max_examples=10, deadline=None)
@given(st.floats(0.5, 2.0), st.sampled_from([1, 2, 4]))
def test_power_well_scaling_identity(d, m):
    # eps(D) * D^(2m/(m+1)) is independent of D
    y_ref = np.linspace(-6, 6, 801)
    e1, _ = solve_transverse_at_x(PowerWell(1.0, m), 0.0, y_ref, 1)
    y = y_ref * d ** (m / (m + 1))
    e2, _ = solve_transverse_at_x(PowerWell(d, m), 0.0, y, 1)
    assert abs(e2[0] * d ** (2 * m / (m + 1)) - e1[0]) < 1e-9 * e1[0]
