"""Uniform-grid helpers shared by the solver modules."""

import numpy as np

from .errors import GridMismatch


def spacing(grid, name="grid", rtol=1e-8):
    """Return the spacing of a uniform 1D grid, raising if it is not uniform."""
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2:
        raise GridMismatch(f"{name} must be a 1D array with at least 2 nodes")
    steps = np.diff(grid)
    h = steps.mean()
    if h <= 0 or np.max(np.abs(steps - h)) > rtol * abs(h) + 1e-14:
        raise GridMismatch(f"{name} is not uniform and increasing")
    return float(h)


def same_grid(a, b, name="grid"):
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape or not np.allclose(a, b, rtol=1e-12, atol=1e-14):
        raise GridMismatch(f"{name} mismatch")


def d1(f, h, axis=0):
    """Second-order first derivative; one-sided second-order at the ends."""
    f = np.asarray(f)
    if f.shape[axis] < 3:
        raise GridMismatch("need at least 3 nodes for a derivative")
    return np.gradient(f, h, axis=axis, edge_order=2)


def d2(f, h, axis=0):
    """Second derivative: 3-point centred stencil, 4-point one-sided at the ends."""
    f = np.moveaxis(np.asarray(f), axis, 0)
    n = f.shape[0]
    if n < 4:
        raise GridMismatch("need at least 4 nodes for a second derivative")
    out = np.empty_like(f)
    out[1:-1] = f[2:] - 2 * f[1:-1] + f[:-2]
    out[0] = 2 * f[0] - 5 * f[1] + 4 * f[2] - f[3]
    out[-1] = 2 * f[-1] - 5 * f[-2] + 4 * f[-3] - f[-4]
    return np.moveaxis(out / h**2, 0, axis)


def dk(f, h, k, axis=0):
    """k-th derivative built from the first- and second-order stencils."""
    if k == 0:
        return np.asarray(f)
    out = np.asarray(f)
    while k >= 2:
        out = d2(out, h, axis)
        k -= 2
    if k == 1:
        out = d1(out, h, axis)
    return out


def trapezoid_weights(grid):
    grid = np.asarray(grid, dtype=float)
    w = np.empty_like(grid)
    dx = np.diff(grid)
    w[0] = dx[0] / 2
    w[-1] = dx[-1] / 2
    w[1:-1] = (dx[:-1] + dx[1:]) / 2
    return w


def dirichlet_laplacian_bands(n_interior, h):
    """Diagonal and off-diagonal of -d^2/dy^2 with homogeneous Dirichlet ends."""
    diag = np.full(n_interior, 2.0 / h**2)
    off = np.full(n_interior - 1, -1.0 / h**2)
    return diag, off
