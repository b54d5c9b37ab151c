"""Direct finite-difference solver for the 2D problem.

Discretizes ``-(mu^2/2) d_x^2 - (1/2) d_y^2 + v(x, y)`` on a rectangle with
homogeneous Dirichlet walls (5-point stencil on interior nodes).  Interior
unknowns are ordered x-major: ``index = ix * ny_int + iy``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh, splu

from . import _grid
from .errors import ConvergenceError, GridMismatch


@dataclass(frozen=True)
class Rect2DGrid:
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if x.size < 16 or y.size < 16:
            raise GridMismatch("need at least 16 nodes in each direction")
        _grid.spacing(x, "x")
        _grid.spacing(y, "y")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def dx(self) -> float:
        return _grid.spacing(self.x)

    @property
    def dy(self) -> float:
        return _grid.spacing(self.y)

    @property
    def interior_shape(self) -> tuple[int, int]:
        return self.x.size - 2, self.y.size - 2

    def mesh(self):
        return np.meshgrid(self.x, self.y, indexing="ij")

    def to_interior(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values)[1:-1, 1:-1].reshape(-1)

    def from_interior(self, vec: np.ndarray) -> np.ndarray:
        out = np.zeros((self.x.size, self.y.size), dtype=np.result_type(vec, float))
        out[1:-1, 1:-1] = vec.reshape(self.interior_shape)
        return out


@dataclass
class Wavefunction2D:
    grid: Rect2DGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != (self.grid.x.size, self.grid.y.size):
            raise GridMismatch("samples do not match the grid")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("non-finite wavefunction samples")

    def norm(self) -> float:
        wx = _grid.trapezoid_weights(self.grid.x)
        wy = _grid.trapezoid_weights(self.grid.y)
        return float(np.sqrt(np.einsum("i,j,ij->", wx, wy, np.abs(self.values) ** 2)))

    def inner(self, other: "Wavefunction2D") -> complex:
        wx = _grid.trapezoid_weights(self.grid.x)
        wy = _grid.trapezoid_weights(self.grid.y)
        return complex(np.einsum("i,j,ij->", wx, wy, self.values.conj() * other.values))


def _dirichlet_second_difference(n: int, h: float) -> sp.csr_matrix:
    d, o = _grid.dirichlet_laplacian_bands(n, h)
    return sp.diags([o, d, o], [-1, 0, 1], format="csr")


def assemble_2d(mu: float, v, grid: Rect2DGrid) -> sp.csr_matrix:
    """Sparse symmetric 5-point operator on interior nodes.

    ``v`` is an array of full-grid samples ``(nx, ny)`` or a callable ``v(X, Y)``.
    """
    X, Y = grid.mesh()
    vals = np.asarray(v(X, Y) if callable(v) else v, dtype=float)
    if vals.shape != X.shape:
        raise GridMismatch("potential samples do not match the grid")
    if not np.all(np.isfinite(vals[1:-1, 1:-1])):
        raise ValueError("non-finite potential samples")
    nxi, nyi = grid.interior_shape
    Lx = _dirichlet_second_difference(nxi, grid.dx)
    Ly = _dirichlet_second_difference(nyi, grid.dy)
    A = (0.5 * mu**2) * sp.kron(Lx, sp.identity(nyi)) + 0.5 * sp.kron(sp.identity(nxi), Ly)
    A = A + sp.diags(grid.to_interior(vals))
    return sp.csr_matrix(A)


def _lower_bound(A: sp.csr_matrix) -> float:
    d = A.diagonal()
    off = np.asarray(abs(A).sum(axis=1)).ravel() - np.abs(d)
    return float(np.min(d - off))


def eigs_2d(A: sp.spmatrix, k: int, sigma: float | None = None, grid: Rect2DGrid | None = None,
            residual_tol: float = 1e-8, maxiter: int | None = None):
    """Eigenpairs nearest ``sigma`` (default: the k lowest) by shift-invert Lanczos.

    Returns ``(E, vecs)`` with ``vecs`` of shape ``(k, n)``.  Vectors are
    normalized under the 2D trapezoid rule when ``grid`` is given.
    """
    n = A.shape[0]
    if not 1 <= k < n - 1:
        raise ValueError("k must be much smaller than the matrix size")
    shift = _lower_bound(A) - 1.0 if sigma is None else sigma
    try:
        E, V = eigsh(A, k=k, sigma=shift, which="LM", tol=0, maxiter=maxiter)
    except Exception as exc:  # ARPACK non-convergence
        raise ConvergenceError(f"eigsh failed: {exc}") from exc
    order = np.argsort(E)
    E, V = E[order], V[:, order]
    res = np.linalg.norm(A @ V - V * E, axis=0) / np.linalg.norm(V, axis=0)
    if np.max(res) > residual_tol:
        raise ConvergenceError(f"eigen residual {np.max(res):.2e} above {residual_tol:g}")
    V = V.T
    if grid is not None:
        V = V / np.sqrt(grid.dx * grid.dy * np.sum(np.abs(V) ** 2, axis=1))[:, None]
    return E, V


class CrankNicolson:
    """Factorized Crank-Nicolson propagator for ``i mu psi_t = A psi``.

    ``shift`` is subtracted from ``A`` before stepping; it only changes the
    global phase of the solution and keeps the rotation per step small.
    """

    def __init__(self, A: sp.spmatrix, mu: float, dt: float, shift: float = 0.0):
        n = A.shape[0]
        tau = dt / (2 * mu)
        B = sp.csc_matrix(A - shift * sp.identity(n), dtype=complex)
        eye = sp.identity(n, dtype=complex, format="csc")
        self.lhs = splu(sp.csc_matrix(eye + 1j * tau * B))
        self.rhs = sp.csr_matrix(eye - 1j * tau * B)
        self.dt = dt

    def step(self, vec: np.ndarray) -> np.ndarray:
        return self.lhs.solve(self.rhs @ vec)


def evolve_cn(psi0: Wavefunction2D, A: sp.spmatrix, mu: float, dt: float, steps: int,
              snapshot_every: int | None = None, shift: float = 0.0):
    """Crank-Nicolson evolution; returns ``(times, snapshots)``.

    Snapshots are taken every ``snapshot_every`` steps (default: only the
    final state) and always include the initial state.
    """
    if steps < 0 or dt == 0:
        raise ValueError("need steps >= 0 and dt != 0")
    grid = psi0.grid
    prop = CrankNicolson(A, mu, dt, shift)
    every = steps if snapshot_every is None else snapshot_every
    vec = grid.to_interior(psi0.values)
    times, snaps = [0.0], [psi0]
    for s in range(1, steps + 1):
        vec = prop.step(vec)
        if every and (s % every == 0 or s == steps):
            if times[-1] != s * dt:
                times.append(s * dt)
                snaps.append(Wavefunction2D(grid, grid.from_interior(vec)))
    return np.array(times), snaps


def project_modes(psi: Wavefunction2D, branches) -> np.ndarray:
    """Coefficients ``psi_k(x_i) = <w_k(x_i, .), Psi(x_i, .)>_y``; shape ``(K, nx)``."""
    grid = psi.grid
    out = []
    for b in branches:
        if b.y_grid.shape != grid.y.shape or not np.allclose(b.y_grid, grid.y):
            raise GridMismatch("branch and wavefunction use different y grids")
        if b.x_grid.shape != grid.x.shape or not np.allclose(b.x_grid, grid.x):
            raise GridMismatch("branch and wavefunction use different x grids")
        wy = _grid.trapezoid_weights(grid.y)
        out.append(np.einsum("ij,ij,j->i", b.w, psi.values, wy))
    return np.array(out)
