"""Frozen transverse spectral problems and smooth branch tracking in x.

For every slow position ``x`` the operator ``-(1/2) d^2/dy^2 + v_int(x, y)``
with homogeneous Dirichlet ends is discretized by the symmetric tridiagonal
3-point stencil.  Eigenvectors are stored on the full y grid (zeros at the
walls) and normalized with the trapezoid rule.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
from scipy.linalg import eigh_tridiagonal

from . import _grid
from .errors import DegenerateTerm, GridMismatch, OverlapAmbiguity


def _profile(f) -> Callable:
    if callable(f):
        return lambda x: np.asarray(f(x), dtype=float)
    c = float(f)
    return lambda x: np.full(np.shape(x), c)


@dataclass(frozen=True)
class RigidWall:
    """Hard walls at ``y1(x) < y2(x)``; no potential between them."""

    y1: Callable | float = 0.0
    y2: Callable | float = 1.0

    def walls(self, x):
        lo, hi = _profile(self.y1)(x), _profile(self.y2)(x)
        if np.any(hi - lo <= 0):
            raise ValueError("wall positions must satisfy y1 < y2")
        return lo, hi


@dataclass(frozen=True)
class PowerWell:
    """``amplitude * ((y - center) / D(x))**(2m)``."""

    D: Callable | float
    m: float = 1.0
    center: float = 0.0
    amplitude: float = 1.0

    def __post_init__(self):
        if self.m <= 0 or self.amplitude <= 0:
            raise ValueError("m and amplitude must be positive")

    def potential(self, x, y):
        d = _profile(self.D)(x)
        if np.any(d <= 0):
            raise ValueError("dilation profile D must be positive")
        return self.amplitude * ((np.asarray(y) - self.center) / d) ** (2 * self.m)

    def half_width_guess(self, x):
        return float(np.max(_profile(self.D)(x))) / self.amplitude ** (1 / (2 * self.m))


@dataclass(frozen=True)
class Harmonic:
    """``omega(x)**2 (y - center)**2 / 2``."""

    omega: Callable | float
    center: float = 0.0

    def potential(self, x, y):
        w = _profile(self.omega)(x)
        if np.any(w <= 0):
            raise ValueError("frequency profile must be positive")
        return 0.5 * w**2 * (np.asarray(y) - self.center) ** 2

    def half_width_guess(self, x):
        return 1.0 / np.sqrt(float(np.min(_profile(self.omega)(x))))


@dataclass(frozen=True)
class Tabulated:
    """Arbitrary transverse potential.

    ``v`` is either a callable ``v(x, y)`` or an array of samples of shape
    ``(len(x_nodes), len(y_grid))``, linearly interpolated in x.
    """

    v: Callable | np.ndarray
    x_nodes: np.ndarray | None = None

    def potential(self, x, y):
        if callable(self.v):
            return np.asarray(self.v(x, y), dtype=float)
        table = np.asarray(self.v, dtype=float)
        xn = np.asarray(self.x_nodes, dtype=float)
        y = np.asarray(y)
        if table.shape != (xn.size, y.size):
            raise GridMismatch("tabulated samples do not match the y grid")
        return np.array([np.interp(x, xn, table[:, j]) for j in range(y.size)])


ConfinementModel = Union[RigidWall, PowerWell, Harmonic, Tabulated]


def _fix_sign(w: np.ndarray) -> np.ndarray:
    """Make the first non-negligible component of every row positive."""
    for row in w:
        tol = 1e-10 * np.max(np.abs(row))
        first = row[np.argmax(np.abs(row) > tol)]
        if first < 0:
            row *= -1
    return w


def _tridiagonal_solve(v_interior: np.ndarray, dy: float, K: int):
    if not np.all(np.isfinite(v_interior)):
        raise ValueError("non-finite potential samples")
    n = v_interior.size
    if K < 1 or K > n:
        raise ValueError(f"K={K} must lie in [1, {n}] for this grid")
    diag, off = _grid.dirichlet_laplacian_bands(n, dy)
    eps, vec = eigh_tridiagonal(0.5 * diag + v_interior, 0.5 * off, select="i", select_range=(0, K - 1))
    return eps, vec.T


def solve_transverse_at_x(model: ConfinementModel, x: float, y_grid, K: int):
    """K lowest eigenpairs of the frozen transverse operator at ``x``.

    Returns ``(eps, w)`` with ``eps`` ascending of shape ``(K,)`` and ``w`` of
    shape ``(K, ny)`` on the full grid including the zero boundary values.
    """
    y = np.asarray(y_grid, dtype=float)
    dy = _grid.spacing(y, "y_grid")
    if isinstance(model, RigidWall):
        lo, hi = model.walls(np.array([x]))
        lo, hi = float(lo[0]), float(hi[0])
        if abs(lo - y[0]) < 1e-12 * max(1.0, abs(lo)) and abs(hi - y[-1]) < 1e-12 * max(1.0, abs(hi)):
            eps, vec = _tridiagonal_solve(np.zeros(y.size - 2), dy, K)
            w = np.zeros((K, y.size))
            w[:, 1:-1] = vec
        else:
            # walls move with x: solve on a mapped grid of the same size, resample
            s = np.linspace(lo, hi, y.size)
            eps, vec = _tridiagonal_solve(np.zeros(y.size - 2), s[1] - s[0], K)
            full = np.zeros((K, y.size))
            full[:, 1:-1] = vec
            w = np.array([np.interp(y, s, row, left=0.0, right=0.0) for row in full])
    else:
        v = model.potential(np.full(y.size - 2, x), y[1:-1])
        eps, vec = _tridiagonal_solve(v, dy, K)
        w = np.zeros((K, y.size))
        w[:, 1:-1] = vec
    wts = _grid.trapezoid_weights(y)
    w /= np.sqrt((w**2) @ wts)[:, None]
    return eps, _fix_sign(w)


def soft_wall_window(model: ConfinementModel, x_grid, K: int, decay: float = 1e-12,
                     margin: float = 1.5, n_probe: int = 9) -> tuple[float, float]:
    """Transverse window for a soft confinement.

    The edge is the larger of ``margin`` times the outermost classical
    turning point of level ``K`` and the point where the WKB decay factor
    ``exp(-int sqrt(2(v - E_K)) dy)`` falls below ``decay``.
    """
    if isinstance(model, RigidWall):
        lo, hi = model.walls(np.asarray(x_grid, dtype=float))
        return float(np.min(lo)), float(np.max(hi))
    if isinstance(model, Tabulated):
        raise ValueError("tabulated confinements carry their own y grid")
    x = np.asarray(x_grid, dtype=float)
    probes = x[np.unique(np.linspace(0, x.size - 1, min(n_probe, x.size)).astype(int))]
    c = model.center
    half = 8.0 * model.half_width_guess(x)
    target = np.log(1.0 / decay)
    edge = 0.0
    for xp in probes:
        y = np.linspace(c - half, c + half, 801)
        eps, _ = solve_transverse_at_x(model, xp, y, K)
        e_top = eps[-1]
        for side in (1.0, -1.0):
            ys = c + side * np.linspace(0.0, 4 * half, 8001)
            v = model.potential(np.full(ys.size, xp), ys)
            above = v > e_top
            if not above.any():
                raise ValueError("confinement does not bind the requested levels")
            i_turn = int(np.argmax(above))
            kappa = np.sqrt(np.clip(2 * (v - e_top), 0.0, None))
            action = np.concatenate([[0.0], np.cumsum(0.5 * (kappa[1:] + kappa[:-1]) * np.diff(ys) * side)])
            action -= action[i_turn]
            reach = np.nonzero(action >= target)[0]
            y_decay = abs(ys[reach[0]] - c) if reach.size else abs(ys[-1] - c)
            edge = max(edge, margin * abs(ys[i_turn] - c), y_decay)
    return c - edge, c + edge


@dataclass(frozen=True)
class TermBranch:
    """Smoothly tracked transverse level ``nu`` over the x grid."""

    nu: int
    x_grid: np.ndarray
    y_grid: np.ndarray
    eps: np.ndarray
    w: np.ndarray
    gap_below: float
    gap_above: float

    @property
    def weights(self) -> np.ndarray:
        return _grid.trapezoid_weights(self.y_grid)


def track_branches(model: ConfinementModel, x_grid, y_grid, K: int, gap_tol: float = 1e-8,
                   threads: int = 1) -> list[TermBranch]:
    """Solve at every x node and follow the K lowest levels by overlap."""
    x = np.asarray(x_grid, dtype=float)
    y = np.asarray(y_grid, dtype=float)
    n_levels = min(K + 1, y.size - 2)

    def solve(xi):
        return solve_transverse_at_x(model, xi, y, n_levels)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            sols = list(pool.map(solve, x))
    else:
        sols = [solve(xi) for xi in x]
    eps = np.array([s[0] for s in sols])
    w = np.array([s[1] for s in sols])
    gaps = np.diff(eps, axis=1)
    if gaps.size and gaps.min() < gap_tol:
        i, j = np.unravel_index(np.argmin(gaps), gaps.shape)
        raise DegenerateTerm(f"levels {j + 1} and {j + 2} at x={x[i]:.6g} are {gaps[i, j]:.3e} apart")

    wts = _grid.trapezoid_weights(y)
    for i in range(1, x.size):
        overlap = (w[i - 1, :K] * wts) @ w[i].T
        mag = np.abs(overlap)
        order = np.argsort(-mag, axis=1)
        best = order[:, 0]
        if mag.shape[1] > 1:
            second = mag[np.arange(K), order[:, 1]]
            if np.any(mag[np.arange(K), best] - second < 0.1):
                raise OverlapAmbiguity(f"ambiguous branch matching between x={x[i - 1]:.6g} and x={x[i]:.6g}")
        if not np.array_equal(best, np.arange(K)):
            raise OverlapAmbiguity(f"branch order changed at x={x[i]:.6g}")
        signs = np.sign(overlap[np.arange(K), best])
        w[i, :K] *= signs[:, None]

    branches = []
    for k in range(K):
        below = float(gaps[:, k - 1].min()) if k > 0 else np.inf
        above = float(gaps[:, k].min()) if k < gaps.shape[1] else np.inf
        branches.append(TermBranch(k + 1, x, y, eps[:, k].copy(), w[:, k].copy(), below, above))
    return branches


@dataclass(frozen=True)
class BranchDerivatives:
    deps: np.ndarray
    dw: np.ndarray
    raw_overlap: np.ndarray


def branch_x_derivatives(branch: TermBranch) -> BranchDerivatives:
    """x-derivatives of a tracked branch.

    The eigenvector derivative is the finite-difference derivative with its
    component along ``w`` removed, so ``<w, dw> = 0`` holds exactly as it does
    for the continuous family.  ``raw_overlap`` keeps the finite-difference
    value of ``<w, dw>`` (an O(dx^2) quantity) as a diagnostic.
    """
    x = branch.x_grid
    if x.size < 3:
        raise GridMismatch("need at least 3 x nodes")
    dx = _grid.spacing(x, "x_grid")
    deps = _grid.d1(branch.eps, dx)
    dw = _grid.d1(branch.w, dx, axis=0)
    wts = branch.weights
    raw = np.einsum("ij,ij,j->i", branch.w, dw, wts)
    dw = dw - raw[:, None] * branch.w
    return BranchDerivatives(deps, dw, raw)
