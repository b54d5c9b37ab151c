"""Effective Hamiltonian, first corrections and the reduced 1D problem.

The correction formulas work on a small protocol so that waveguide branches
and Bloch bands share one implementation:

* a *term* provides ``chi0(p, where)``, ``dchi0_dx(p, where)``,
  ``dchi0_dp(p, where)`` and an iterable ``positions``;
* an *effective Hamiltonian* provides ``value``, ``dp`` and ``dx`` with the
  same ``(p, where)`` arguments;
* an :class:`OperatorFamily` applies the frozen operators to transverse
  fields at ``(p, where)``.

``where`` is whatever locates a slow position for that term: a grid index
for waveguide branches, a coordinate value for Bloch bands.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import eigh_tridiagonal

from . import _grid
from .errors import GridMismatch, NonHermitian, RegimeMismatch, SolvabilityError
from .symbolcalc import P_SAMPLES
from .transverse import RigidWall, TermBranch, branch_x_derivatives


class Regime(str, enum.Enum):
    SHORT = "ShortWave"
    MEDIUM = "MediumWave"
    LONG = "LongWave"
    ULTRASHORT = "UltraShortWave"


_EXPONENTS = {Regime.SHORT: 1.0, Regime.MEDIUM: 0.5, Regime.LONG: 0.0, Regime.ULTRASHORT: 1.25}


def classify_regime(mu: float, h: float) -> Regime:
    """Nearest canonical relation ``h = mu**e`` in log space."""
    if not 0 < mu < 1:
        raise ValueError("mu must lie in (0, 1)")
    if not h > 0:
        raise ValueError("h must be positive")
    if h > 1 or h <= mu**1.5:
        raise RegimeMismatch(f"h={h:g} outside (mu^(3/2), 1] for mu={mu:g}")
    e = np.log(h) / np.log(mu)
    return min(_EXPONENTS, key=lambda r: (round(abs(e - _EXPONENTS[r]), 12), abs(_EXPONENTS[r] - 1.0)))


def canonical_h(mu: float, regime: Regime | str) -> float:
    return float(mu ** _EXPONENTS[Regime(regime)])


def geometric_potential(k) -> np.ndarray:
    """Curvature-induced potential ``-k**2 / 8``."""
    return -np.asarray(k, dtype=float) ** 2 / 8


class EffectiveHamiltonian:
    """``p**2/2 + v_ext(x) + eps(x)`` on one waveguide branch."""

    def __init__(self, branch: TermBranch, v_ext=None):
        v = np.zeros_like(branch.eps) if v_ext is None else np.asarray(v_ext, dtype=float)
        if v.shape != branch.eps.shape:
            raise GridMismatch("v_ext must be sampled on the branch x grid")
        self.x_grid = branch.x_grid
        self.v_ext = v
        self.eps = branch.eps
        self.potential = v + branch.eps
        self._dpot = _grid.d1(self.potential, _grid.spacing(self.x_grid, "x_grid"))

    def __call__(self, p, x):
        return 0.5 * np.asarray(p) ** 2 + np.interp(x, self.x_grid, self.potential)

    def value(self, p, i):
        return 0.5 * p**2 + self.potential[i]

    def dp(self, p, i):
        return p

    def dx(self, p, i):
        return self._dpot[i]


def effective_hamiltonian(branch: TermBranch, v_ext=None) -> EffectiveHamiltonian:
    return EffectiveHamiltonian(branch, v_ext)


class BranchTerm:
    """Term protocol for a tracked waveguide branch (real, p-independent)."""

    def __init__(self, branch: TermBranch):
        self.branch = branch
        self._dw = branch_x_derivatives(branch).dw
        self.positions = range(branch.x_grid.size)

    def chi0(self, p, i):
        return self.branch.w[i, 1:-1].astype(complex)

    def dchi0_dx(self, p, i):
        return self._dw[i, 1:-1].astype(complex)

    def dchi0_dp(self, p, i):
        return np.zeros(self.branch.y_grid.size - 2, dtype=complex)


def _as_term(branch):
    return BranchTerm(branch) if isinstance(branch, TermBranch) else branch


@dataclass
class OperatorFamily:
    """Frozen operators acting on transverse fields.

    ``weight`` is the quadrature weight of the (uniform) transverse grid, so
    ``inner(u, v) = weight * sum(conj(u) v)``.  ``matrix_H0`` returns the dense
    matrix of ``H0`` used by the deflated solve.
    """

    weight: float
    apply_H0: Callable
    apply_dH0_dp: Callable
    matrix_H0: Callable
    apply_H1: Callable | None = None
    dchi0_dt: Callable | None = None

    def inner(self, u, v):
        return self.weight * np.vdot(u, v)

    def symmetry_defect(self, p, where, rng=None, trials=3) -> float:
        rng = np.random.default_rng(0) if rng is None else rng
        worst = 0.0
        n = self.matrix_H0(p, where).shape[0]
        for _ in range(trials):
            u = rng.normal(size=n) + 1j * rng.normal(size=n)
            v = rng.normal(size=n) + 1j * rng.normal(size=n)
            a = self.inner(u, self.apply_H0(p, where, v))
            b = self.inner(self.apply_H0(p, where, u), v)
            worst = max(worst, abs(a - b) / max(1.0, abs(a)))
        return worst


def waveguide_family(branch: TermBranch, model, v_ext=None) -> OperatorFamily:
    """Frozen operator ``p^2/2 - (1/2) d_y^2 + v_int(x, y) + v_ext(x)`` on interior y nodes."""
    x, y = branch.x_grid, branch.y_grid
    dy = _grid.spacing(y, "y_grid")
    n = y.size - 2
    v_ext = np.zeros(x.size) if v_ext is None else np.asarray(v_ext, dtype=float)
    if isinstance(model, RigidWall):
        lo, hi = model.walls(x)
        if np.ptp(lo) > 0 or np.ptp(hi) > 0:
            raise ValueError("x-dependent rigid walls need a mapped family; use a soft confinement")
        vint = np.zeros((x.size, n))
    else:
        yi = y[1:-1]
        vint = np.array([model.potential(np.full(n, xi), yi) for xi in x])
    diag0 = 1.0 / dy**2
    off = -0.5 / dy**2

    def apply_H0(p, i, f):
        out = (0.5 * p**2 + v_ext[i] + diag0 + vint[i]) * f
        out[1:] += off * f[:-1]
        out[:-1] += off * f[1:]
        return out

    def matrix_H0(p, i):
        return (np.diag(0.5 * p**2 + v_ext[i] + diag0 + vint[i])
                + off * (np.eye(n, k=1) + np.eye(n, k=-1))).astype(complex)

    return OperatorFamily(dy, apply_H0, lambda p, i, f: p * f, matrix_H0)


@dataclass
class L1Result:
    """First correction sampled on ``p_values`` x ``positions``.

    ``total = h1 + time + transport`` where ``time`` is ``-i <chi0, d chi0/dt>``
    with the derivative taken along the effective flow and ``transport`` is
    ``-i <chi0, (dH0/dp - dH_eff/dp) d_x chi0>``.
    """

    p_values: np.ndarray
    positions: list
    total: np.ndarray
    h1: np.ndarray
    time: np.ndarray
    transport: np.ndarray


def _rhs_pieces(term, family, heff, p, where):
    chi = term.chi0(p, where)
    chi_x = term.dchi0_dx(p, where)
    chi_p = term.dchi0_dp(p, where)
    chi_t = family.dchi0_dt(p, where) if family.dchi0_dt is not None else np.zeros_like(chi)
    h1chi = family.apply_H1(p, where, chi) if family.apply_H1 is not None else np.zeros_like(chi)
    return chi, chi_x, chi_p, chi_t, h1chi


def correction_L1(branch, family: OperatorFamily, heff, p=0.0) -> L1Result:
    """First correction ``L1(p, x)`` at every position of the term."""
    term = _as_term(branch)
    ps = np.atleast_1d(np.asarray(p, dtype=float))
    pos = list(term.positions)
    shape = (ps.size, len(pos))
    h1, time, transport = (np.zeros(shape, dtype=complex) for _ in range(3))
    for a, pv in enumerate(ps):
        for b, where in enumerate(pos):
            chi, chi_x, chi_p, chi_t, h1chi = _rhs_pieces(term, family, heff, pv, where)
            hp, hx = heff.dp(pv, where), heff.dx(pv, where)
            flow = chi_t + hp * chi_x - hx * chi_p
            h1[a, b] = family.inner(chi, h1chi)
            time[a, b] = -1j * family.inner(chi, flow)
            transport[a, b] = -1j * family.inner(chi, family.apply_dH0_dp(pv, where, chi_x) - hp * chi_x)
    total = h1 + time + transport
    if not np.all(np.isfinite(total)):
        raise ValueError("non-finite L1 samples")
    return L1Result(ps, pos, total, h1, time, transport)


def correction_chi1(branch, family: OperatorFamily, heff, L1: L1Result,
                    solvability_tol: float = 1e-8) -> np.ndarray:
    """Solve ``(H0 - H_eff) chi1 = F1 - H1 chi0 + chi0 L1`` with ``<chi0, chi1> = 0``.

    Returns an array of shape ``(len(p_values), len(positions), n_transverse)``.
    """
    term = _as_term(branch)
    out = None
    for a, pv in enumerate(L1.p_values):
        for b, where in enumerate(L1.positions):
            chi, chi_x, chi_p, chi_t, h1chi = _rhs_pieces(term, family, heff, pv, where)
            f1 = 1j * chi_t + 1j * family.apply_dH0_dp(pv, where, chi_x) - 1j * heff.dx(pv, where) * chi_p
            rhs = f1 - h1chi + chi * L1.total[a, b]
            defect = abs(family.inner(chi, rhs))
            if defect > solvability_tol:
                raise SolvabilityError(f"<chi0, rhs> = {defect:.3e} at p={pv:g}, position {where}")
            rhs = rhs - chi * family.inner(chi, rhs)
            M = family.matrix_H0(pv, where) - heff.value(pv, where) * np.eye(chi.size)
            n = chi.size
            K = np.zeros((n + 1, n + 1), dtype=complex)
            K[:n, :n] = M
            K[:n, n] = chi
            K[n, :n] = chi.conj()
            try:
                sol = np.linalg.solve(K, np.concatenate([rhs, [0.0]]))
            except np.linalg.LinAlgError as exc:
                raise SolvabilityError("singular deflated system") from exc
            if out is None:
                out = np.zeros((L1.p_values.size, len(L1.positions), n), dtype=complex)
            out[a, b] = sol[:n]
    return out


def fit_p_polynomial(samples: np.ndarray, p_values, degree: int = 2):
    """Least-squares polynomial in p along axis 0.

    Returns ``(coeffs, residual)`` where ``coeffs[k]`` multiplies ``p**k`` and
    ``residual`` is the max deviation of the fit at the sample points.
    """
    p = np.asarray(p_values, dtype=float)
    samples = np.asarray(samples)
    V = np.vander(p, degree + 1, increasing=True)
    flat = samples.reshape(p.size, -1)
    coeffs, *_ = np.linalg.lstsq(V, flat, rcond=None)
    resid = float(np.max(np.abs(V @ coeffs - flat), initial=0.0))
    return coeffs.reshape((degree + 1,) + samples.shape[1:]), resid


@dataclass
class EffectiveModel:
    """Reduced data for one term, ready for regime-dependent assembly."""

    nu: int
    x_grid: np.ndarray
    mu: float
    h: float
    regime: Regime
    v_ext: np.ndarray
    eps: np.ndarray
    L1_coeffs: np.ndarray  # (3, nx): l0 + l1 p + l2 p^2
    L1_fit_residual: float = 0.0
    G: np.ndarray | None = None
    heff: object | None = field(default=None, repr=False)

    def L1(self, p, i=slice(None)):
        c = self.L1_coeffs[:, i]
        return c[0] + c[1] * p + c[2] * p**2


def build_effective_model(branch: TermBranch, v_ext=None, mu: float = 0.1, h: float | None = None,
                          regime: Regime | str | None = None, family: OperatorFamily | None = None,
                          curvature=None, p_scale: float = 1.0) -> EffectiveModel:
    """Collect H_eff, L1 and G for a waveguide branch.

    Either ``h`` or a ``regime`` override must be given; an override fixes
    ``h`` to the canonical value of that regime.
    """
    if h is None:
        if regime is None:
            raise ValueError("give h or a regime override")
        h = canonical_h(mu, regime)
    tag = classify_regime(mu, h)
    if regime is not None and Regime(regime) != tag:
        raise RegimeMismatch(f"h={h:g} classifies as {tag.value}, not {Regime(regime).value}")
    heff = EffectiveHamiltonian(branch, v_ext)
    nx = branch.x_grid.size
    coeffs = np.zeros((3, nx), dtype=complex)
    resid = 0.0
    if family is not None:
        ps = P_SAMPLES * p_scale
        L1 = correction_L1(branch, family, heff, ps)
        coeffs, resid = fit_p_polynomial(L1.total, ps, 2)
    G = np.zeros(nx) if curvature is None else geometric_potential(curvature)
    return EffectiveModel(branch.nu, branch.x_grid, mu, h, tag, heff.v_ext, branch.eps.copy(),
                          coeffs, resid, G, heff)


@dataclass
class EssentialHamiltonian:
    """``kinetic * (-ih d/dx)^2 + c1 * (-ih d/dx) + potential`` on an x grid.

    Energies of this operator map back to the unscaled problem through
    ``zero_order + (mu / h)**2 * E`` (identity when ``mu`` is None).
    """

    x_grid: np.ndarray
    h: float
    potential: np.ndarray
    kinetic: np.ndarray | float = 0.5
    c1: np.ndarray | float = 0.0
    zero_order: complex = 0.0
    mu: float | None = None
    regime: Regime | None = None

    def __post_init__(self):
        self.x_grid = np.asarray(self.x_grid, dtype=float)
        n = self.x_grid.size
        self.potential = np.broadcast_to(np.asarray(self.potential), (n,)).copy()
        self.kinetic = np.broadcast_to(np.asarray(self.kinetic), (n,)).copy()
        self.c1 = np.broadcast_to(np.asarray(self.c1, dtype=complex), (n,)).copy()
        for name in ("potential", "kinetic", "c1"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"non-finite {name} samples")

    def to_original_energy(self, E):
        scale = 1.0 if self.mu is None else (self.mu / self.h) ** 2
        return self.zero_order + scale * np.asarray(E)


def assemble_essential(model: EffectiveModel, tol: float = 1e-8) -> EssentialHamiltonian:
    """Rescaled reduced operator for the model's mu-h regime."""
    mu, h = model.mu, model.h
    s = h**2 / mu**2
    v_eff1 = s * (model.v_ext - model.v_ext[0])
    lam = s * (model.eps - model.eps[0])
    zero = model.v_ext[0] + model.eps[0]
    l0, l1, l2 = model.L1_coeffs
    G = np.zeros_like(v_eff1) if model.G is None else model.G
    if model.regime == Regime.ULTRASHORT and model.L1_fit_residual > tol:
        raise RegimeMismatch(f"L1 is not quadratic in p (fit residual {model.L1_fit_residual:.2e})")
    if model.regime == Regime.LONG and np.max(np.abs(l0)) > tol:
        raise RegimeMismatch("long-wave assembly needs L1(x, 0) = 0")
    potential = v_eff1 + lam + h**2 * G + (h**2 / mu) * l0
    if np.max(np.abs(potential.imag)) > tol:
        raise NonHermitian("complex effective potential")
    return EssentialHamiltonian(model.x_grid, h, potential.real, 0.5 + mu * l2.real, h * l1, zero,
                                mu, model.regime)


def _matrix(ess: EssentialHamiltonian):
    x = ess.x_grid
    dx = _grid.spacing(x, "x_grid")
    h = ess.h
    K = ess.kinetic[1:-1]
    c = ess.c1[1:-1]
    V = ess.potential[1:-1]
    diag = 2 * h**2 * K / dx**2 + V
    upper = -h**2 * K[:-1] / dx**2 - 1j * h * c[:-1] / (2 * dx)
    lower = -h**2 * K[1:] / dx**2 + 1j * h * c[1:] / (2 * dx)
    return diag.astype(complex), upper, lower


def solve_reduced_stationary(ess: EssentialHamiltonian, count: int | None = None,
                             window: tuple[float, float] | None = None, herm_tol: float = 1e-10):
    """Eigenpairs of the essential operator with Dirichlet ends.

    Returns ``(E, psi)``; ``psi`` has shape ``(n_states, nx)`` with zero end
    values and unit trapezoid norm.
    """
    if (count is None) == (window is None):
        raise ValueError("give exactly one of count or window")
    diag, upper, lower = _matrix(ess)
    scale = max(1.0, np.max(np.abs(diag)), np.max(np.abs(upper), initial=0.0))
    if np.max(np.abs(upper - lower.conj()), initial=0.0) > herm_tol * scale or np.max(np.abs(diag.imag)) > herm_tol * scale:
        raise NonHermitian("essential operator is not Hermitian on this grid")
    n = diag.size
    if count is not None and not 1 <= count <= n:
        raise ValueError(f"count must lie in [1, {n}]")
    kw = dict(select="i", select_range=(0, count - 1)) if count else dict(select="v", select_range=window)
    if np.max(np.abs(upper.imag), initial=0.0) == 0.0:
        E, vec = eigh_tridiagonal(diag.real, upper.real, **kw)
    else:
        # diagonal unitary gauge makes the Hermitian tridiagonal matrix real
        phase = np.exp(-1j * np.concatenate([[0.0], np.cumsum(np.angle(upper))]))
        E, vec = eigh_tridiagonal(diag.real, np.abs(upper), **kw)
        vec = phase[:, None] * vec
    psi = np.zeros((E.size, ess.x_grid.size), dtype=vec.dtype)
    psi[:, 1:-1] = vec.T
    wts = _grid.trapezoid_weights(ess.x_grid)
    psi /= np.sqrt(np.abs(psi) ** 2 @ wts)[:, None]
    return E, psi
