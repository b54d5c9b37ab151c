"""Bloch reduction for a fast-oscillating periodic potential.

The frozen problem at slow position ``x`` is ``-u'' + v(U xi, x) u = E u``
with the Bloch condition ``u(xi + 2 pi / U) = exp(2 pi i P) u(xi)``, where
``U = dPhi/dx`` and ``P = p / U`` is the quasimomentum.  The kinetic symbol
is ``(p - iU d/dy)^2`` (no factor one half).

Two independent solvers are provided: a plane-wave (Fourier) eigensolver and
the transfer-matrix discriminant ``tr M(E)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline
from scipy.linalg import eigh
from scipy.optimize import brentq

from .errors import ConvergenceError, StickingBands, TruncationError
from .reduction import OperatorFamily


def _as_callable(f):
    if callable(f):
        return f
    c = float(f)
    return lambda x: c


@dataclass(frozen=True)
class PeriodicPotential:
    """``v(y, x) = sum_n vhat_n(x) exp(i n y)`` with phase derivative ``U(x)``.

    ``coeffs(x)`` returns the array ``vhat_{-N..N}``.  ``dU`` is the slow
    derivative of ``U`` (the second derivative of the phase), used by the
    first-order operator ``H1``.
    """

    coeffs: Callable
    U: Callable | float = 1.0
    dU: Callable | float = 0.0
    real: bool = True

    @classmethod
    def mathieu(cls, a: float, U=1.0, dU=0.0) -> "PeriodicPotential":
        """``2 a cos y``."""
        return cls(lambda x: np.array([a, 0.0, a], dtype=complex), U, dU)

    @classmethod
    def constant(cls, c: float, U=1.0) -> "PeriodicPotential":
        return cls(lambda x: np.array([c], dtype=complex), U)

    @classmethod
    def free(cls, U=1.0) -> "PeriodicPotential":
        return cls.constant(0.0, U)

    def vhat(self, x) -> np.ndarray:
        c = np.asarray(self.coeffs(x), dtype=complex)
        if c.ndim != 1 or c.size % 2 == 0:
            raise ValueError("Fourier coefficients must be indexed -N..N")
        if self.real and not np.allclose(c, c[::-1].conj(), atol=1e-14):
            raise ValueError("coefficients of a real potential must be conjugate symmetric")
        return c

    def Ux(self, x) -> float:
        u = float(_as_callable(self.U)(x))
        if u == 0:
            raise ValueError("phase derivative U must not vanish")
        return u

    def dUx(self, x) -> float:
        return float(_as_callable(self.dU)(x))

    def __call__(self, y, x):
        c = self.vhat(x)
        nf = (c.size - 1) // 2
        n = np.arange(-nf, nf + 1)
        vals = np.exp(1j * np.multiply.outer(np.asarray(y, dtype=float), n)) @ c
        return vals.real if self.real else vals


def quasimomentum(p, x, U) -> np.ndarray:
    """``P = p / U(x)``."""
    u = np.asarray(_as_callable(U)(x) if callable(U) else U, dtype=float)
    if np.any(u == 0):
        raise ValueError("U must not vanish")
    return np.asarray(p, dtype=float) / u


def _plane_wave_matrix(pot: PeriodicPotential, x: float, P: float, n_pw: int):
    U = pot.Ux(x)
    c = pot.vhat(x)
    nf = (c.size - 1) // 2
    m0 = -int(np.round(P))
    n = m0 + np.arange(-n_pw, n_pw + 1)
    M = np.diag(U**2 * (P + n) ** 2).astype(complex)
    diff = n[:, None] - n[None, :]
    mask = np.abs(diff) <= nf
    M[mask] += c[diff[mask] + nf]
    return M, n


def _fourier_solve(pot, x, P, K, n_pw, vectors):
    M, n = _plane_wave_matrix(pot, x, P, n_pw)
    if K > M.shape[0]:
        raise TruncationError("more bands requested than plane waves")
    if vectors:
        E, V = eigh(M, subset_by_index=(0, K - 1))
        return E, V.T, n
    return eigh(M, eigvals_only=True, subset_by_index=(0, K - 1)), None, n


def bloch_bands_fourier(pot: PeriodicPotential, x: float, P: float, K: int, n_pw: int = 16,
                        check: bool = True, return_vectors: bool = False):
    """K lowest Bloch energies at quasimomentum ``P``.

    With ``check`` the last requested band must move by less than 1e-8 when
    the plane-wave order doubles.  With ``return_vectors`` the Fourier
    coefficients ``c_n`` (rows) and their indices ``n`` are also returned,
    so that ``chi0(y) = sum_n c_n exp(i n y)``.
    """
    E, V, n = _fourier_solve(pot, x, P, K, n_pw, return_vectors)
    if check:
        E2, _, _ = _fourier_solve(pot, x, P, K, 2 * n_pw, False)
        if abs(E2[-1] - E[-1]) >= 1e-8:
            raise TruncationError(f"band {K} moves by {abs(E2[-1] - E[-1]):.2e} when N_pw doubles")
    if return_vectors:
        return E, V, n
    return E


def bloch_discriminant_oracle(pot: PeriodicPotential, x: float, E: float, rtol: float = 1e-12) -> float:
    """Trace of the monodromy matrix over one period ``2 pi / U``."""
    if not pot.real:
        raise ValueError("the discriminant oracle needs a real potential")
    U = pot.Ux(x)
    c = pot.vhat(x)
    nf = (c.size - 1) // 2
    n = np.arange(-nf, nf + 1)

    def rhs(xi, s):
        v = float(np.real(np.exp(1j * n * U * xi) @ c))
        return [s[1], (v - E) * s[0], s[3], (v - E) * s[2]]

    sol = solve_ivp(rhs, (0.0, 2 * np.pi / abs(U)), [1.0, 0.0, 0.0, 1.0], method="DOP853",
                    rtol=rtol, atol=1e-14)
    if not sol.success:
        raise ConvergenceError(f"monodromy integration failed: {sol.message}")
    end = sol.y[:, -1]
    return float(end[0] + end[3])


def refine_edge_discriminant(pot: PeriodicPotential, x: float, E_guess: float, sign: float,
                             halfwidth: float) -> float:
    """Root of ``tr M(E) = 2 sign`` bracketed in ``E_guess +- halfwidth``."""
    f = lambda E: bloch_discriminant_oracle(pot, x, E) - 2 * sign
    lo, hi = E_guess - halfwidth, E_guess + halfwidth
    flo, fhi = f(lo), f(hi)
    if flo * fhi > 0:
        raise ConvergenceError("no discriminant sign change around the band edge")
    return brentq(f, lo, hi, xtol=1e-14, rtol=1e-15)


def discriminant_band_edges(pot: PeriodicPotential, x: float, n_bands: int, n_pw: int = 16):
    """Band edges from the discriminant, each root isolated near its plane-wave estimate.

    Returns an array ``(n_bands, 2)`` of lower and upper edges.
    """
    e0 = bloch_bands_fourier(pot, x, 0.0, n_bands + 1, n_pw)
    eh = bloch_bands_fourier(pot, x, 0.5, n_bands + 1, n_pw)
    # edges at P = 0 have tr M = 2, at P = 1/2 tr M = -2
    cands = sorted([(e, 1.0) for e in e0] + [(e, -1.0) for e in eh])
    energies = np.array([c[0] for c in cands])
    out = np.empty((n_bands, 2))
    for nu in range(n_bands):
        pair = [(e0[nu], 1.0), (eh[nu], -1.0)]
        edges = []
        for e, s in pair:
            others = np.abs(energies - e)
            others = others[others > 0]
            gap = others.min() if others.size else 1.0
            edges.append(refine_edge_discriminant(pot, x, e, s, min(1e-3, 0.45 * gap)))
        out[nu] = sorted(edges)
    return out


@dataclass(frozen=True)
class BlochBand:
    """Dispersion of band ``nu`` on a quasimomentum grid times x grid."""

    nu: int
    P_grid: np.ndarray
    x_grid: np.ndarray
    dispersion: np.ndarray  # (nP, nx)
    E_minus: np.ndarray
    E_plus: np.ndarray
    gap_below: float
    gap_above: float
    U: Callable | float = 1.0

    def __post_init__(self):
        # the dispersion is even and 1-periodic in P, so it is interpolated on
        # [0, 1/2] where band edges sit at the interval ends, never inside
        P = np.asarray(self.P_grid)
        keep = P <= 0.5
        if not (np.any(P == 0.0) and np.any(P == 0.5)):
            raise ValueError("P grid must contain 0 and 1/2")
        splines = [CubicSpline(P[keep], self.dispersion[keep, j]) for j in range(self.x_grid.size)]
        object.__setattr__(self, "_splines", splines)

    def energy(self, P, x) -> np.ndarray:
        """Cubic in P (extended by evenness and periodicity), linear in x."""
        P = np.mod(np.asarray(P, dtype=float), 1.0)
        P = np.where(P > 0.5, 1.0 - P, P)
        xg = self.x_grid
        x = float(x)
        if xg.size == 1:
            return self._splines[0](P)
        if not xg[0] <= x <= xg[-1]:
            raise ValueError("x outside the tabulated range")
        j = min(int(np.searchsorted(xg, x, side="right")) - 1, xg.size - 2)
        t = (x - xg[j]) / (xg[j + 1] - xg[j])
        return (1 - t) * self._splines[j](P) + t * self._splines[j + 1](P)


def default_P_grid(n: int = 128) -> np.ndarray:
    """Chebyshev-Lobatto nodes on ``[0, 1/2]``, clustered at the band edges."""
    return 0.25 * (1 - np.cos(np.pi * np.arange(n + 1) / n))


def bloch_band_table(pot: PeriodicPotential, x_grid, K: int, P_grid=None, n_pw: int = 16) -> list[BlochBand]:
    """The K lowest bands (plus one above for gap data) on shared grids."""
    x = np.atleast_1d(np.asarray(x_grid, dtype=float))
    P = default_P_grid() if P_grid is None else np.asarray(P_grid, dtype=float)
    if P[0] != 0.0 or P[-1] >= 1.0:
        raise ValueError("P grid must start at 0 and stay below 1")
    if not pot.real:
        raise ValueError("band tables assume a real potential (even dispersion)")
    table = np.empty((P.size, x.size, K + 1))
    for j, xv in enumerate(x):
        for i, Pv in enumerate(P):
            table[i, j] = bloch_bands_fourier(pot, xv, Pv, K + 1, n_pw, check=(i == 0 or Pv == 0.5))
    bands = []
    for k in range(K):
        disp = table[:, :, k]
        below = np.inf if k == 0 else float(np.min(disp - table[:, :, k - 1]))
        above = float(np.min(table[:, :, k + 1] - disp))
        bands.append(BlochBand(k + 1, P, x, disp.copy(), disp.min(axis=0), disp.max(axis=0), below, above, pot.U))
    return bands


def band_gap_check(bands: list[BlochBand], nu: int, gap_tol: float) -> float:
    """Minimal distance from band ``nu`` to its neighbours; raises if below ``gap_tol``."""
    b = bands[nu - 1]
    gap = min(b.gap_below, b.gap_above)
    if gap < gap_tol:
        raise StickingBands(f"band {nu} comes within {gap:.3e} of a neighbour")
    return gap


def effective_hamiltonian_bloch(band: BlochBand, p, x, U=None) -> np.ndarray:
    """``E(P, x) + p^2 - U^2 P^2`` with ``P = p / U``; equals ``E(P, x)`` in one dimension."""
    Uf = band.U if U is None else U
    u = float(_as_callable(Uf)(x))
    P = quasimomentum(p, x, u)
    return band.energy(P, x) + np.asarray(p) ** 2 - (u * P) ** 2


def _periodic_derivative(f: np.ndarray, order: int) -> np.ndarray:
    k = np.fft.fftfreq(f.size, 1.0 / f.size)
    return np.fft.ifft((1j * k) ** order * np.fft.fft(f))


class BlochTerm:
    """Term protocol and operator family for one Bloch band.

    Positions are slow coordinates ``x``.  ``chi0`` lives on the periodic
    grid ``y_j = 2 pi j / n``; its gauge is parallel transported: values at
    neighbouring ``(p, x)`` used for finite differences are phase-aligned
    with the centre value, and the centre value has its plane-wave
    coefficient closest to ``-P`` real positive.
    """

    def __init__(self, pot: PeriodicPotential, nu: int, n_y: int = 128, n_pw: int = 16,
                 positions=(0.0,), step: float = 1e-4):
        self.pot = pot
        self.nu = nu
        self.y = 2 * np.pi * np.arange(n_y) / n_y
        self.n_pw = n_pw
        self.positions = list(positions)
        self.step = step

    # band data

    def _coeffs(self, p, x):
        P = p / self.pot.Ux(x)
        E, V, n = bloch_bands_fourier(self.pot, x, P, self.nu, self.n_pw, check=False, return_vectors=True)
        return E[-1], V[-1], n

    def _field(self, c, n):
        vals = np.exp(1j * np.multiply.outer(self.y, n)) @ c
        return vals / np.sqrt(2 * np.pi / self.y.size * np.sum(np.abs(vals) ** 2))

    def chi0(self, p, x, ref=None):
        _, c, n = self._coeffs(p, x)
        f = self._field(c, n)
        if ref is None:
            P = p / self.pot.Ux(x)
            k = int(np.argmin(np.abs(n + P)))
            ph = c[k] / abs(c[k]) if abs(c[k]) > 1e-8 else c[np.argmax(np.abs(c))] / np.max(np.abs(c))
        else:
            ov = np.vdot(ref, f)
            ph = ov / abs(ov)
        return f / ph

    def _diff(self, p, x, dp, dx):
        centre = self.chi0(p, x)
        plus = self.chi0(p + dp, x + dx, ref=centre)
        minus = self.chi0(p - dp, x - dx, ref=centre)
        return (plus - minus) / (2 * self.step)

    def dchi0_dx(self, p, x):
        return self._diff(p, x, 0.0, self.step)

    def dchi0_dp(self, p, x):
        return self._diff(p, x, self.step, 0.0)

    # effective Hamiltonian (direct plane-wave values)

    def value(self, p, x):
        return self._coeffs(p, x)[0]

    def dp(self, p, x):
        s = self.step
        return (self.value(p + s, x) - self.value(p - s, x)) / (2 * s)

    def dx(self, p, x):
        s = self.step
        return (self.value(p, x + s) - self.value(p, x - s)) / (2 * s)

    # frozen operators on the periodic grid

    def family(self) -> OperatorFamily:
        pot = self.pot
        y = self.y

        def apply_H0(p, x, f):
            U = pot.Ux(x)
            fy = _periodic_derivative(f, 1)
            fyy = _periodic_derivative(f, 2)
            return p**2 * f - 2j * p * U * fy - U**2 * fyy + pot(y, x) * f

        def apply_dH0_dp(p, x, f):
            return 2 * (p * f - 1j * pot.Ux(x) * _periodic_derivative(f, 1))

        def apply_H1(p, x, f):
            return -pot.dUx(x) * _periodic_derivative(f, 1)

        def matrix_H0(p, x):
            eye = np.eye(y.size, dtype=complex)
            return np.array([apply_H0(p, x, col) for col in eye]).T

        return OperatorFamily(2 * np.pi / y.size, apply_H0, apply_dH0_dp, matrix_H0, apply_H1)


def chi0_bloch(pot: PeriodicPotential, nu: int, p: float, x: float, y_grid_size: int = 128,
               n_pw: int = 16) -> tuple[np.ndarray, np.ndarray]:
    """``(y, chi0)`` on one fast period, unit norm under the periodic trapezoid rule."""
    term = BlochTerm(pot, nu, y_grid_size, n_pw)
    return term.y, term.chi0(p, x)
