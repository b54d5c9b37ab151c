"""Semiclassical solution of reduced 1D problems.

Hamilton's equations use the standard signs ``x' = H_p``, ``p' = -H_x`` so
that positive momentum moves to the right.  Trajectories carry the action
``S' = p H_p - H`` and the Jacobian ``J = dx/dx0`` from the variational
system.  All right-hand sides are vectorized over a fan of trajectories.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import quad, solve_ivp
from scipy.interpolate import CubicSpline, PchipInterpolator
from scipy.optimize import brentq, minimize_scalar

from .errors import (
    CausticEncountered,
    ConvergenceError,
    MultiWell,
    NoSolution,
    NonMonotoneFan,
    NonUnitaryMonodromy,
)


@dataclass
class HamiltonianField:
    """``H(p, x)`` with optional analytic derivatives and transport generator.

    Missing derivatives are replaced by central differences with ``step``.
    ``L1(p, x)`` returns a scalar or an ``r x r`` complex matrix.
    """

    H: Callable
    H_p: Callable | None = None
    H_x: Callable | None = None
    H_pp: Callable | None = None
    H_px: Callable | None = None
    H_xx: Callable | None = None
    L1: Callable | None = None
    step: float = 1e-4

    @classmethod
    def potential(cls, V, dV=None, d2V=None, L1=None, step=1e-4) -> "HamiltonianField":
        """``p^2/2 + V(x)``."""
        one = lambda p, x: np.ones_like(np.asarray(p, dtype=float) + np.asarray(x, dtype=float))
        zero = lambda p, x: 0.0 * one(p, x)
        return cls(
            lambda p, x: 0.5 * np.asarray(p) ** 2 + V(x),
            lambda p, x: np.asarray(p, dtype=float) + 0.0 * np.asarray(x, dtype=float),
            (lambda p, x: dV(x) + 0.0 * np.asarray(p)) if dV is not None else None,
            one,
            zero,
            (lambda p, x: d2V(x) + 0.0 * np.asarray(p)) if d2V is not None else None,
            L1,
            step,
        )

    @classmethod
    def from_samples(cls, x_grid, v_samples, L1=None) -> "HamiltonianField":
        """``p^2/2 + V`` with ``V`` a cubic spline through samples."""
        spl = CubicSpline(np.asarray(x_grid, dtype=float), np.asarray(v_samples, dtype=float))
        return cls.potential(spl, spl.derivative(1), spl.derivative(2), L1)

    def dp(self, p, x):
        if self.H_p is not None:
            return self.H_p(p, x)
        s = self.step
        return (self.H(p + s, x) - self.H(p - s, x)) / (2 * s)

    def dx(self, p, x):
        if self.H_x is not None:
            return self.H_x(p, x)
        s = self.step
        return (self.H(p, x + s) - self.H(p, x - s)) / (2 * s)

    def hessian(self, p, x):
        s = self.step
        pp = self.H_pp(p, x) if self.H_pp is not None else (self.dp(p + s, x) - self.dp(p - s, x)) / (2 * s)
        px = self.H_px(p, x) if self.H_px is not None else (self.dp(p, x + s) - self.dp(p, x - s)) / (2 * s)
        xx = self.H_xx(p, x) if self.H_xx is not None else (self.dx(p, x + s) - self.dx(p, x - s)) / (2 * s)
        return pp, px, xx

    def derivative_discrepancy(self, p, x) -> float:
        """Max gap between supplied derivatives and central differences."""
        fd = HamiltonianField(self.H, step=self.step)
        out = 0.0
        for mine, ref in ((self.H_p, fd.dp), (self.H_x, fd.dx)):
            if mine is not None:
                out = max(out, float(np.max(np.abs(mine(p, x) - ref(p, x)))))
        return out


@dataclass
class Trajectory:
    """Samples of one trajectory (or a fan: arrays of shape ``(nt, n0)``)."""

    t: np.ndarray
    x: np.ndarray
    p: np.ndarray
    S: np.ndarray
    J: np.ndarray
    dp_var: np.ndarray
    phi: np.ndarray | None = None
    sol: object = field(default=None, repr=False)

    def at(self, t):
        """Dense-output state ``(x, p)`` at time(s) ``t``."""
        y = self.sol.sol(t)
        n = y.shape[0] // 5
        return y[:n], y[n:2 * n]


def _flow(field: HamiltonianField, n: int):
    def rhs(t, y):
        x, p, S, dx, dp = y.reshape(5, n)
        hp = field.dp(p, x)
        hx = field.dx(p, x)
        hpp, hpx, hxx = field.hessian(p, x)
        return np.concatenate([
            hp,
            -hx,
            p * hp - field.H(p, x),
            hpx * dx + hpp * dp,
            -hxx * dx - hpx * dp,
        ])

    return rhs


def _integrate(field, p0, x0, S0, Sxx0, T, t_eval, rtol, atol, events=None):
    p0, x0, S0, Sxx0 = np.broadcast_arrays(*(np.atleast_1d(np.asarray(a, dtype=float)) for a in (p0, x0, S0, Sxx0)))
    n = p0.size
    y0 = np.concatenate([x0, p0, S0, np.ones(n), Sxx0])
    sol = solve_ivp(_flow(field, n), (0.0, T), y0, method="DOP853", t_eval=t_eval, rtol=rtol,
                    atol=atol, dense_output=True, events=events)
    if sol.status < 0:
        raise ConvergenceError(f"trajectory integration failed: {sol.message}")
    return sol, n


def integrate_trajectory(field: HamiltonianField, p0: float, x0: float, T: float, S0: float = 0.0,
                         S0_xx: float = 0.0, t_eval=None, rtol: float = 1e-10,
                         atol: float = 1e-12) -> Trajectory:
    """Single trajectory with action and Jacobian, sampled at ``t_eval``."""
    if T <= 0:
        raise ValueError("T must be positive")
    t_eval = np.linspace(0.0, T, 201) if t_eval is None else np.asarray(t_eval, dtype=float)
    sol, _ = _integrate(field, p0, x0, S0, S0_xx, T, t_eval, rtol, atol)
    x, p, S, J, dp = sol.y
    return Trajectory(sol.t, x, p, S, J, dp, sol=sol)


def _L1_matrix(field, p, x, r):
    val = np.asarray(field.L1(p, x), dtype=complex)
    if val.ndim == 0:
        return val * np.eye(r)
    if val.shape != (r, r):
        raise ValueError(f"L1 of shape {val.shape} does not act on amplitudes of length {r}")
    return val


def transport_solve(field: HamiltonianField, traj: Trajectory, phi0, max_step: float = 2e-3) -> np.ndarray:
    """Classical RK4 for ``phi' = -i L1(p(t), x(t)) phi`` along a trajectory.

    ``phi0`` is a vector of length r or an ``r x m`` matrix of columns.
    Returns samples at ``traj.t`` with shape ``(nt,) + phi0.shape``.
    """
    if field.L1 is None:
        raise ValueError("field has no transport generator")
    phi = np.array(phi0, dtype=complex, ndmin=1)
    r = phi.shape[0]
    out = [phi.copy()]
    for t0, t1 in zip(traj.t[:-1], traj.t[1:]):
        m = max(1, int(np.ceil(abs(t1 - t0) / max_step)))
        dt = (t1 - t0) / m
        ts = t0 + dt / 2 * np.arange(2 * m + 1)
        xs, ps = traj.at(ts)
        gens = [-1j * _L1_matrix(field, float(p), float(x), r) for x, p in zip(xs[0], ps[0])]
        for i in range(m):
            A0, Ah, A1 = gens[2 * i], gens[2 * i + 1], gens[2 * i + 2]
            k1 = A0 @ phi
            k2 = Ah @ (phi + dt / 2 * k1)
            k3 = Ah @ (phi + dt / 2 * k2)
            k4 = A1 @ (phi + dt * k3)
            phi = phi + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        out.append(phi.copy())
    res = np.array(out)
    return res[:, 0] if np.ndim(phi0) == 0 else res


def transport_closed_form(field: HamiltonianField, traj: Trajectory, phi0: complex) -> np.ndarray:
    """Scalar transport ``exp(-i int L1 dt) phi0`` by adaptive quadrature."""

    def L(t, part):
        x, p = traj.at(t)
        v = complex(np.asarray(field.L1(float(p[0]), float(x[0]))))
        return v.real if part == 0 else v.imag

    phase = [0.0 + 0.0j]
    for t0, t1 in zip(traj.t[:-1], traj.t[1:]):
        re = quad(L, t0, t1, args=(0,), epsabs=1e-14, epsrel=1e-13)[0]
        im = quad(L, t0, t1, args=(1,), epsabs=1e-14, epsrel=1e-13)[0]
        phase.append(phase[-1] + re + 1j * im)
    return np.exp(-1j * np.array(phase)) * phi0


@dataclass
class WKBFan:
    """Trajectories launched from ``x0`` nodes with Lagrangian initial data."""

    x0: np.ndarray
    times: np.ndarray
    x: np.ndarray  # (nt, n0)
    p: np.ndarray
    S: np.ndarray
    J: np.ndarray
    phi: np.ndarray  # (nt, n0)
    S0: Callable
    phi0: Callable


def launch_fan(field: HamiltonianField, S0: Callable, dS0: Callable, d2S0: Callable, phi0: Callable,
               x0_nodes, times, rtol: float = 1e-10, atol: float = 1e-12) -> WKBFan:
    """Integrate all trajectories of the fan together; scalar transport if ``L1`` is set."""
    x0 = np.asarray(x0_nodes, dtype=float)
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(x0) <= 0):
        raise ValueError("x0 nodes must increase")
    sol, n = _integrate(field, dS0(x0), x0, S0(x0), d2S0(x0), float(times[-1]), times, rtol, atol)
    y = sol.y.reshape(5, n, -1).transpose(0, 2, 1)
    phi = np.broadcast_to(np.asarray(phi0(x0), dtype=complex), y[0].shape).copy()
    if field.L1 is not None:
        for j in range(n):
            traj = Trajectory(sol.t, y[0][:, j], y[1][:, j], y[2][:, j], y[3][:, j], y[4][:, j])
            one = solve_ivp(_flow(field, 1), (0.0, float(times[-1])),
                            [x0[j], dS0(x0[j]), S0(x0[j]), 1.0, d2S0(x0[j])], method="DOP853",
                            rtol=rtol, atol=atol, dense_output=True)
            traj.sol = one
            phi[:, j] = transport_solve(field, traj, phi[0, j])
    return WKBFan(x0, sol.t, y[0], y[1], y[2], y[3], phi, S0, phi0)


def wkb_evaluate(fan: WKBFan, t: float, x_query, h: float, J_tol: float = 1e-6) -> np.ndarray:
    """WKB wave train ``exp(iS/h) phi / sqrt(J)`` at time ``t`` on ``x_query``."""
    xq = np.asarray(x_query, dtype=float)
    out = np.zeros(xq.shape, dtype=complex)
    if t == 0.0:
        inside = (xq >= fan.x0[0]) & (xq <= fan.x0[-1])
        out[inside] = np.exp(1j * fan.S0(xq[inside]) / h) * fan.phi0(xq[inside])
        return out
    k = np.nonzero(np.isclose(fan.times, t, rtol=0, atol=1e-12))[0]
    if k.size == 0:
        raise ValueError("t is not one of the fan sample times")
    k = k[0]
    J = fan.J[k]
    if np.min(J) < J_tol:
        raise CausticEncountered(f"min J = {np.min(J):.3e} at t = {t:g}")
    xi = fan.x[k]
    if np.any(np.diff(xi) <= 0):
        raise NonMonotoneFan(f"trajectory endpoints not ordered at t = {t:g}")
    inside = (xq >= xi[0]) & (xq <= xi[-1])
    x0q = PchipInterpolator(xi, fan.x0)(xq[inside])
    S = CubicSpline(fan.x0, fan.S[k])(x0q)
    Jq = CubicSpline(fan.x0, J)(x0q)
    ph = CubicSpline(fan.x0, fan.phi[k].real)(x0q) + 1j * CubicSpline(fan.x0, fan.phi[k].imag)(x0q)
    out[inside] = np.exp(1j * S / h) * ph / np.sqrt(Jq)
    return out


# Bohr-Sommerfeld


class _Well:
    """Single-well geometry of ``v`` on ``[a, b]``."""

    def __init__(self, v: Callable, x_range, n_grid: int = 4001, nodes: int = 256):
        a, b = x_range
        self.v = v
        self.xs = np.linspace(a, b, n_grid)
        self.vs = np.asarray(v(self.xs), dtype=float)
        i = int(np.argmin(self.vs))
        lo, hi = self.xs[max(i - 1, 0)], self.xs[min(i + 1, n_grid - 1)]
        res = minimize_scalar(lambda s: float(v(s)), bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-12})
        self.x_min, self.v_min = float(res.x), float(min(res.fun, self.vs[i]))
        self.i_min = i
        self.rim = float(min(self.vs[: i + 1].max(), self.vs[i:].max()))
        self.theta, self.wts = np.polynomial.legendre.leggauss(nodes)
        self.theta = self.theta * np.pi / 2
        self.wts = self.wts * np.pi / 2

    def turning_points(self, E: float):
        sign = np.sign(E - self.vs)
        changes = np.count_nonzero(np.diff(sign[sign != 0]))
        if changes > 2:
            raise MultiWell(f"E = {E:g} crosses the potential {changes} times")
        if not self.v_min < E < self.rim:
            raise NoSolution(f"E = {E:g} outside the well ({self.v_min:g}, {self.rim:g})")
        f = lambda s: float(self.v(s)) - E
        j = int(np.nonzero(self.vs[: self.i_min + 1] >= E)[0][-1])
        k = self.i_min + int(np.nonzero(self.vs[self.i_min:] >= E)[0][0])
        inner_l = self.xs[j + 1] if j < self.i_min else self.x_min
        inner_r = self.xs[k - 1] if k > self.i_min else self.x_min
        xl = brentq(f, self.xs[j], inner_l, xtol=1e-14, rtol=1e-15)
        xr = brentq(f, inner_r, self.xs[k], xtol=1e-14, rtol=1e-15)
        return xl, xr

    def _quad(self, E, integrand):
        xl, xr = self.turning_points(E)
        m, w = (xl + xr) / 2, (xr - xl) / 2
        xq = m + w * np.sin(self.theta)
        gap = np.clip(2 * (E - np.asarray(self.v(xq), dtype=float)), 0.0, None)
        return float(np.sum(self.wts * integrand(gap) * w * np.cos(self.theta)))

    def action(self, E: float) -> float:
        """``(1/pi) int sqrt(2(E - v)) dx`` between the turning points."""
        return self._quad(E, np.sqrt) / np.pi

    def period(self, E: float) -> float:
        """``2 int dx / sqrt(2(E - v))``."""
        return 2 * self._quad(E, lambda g: 1 / np.sqrt(np.where(g > 0, g, np.inf)))


def bs_action(v: Callable, E: float, x_range, **kw) -> float:
    return _Well(v, x_range, **kw).action(E)


def classical_period(v: Callable, E: float, x_range, **kw) -> float:
    return _Well(v, x_range, **kw).period(E)


def bohr_sommerfeld(v: Callable, h: float, x_range, n=None, E_window=None, n_grid: int = 4001,
                    nodes: int = 256):
    """Energies with ``action(E) = h (n + 1/2)``.

    Give either ``n`` (an int or a sequence of ints) or ``E_window``; with a
    window the result is ``(ns, energies)`` for every level inside it.
    """
    if (n is None) == (E_window is None):
        raise ValueError("give exactly one of n or E_window")
    well = _Well(v, x_range, n_grid, nodes)
    lo = well.v_min + 1e-14 * max(1.0, abs(well.v_min))
    hi = well.rim - 1e-12 * max(1.0, abs(well.rim))
    top = well.action(hi)

    def level(k):
        target = h * (k + 0.5)
        if target >= top:
            raise NoSolution(f"level n={k} needs action {target:g} > {top:g}")
        return brentq(lambda E: well.action(E) - target, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=500)

    if n is not None:
        ks = np.atleast_1d(n)
        out = np.array([level(int(k)) for k in ks])
        return out if np.ndim(n) else float(out[0])
    e_lo, e_hi = E_window
    ks, Es = [], []
    k = 0
    while h * (k + 0.5) < top:
        E = level(k)
        if E > e_hi:
            break
        if E >= e_lo:
            ks.append(k)
            Es.append(E)
        k += 1
    return np.array(ks, dtype=int), np.array(Es)


# Floquet exponents and spectral series


@dataclass
class FloquetResult:
    E: float
    period: float
    monodromy: np.ndarray
    eigenvalues: np.ndarray
    beta: np.ndarray


def orbit_period(field: HamiltonianField, E: float, x_start: float, T_max: float = 1e3,
                 rtol: float = 1e-12) -> tuple[float, float]:
    """Return ``(p_start, T)`` of the closed orbit through ``x_start`` at energy ``E``."""
    f = lambda p: float(field.H(p, x_start)) - E
    if f(0.0) >= 0:
        raise NoSolution("energy below the potential at the start point")
    p_hi = 1.0
    while f(p_hi) < 0:
        p_hi *= 2
        if p_hi > 1e8:
            raise NoSolution("no momentum reaches the requested energy")
    p0 = brentq(f, 0.0, p_hi, xtol=1e-15, rtol=1e-15)

    def left_turn(t, y):
        return y[1]

    def back(t, y):
        return y[0] - x_start

    left_turn.direction = back.direction = 1.0
    left_turn.terminal = back.terminal = True
    rhs = _flow(field, 1)
    first = solve_ivp(rhs, (0.0, T_max), [x_start, p0, 0.0, 1.0, 0.0], method="DOP853",
                      rtol=rtol, atol=1e-13, events=left_turn)
    if first.status != 1:
        raise NoSolution("orbit does not close within T_max")
    t_l = float(first.t_events[0][0])
    second = solve_ivp(rhs, (t_l, T_max), first.y_events[0][0], method="DOP853",
                       rtol=rtol, atol=1e-13, events=back)
    if second.status != 1:
        raise NoSolution("orbit does not close within T_max")
    times = second.t_events[0]
    return p0, float(times[0])


def floquet_exponents(field: HamiltonianField, E: float, x_start: float, r: int = 1,
                      unit_tol: float = 1e-8) -> FloquetResult:
    """Transport monodromy over the closed orbit and exponents ``arg(lambda)/T``.

    The branch is ``(-pi/T, pi/T]``; a constant scalar ``L1 = c`` gives
    ``beta = -c``.
    """
    p0, T = orbit_period(field, E, x_start)
    traj = integrate_trajectory(field, p0, x_start, T, t_eval=np.linspace(0, T, 65), rtol=1e-12, atol=1e-13)
    M = transport_solve(field, traj, np.eye(r, dtype=complex))[-1]
    lam = np.linalg.eigvals(M)
    if np.max(np.abs(np.abs(lam) - 1.0)) > unit_tol:
        raise NonUnitaryMonodromy(f"monodromy eigenvalue moduli {np.abs(lam)}")
    beta = np.sort(np.angle(lam) / T)
    return FloquetResult(E, T, M, lam, beta)


@dataclass
class SeriesEntry:
    nu: int
    n: int
    E: float
    beta: np.ndarray
    E_j: np.ndarray


@dataclass
class SpectralSeries:
    h: float
    entries: list

    def energies(self) -> np.ndarray:
        return np.array([e.E for e in self.entries])


def spectral_series(v: Callable, h: float, ns, x_range, field: HamiltonianField | None = None,
                    nu: int = 1, r: int = 1) -> SpectralSeries:
    """Bohr-Sommerfeld levels split by the Floquet exponents of the transport."""
    E = bohr_sommerfeld(v, h, x_range, n=list(ns))
    entries = []
    well = _Well(v, x_range)
    for k, En in zip(ns, E):
        if field is not None and field.L1 is not None:
            beta = floquet_exponents(field, En, well.x_min, r).beta
        else:
            beta = np.zeros(r)
        entries.append(SeriesEntry(nu, int(k), float(En), beta, En + h * beta))
    return SpectralSeries(h, entries)


# scattering


@dataclass
class ScatteringAsymptotics:
    E: float
    outcome: str  # "Transmitted" or "Reflected"
    p_minus: float
    p_plus: float | None
    x_f: float | None
    reflected_phase: complex | None


def barrier_top(v: Callable, x_range, n_scan: int = 20001) -> tuple[float, float]:
    xs = np.linspace(*x_range, n_scan)
    vs = np.asarray(v(xs), dtype=float)
    i = int(np.argmax(vs))
    if 0 < i < n_scan - 1:
        res = minimize_scalar(lambda s: -float(v(s)), bounds=(xs[i - 1], xs[i + 1]), method="bounded",
                              options={"xatol": 1e-12})
        if -res.fun > vs[i]:
            return float(res.x), float(-res.fun)
    return float(xs[i]), float(vs[i])


def scatter_1d(v: Callable, E: float, h: float, v_minus: float, v_plus: float, x_range,
               offset_minus: float = 0.0, offset_plus: float = 0.0, n_scan: int = 20001) -> ScatteringAsymptotics:
    """Above-barrier transmission or reflection at the leftmost turning point.

    ``v`` is the full effective potential.  Its tails are ``v_minus +
    offset_minus`` on the left and ``v_plus + offset_plus`` on the right, where
    the offsets are the transverse threshold energies of the channel.
    """
    lvl_minus = v_minus + offset_minus
    lvl_plus = v_plus + offset_plus
    if E <= lvl_minus:
        raise ValueError("no propagating incident channel (E below the left tail)")
    _, vmax = barrier_top(v, x_range, n_scan)
    vmax = max(vmax, lvl_minus, lvl_plus)
    if abs(E - vmax) <= 1e-14 * max(1.0, abs(vmax)):
        raise ValueError("E equals the barrier top; the dichotomy is undefined")
    p_minus = float(np.sqrt(2 * (E - lvl_minus)))
    if E > vmax:
        return ScatteringAsymptotics(E, "Transmitted", p_minus, float(np.sqrt(2 * (E - lvl_plus))), None, None)
    xs = np.linspace(*x_range, n_scan)
    vs = np.asarray(v(xs), dtype=float) + 0.0
    hit = np.nonzero(vs >= E)[0]
    if hit.size == 0:
        # only the right tail blocks the wave
        return ScatteringAsymptotics(E, "Reflected", p_minus, None, float(x_range[1]), np.exp(-0.5j * np.pi))
    j = int(hit[0])
    if j == 0:
        raise ValueError("the left end of the range is already classically forbidden")
    x_f = brentq(lambda s: float(v(s)) - E, xs[j - 1], xs[j], xtol=1e-15, rtol=1e-15)
    return ScatteringAsymptotics(E, "Reflected", p_minus, None, float(x_f), np.exp(-0.5j * np.pi))
