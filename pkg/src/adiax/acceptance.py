"""Acceptance criteria of the library, shared by the test suite and ``adiax validate``.

Every criterion returns a :class:`CriterionResult` made of individual
checks, each with the measured value and its threshold.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import bloch, reduction, reference2d, semiclassics, symbolcalc, transverse


@dataclass
class Check:
    label: str
    value: float
    threshold: str
    passed: bool

    def as_dict(self):
        return {"label": self.label, "value": float(self.value), "threshold": self.threshold,
                "passed": bool(self.passed)}


@dataclass
class CriterionResult:
    number: int
    title: str
    checks: list = field(default_factory=list)
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, label, value, threshold, passed):
        self.checks.append(Check(label, float(value), threshold, bool(passed)))

    def at_most(self, label, value, bound):
        self.add(label, value, f"<= {bound:g}", value <= bound)

    def at_least(self, label, value, bound):
        self.add(label, value, f">= {bound:g}", value >= bound)

    def within(self, label, value, lo, hi):
        self.add(label, value, f"in [{lo:g}, {hi:g}]", lo <= value <= hi)

    def line(self) -> str:
        failed = [c.label for c in self.checks if not c.passed]
        status = "PASS" if self.passed else "FAIL"
        tail = "" if not failed else " (failed: " + ", ".join(failed) + ")"
        return f"criterion {self.number:2d} {status}  {self.title}{tail}"

    def as_dict(self):
        return {"number": self.number, "title": self.title, "passed": self.passed,
                "seconds": self.seconds, "checks": [c.as_dict() for c in self.checks]}


def _timed(number, title):
    def wrap(fn):
        def run() -> CriterionResult:
            res = CriterionResult(number, title)
            t0 = time.perf_counter()
            fn(res)
            res.seconds = time.perf_counter() - t0
            return res

        run.__name__ = fn.__name__
        run.__doc__ = fn.__doc__
        return run

    return wrap


def _reduced_ground_energies(model, x, y, v_ext, mu, count):
    branch = transverse.track_branches(model, x, y, 2)[0]
    family = reduction.waveguide_family(branch, model, v_ext)
    em = reduction.build_effective_model(branch, v_ext, mu, h=mu, family=family)
    ess = reduction.assemble_essential(em)
    E, _ = reduction.solve_reduced_stationary(ess, count=count)
    return np.real(ess.to_original_energy(E)), branch, family, em


@_timed(1, "exact separation: reduced vs 2D eigenvalues, L1 = 0")
def criterion_1(res: CriterionResult):
    mu = 0.1
    x = np.linspace(np.pi - 3, np.pi + 3, 241)
    y = np.linspace(-6, 6, 121)
    model = transverse.Tabulated(lambda xs, ys: ys**2)
    v_ext = np.cos(x)
    E_red, branch, family, _ = _reduced_ground_energies(model, x, y, v_ext, mu, 3)
    heff = reduction.effective_hamiltonian(branch, v_ext)
    L1 = reduction.correction_L1(branch, family, heff, symbolcalc.P_SAMPLES)
    grid = reference2d.Rect2DGrid(x, y)
    A = reference2d.assemble_2d(mu, lambda X, Y: np.cos(X) + Y**2, grid)
    E2, _ = reference2d.eigs_2d(A, 3, grid=grid)
    for k in range(3):
        res.at_most(f"relative gap E{k}", abs(E_red[k] - E2[k]) / abs(E2[k]), 1e-8)
    for name in ("h1", "time", "transport", "total"):
        res.at_most(f"max |L1 {name}|", np.max(np.abs(getattr(L1, name))), 1e-8)


def soft_wall_errors(mus=(0.2, 0.1)):
    """Ground-state gap between the 2D operator and the reduced model."""
    D = lambda s: 1 + 0.3 * np.exp(-s**2)
    model = transverse.PowerWell(D, 1)
    x = np.linspace(-10, 10, 401)
    y = np.linspace(-6, 6, 121)
    grid = reference2d.Rect2DGrid(x, y)
    out = []
    for mu in mus:
        E_red, *_ = _reduced_ground_energies(model, x, y, None, mu, 1)
        A = reference2d.assemble_2d(mu, lambda X, Y: model.potential(X, Y), grid)
        E2, _ = reference2d.eigs_2d(A, 1, sigma=E_red[0] - 0.01)
        out.append(abs(E2[0] - E_red[0]))
    return np.array(out)


@_timed(2, "adiabatic accuracy order for the soft-wall waveguide")
def criterion_2(res: CriterionResult):
    err = soft_wall_errors((0.2, 0.1))
    res.add("error at mu=0.2", err[0], "reported", True)
    res.add("error at mu=0.1", err[1], "reported", True)
    res.within("error ratio mu=0.2 / mu=0.1", err[0] / err[1], 2.5, 6.0)


def residual_slopes(mus=(0.1, 0.03, 0.01)):
    """Log-log slopes of the intertwining residual without and with first corrections."""
    x = np.linspace(-4, 4, 161)
    y = np.linspace(-6, 6, 61)
    vfun = lambda xs, ys: ys**2 * (1 + 0.2 * xs * np.exp(-xs**2))
    model = transverse.Tabulated(vfun)
    branch = transverse.track_branches(model, x, y, 2)[0]
    family = reduction.waveguide_family(branch, model)
    heff = reduction.effective_hamiltonian(branch)
    ps = symbolcalc.P_SAMPLES
    L1 = reduction.correction_L1(branch, family, heff, ps)
    chi1 = reduction.correction_chi1(branch, family, heff, L1)
    chi1_c, _ = reduction.fit_p_polynomial(chi1, ps, 2)
    L1_c, _ = reduction.fit_p_polynomial(L1.total, ps, 2)
    n = y.size - 2
    dy = y[1] - y[0]
    T = (np.eye(n) - 0.5 * (np.eye(n, k=1) + np.eye(n, k=-1))) / dy**2
    V = np.array([np.diag(vfun(np.full(n, xi), y[1:-1])) for xi in x])
    H = symbolcalc.MuSymbol.from_orders(x, np.array([T[None] + V, np.zeros_like(V),
                                                     np.broadcast_to(0.5 * np.eye(n), V.shape)]))
    chi0 = branch.w[:, 1:-1][None]
    L0 = np.array([branch.eps, 0 * x, 0.5 + 0 * x])
    plain = symbolcalc.residual_series(H, symbolcalc.MuSymbol.from_orders(x, chi0),
                                       symbolcalc.MuSymbol.from_orders(x, L0))
    corrected = symbolcalc.residual_series(H, symbolcalc.MuSymbol.from_orders(x, chi0, chi1_c),
                                           symbolcalc.MuSymbol.from_orders(x, L0, L1_c))
    mus = np.asarray(mus)
    slopes = []
    for S in (plain, corrected):
        r = np.array([symbolcalc.series_norm(S, m) for m in mus])
        slopes.append(np.polyfit(np.log(mus), np.log(r), 1)[0])
    return slopes


@_timed(3, "symbol identity residual order in mu")
def criterion_3(res: CriterionResult):
    s0, s1 = residual_slopes()
    res.at_least("slope with chi0, L0", s0, 0.9)
    res.at_least("slope with chi0 + mu chi1, L0 + mu L1", s1, 1.9)


def _orders(errs):
    errs = np.asarray(errs)
    return np.log2(errs[:-1] / errs[1:])


@_timed(4, "transverse analytics and soft-wall scaling law")
def criterion_4(res: CriterionResult):
    nu = np.arange(1, 4)
    errs = []
    for n in (51, 101, 201):
        eps, _ = transverse.solve_transverse_at_x(transverse.RigidWall(0.0, 1.0), 0.0, np.linspace(0, 1, n), 3)
        errs.append(np.abs(eps - nu**2 * np.pi**2 / 2))
    sizes = (51, 101, 201)
    for k, orders in enumerate(_orders(errs).T):
        for j, o in enumerate(orders):
            res.within(f"rigid wall order nu={k + 1} n={sizes[j]}->{sizes[j + 1]}", o, 1.8, 2.2)
    errs = []
    for n in (121, 241, 481):
        eps, _ = transverse.solve_transverse_at_x(transverse.Harmonic(2.0), 0.0, np.linspace(-6, 6, n), 3)
        errs.append(np.abs(eps - 2.0 * (nu - 0.5)))
    sizes = (121, 241, 481)
    for k, orders in enumerate(_orders(errs).T):
        for j, o in enumerate(orders):
            res.within(f"harmonic order nu={k + 1} n={sizes[j]}->{sizes[j + 1]}", o, 1.8, 2.2)
    x = np.linspace(-3, 3, 41)
    D = lambda s: 1 + 0.3 * np.sin(s)
    for m in (1, 2, 4):
        model = transverse.PowerWell(D, m)
        lo, hi = transverse.soft_wall_window(model, x, 2)
        y = np.linspace(lo, hi, 1201)
        for b in transverse.track_branches(model, x, y, 2):
            scaled = b.eps * D(x) ** (2 * m / (m + 1))
            res.at_most(f"scaling spread m={m} nu={b.nu}", np.ptp(scaled) / np.mean(scaled), 5e-3)


def mathieu_first_gap(a: float) -> float:
    pot = bloch.PeriodicPotential.mathieu(a)
    e = bloch.bloch_bands_fourier(pot, 0.0, 0.5, 2)
    return float(e[1] - e[0])


@_timed(5, "Bloch bands: Fourier vs discriminant, free limit, gap closing")
def criterion_5(res: CriterionResult):
    for a in (0.1, 0.5, 1.0):
        pot = bloch.PeriodicPotential.mathieu(a)
        disc = bloch.discriminant_band_edges(pot, 0.0, 3)
        four = np.array([[bloch.bloch_bands_fourier(pot, 0.0, P, 3)[k] for P in (0.0, 0.5)] for k in range(3)])
        four = np.sort(four, axis=1)
        res.at_most(f"edge mismatch a={a}", np.max(np.abs(disc - four)), 1e-6)
    bands = bloch.bloch_band_table(bloch.PeriodicPotential.free(), [0.0], 1)
    ps = symbolcalc.P_SAMPLES * 0.5  # first Brillouin zone of the lowest band
    dev = max(abs(float(bloch.effective_hamiltonian_bloch(bands[0], p, 0.0)) - p**2) for p in ps)
    res.at_most("free H_eff - p^2", dev, 1e-8)
    gaps = [mathieu_first_gap(a) for a in (0.1, 0.05, 0.025)]
    res.add("gaps positive and shrinking", float(np.min(np.diff(gaps))), "< 0", gaps[0] > gaps[1] > gaps[2] > 0)
    for a, g0, g1 in zip((0.1, 0.05), gaps[:-1], gaps[1:]):
        res.at_least(f"gap ratio a={a} -> a={a / 2}", g0 / g1, 2.0)


def quartic_comparison(h=0.05, ns=range(6)):
    """Bohr-Sommerfeld vs finite differences for x^4; returns (E_bs, E_fd, omega0)."""
    v = lambda s: np.asarray(s) ** 4
    rng = (-2.0, 2.0)
    E_bs = semiclassics.bohr_sommerfeld(v, h, rng, n=list(ns))
    x = np.linspace(-2.0, 2.0, 4001)
    ess = reduction.EssentialHamiltonian(x, h, x**4)
    E_fd, _ = reduction.solve_reduced_stationary(ess, count=len(E_bs))
    omega0 = 2 * np.pi / semiclassics.classical_period(v, E_bs[0], rng)
    return E_bs, E_fd, omega0


@_timed(6, "Bohr-Sommerfeld series and Floquet shift")
def criterion_6(res: CriterionResult):
    ns = np.arange(6)
    h = 0.1
    harm = semiclassics.bohr_sommerfeld(lambda s: np.asarray(s) ** 2 / 2, h, (-3.0, 3.0), n=list(ns))
    res.at_most("harmonic max |E - h(n+1/2)|", np.max(np.abs(harm - h * (ns + 0.5))), 1e-10)
    hq = 0.05
    E_bs, E_fd, omega0 = quartic_comparison(hq, ns)
    bound = 0.5 * hq**2 * omega0
    for n, eb, ef in zip(ns, E_bs, E_fd):
        res.at_most(f"quartic |dE| n={n}", abs(eb - ef), bound)
    c = 0.3
    field = semiclassics.HamiltonianField.potential(lambda s: s**2 / 2, lambda s: s, lambda s: 1.0 + 0 * s,
                                                    L1=lambda p, s: c)
    series = semiclassics.spectral_series(lambda s: np.asarray(s) ** 2 / 2, h, range(4), (-3.0, 3.0), field)
    dev = max(abs(e.E_j[0] - (e.E - h * c)) for e in series.entries)
    res.at_most("Floquet shift |E_j - (E - h c)|", dev, 1e-12)


def curvature_ground_energy(k0: float) -> float:
    x = np.linspace(-200, 200, 8001)
    y = np.linspace(0, 1, 21)
    strip = transverse.RigidWall(0.0, 1.0)
    branch = transverse.track_branches(strip, x, y, 1)[0]
    family = reduction.waveguide_family(branch, strip)
    em = reduction.build_effective_model(branch, None, mu=0.1, h=1.0, family=family,
                                         curvature=k0 / np.cosh(x))
    ess = reduction.assemble_essential(em)
    E, _ = reduction.solve_reduced_stationary(ess, count=1)
    return float(E[0])


@_timed(7, "curvature-induced bound state in the long-wave regime")
def criterion_7(res: CriterionResult):
    for k0 in (0.5, 1.0, 2.0):
        E0 = curvature_ground_energy(k0)
        res.add(f"lowest level k0={k0}", E0, "< 0", E0 < 0)


def wkb_vs_pde(mu=0.05, T=1.0, dx=0.01, dt=0.005):
    """Centroid mismatch (relative to distance travelled) and mode leakage at time T."""
    h = mu
    dinv = lambda s: 1 + 0.15 * np.exp(-np.asarray(s) ** 2 / 0.25)
    model = transverse.PowerWell(lambda s: 1 / dinv(s), 1)
    x = np.arange(-3.0, 2.5 + dx / 2, dx)
    lo, hi = transverse.soft_wall_window(model, x, 4)
    y = np.linspace(lo, hi, int(round((hi - lo) / 0.1)) + 1)
    grid = reference2d.Rect2DGrid(x, y)
    branches = transverse.track_branches(model, x, y, 6)
    sig, x0, pbar = 0.25, -1.0, 1.0
    amp = lambda s: np.exp(-(np.asarray(s) - x0) ** 2 / (2 * sig**2))
    Psi0 = reference2d.Wavefunction2D(grid, branches[0].w * (amp(x) * np.exp(1j * pbar * x / mu))[:, None])
    Psi0 = reference2d.Wavefunction2D(grid, Psi0.values / Psi0.norm())
    A = reference2d.assemble_2d(mu, lambda X, Y: model.potential(X, Y), grid)
    shift = 0.5 * pbar**2 + branches[0].eps[0]
    _, snaps = reference2d.evolve_cn(Psi0, A, mu, dt, int(round(T / dt)), shift=shift)
    final = snaps[-1]
    coef = reference2d.project_modes(final, branches)
    wx = np.full(x.size, dx)
    leak = np.sum(np.abs(coef[1:]) ** 2 @ wx) / final.norm() ** 2
    cn_centroid = np.sum(x * np.abs(coef[0]) ** 2) / np.sum(np.abs(coef[0]) ** 2)
    field = semiclassics.HamiltonianField.from_samples(x, branches[0].eps)
    fan = semiclassics.launch_fan(field, lambda s: pbar * s, lambda s: pbar + 0 * s, lambda s: 0 * s, amp,
                                  np.linspace(x0 - 6 * sig, x0 + 6 * sig, 401), [0.0, T])
    psi = semiclassics.wkb_evaluate(fan, T, x, h)
    wkb_centroid = np.sum(x * np.abs(psi) ** 2) / np.sum(np.abs(psi) ** 2)
    return abs(cn_centroid - wkb_centroid) / abs(wkb_centroid - x0), leak


@_timed(8, "WKB wave train vs 2D Crank-Nicolson evolution")
def criterion_8(res: CriterionResult):
    mu = 0.05
    rel, leak = wkb_vs_pde(mu)
    res.at_most("centroid mismatch / distance", rel, 0.05)
    res.at_most("mode leakage", leak, 10 * mu**2)


@_timed(9, "scattering asymptotics and regime table")
def criterion_9(res: CriterionResult):
    eps_perp = np.pi**2 / 2
    v = lambda s: 0.3 * (1 + np.tanh(2 * np.asarray(s))) / 2 + 0.35 * np.exp(-np.asarray(s) ** 2) + eps_perp
    out = semiclassics.scatter_1d(v, 0.8 + eps_perp, 0.05, 0.0, 0.3, (-10.0, 10.0), eps_perp, eps_perp)
    res.add("above barrier outcome", 0.0, "Transmitted", out.outcome == "Transmitted")
    res.at_most("|p_- - sqrt(1.6)|", abs(out.p_minus - np.sqrt(1.6)), 1e-10)
    res.at_most("|p_+ - 1|", abs(out.p_plus - 1.0), 1e-10)
    gauss = lambda s: np.exp(-np.asarray(s) ** 2)
    below = semiclassics.scatter_1d(gauss, 0.5, 0.05, 0.0, 0.0, (-6.0, 6.0))
    res.add("below barrier outcome", 0.0, "Reflected", below.outcome == "Reflected")
    xs = np.linspace(-6.0, 0.0, 2_000_001)
    g = gauss(xs) - 0.5
    j = int(np.nonzero(g >= 0)[0][0])
    scan_root = xs[j - 1] - g[j - 1] * (xs[j] - xs[j - 1]) / (g[j] - g[j - 1])
    res.at_most("|x_f - scan root|", abs(below.x_f - scan_root), 1e-10)
    res.at_most("|x_f + sqrt(ln 2)|", abs(below.x_f + np.sqrt(np.log(2))), 1e-10)
    expected = {0.01: "ShortWave", 0.1: "MediumWave", 1.0: "LongWave", 0.003: "UltraShortWave"}
    for h, tag in expected.items():
        got = reduction.classify_regime(0.01, h).value
        res.add(f"regime mu=0.01 h={h}", 0.0, tag, got == tag)


def _hermitian_generator(p, x):
    return np.array([[x, 0.3 + 0.2j * p], [0.3 - 0.2j * p, -0.5 * x + p**2]])


@_timed(10, "conservation and unitarity")
def criterion_10(res: CriterionResult):
    T = 10.0
    harmonic = semiclassics.HamiltonianField.potential(lambda s: s**2 / 2, lambda s: s, lambda s: 1.0 + 0 * s,
                                                       L1=_hermitian_generator)
    quartic = semiclassics.HamiltonianField.potential(lambda s: s**4 - s**2, lambda s: 4 * s**3 - 2 * s,
                                                      lambda s: 12 * s**2 - 2)
    band = bloch.bloch_band_table(bloch.PeriodicPotential.mathieu(0.5), [0.0], 1)[0]
    mathieu = semiclassics.HamiltonianField(lambda p, s: bloch.effective_hamiltonian_bloch(band, p, 0.0) + 0 * s)
    for name, f, p0, x0 in (("harmonic", harmonic, 1.0, 0.0), ("double well", quartic, 0.7, 0.2),
                            ("Mathieu band", mathieu, 0.3, 0.0)):
        tr = semiclassics.integrate_trajectory(f, p0, x0, T)
        H = np.array([float(np.asarray(f.H(p, s))) for p, s in zip(tr.p, tr.x)])
        res.at_most(f"energy drift {name}", np.max(np.abs(H - H[0])), 1e-9)
    x = np.linspace(-3, 3, 40)
    y = np.linspace(-3, 3, 30)
    grid = reference2d.Rect2DGrid(x, y)
    X, Y = grid.mesh()
    A = reference2d.assemble_2d(0.1, X**2 / 2 + Y**2, grid)
    start = grid.from_interior(grid.to_interior(np.exp(-(X - 0.5) ** 2 - Y**2 + 3j * X)))
    psi0 = reference2d.Wavefunction2D(grid, start)
    psi0 = reference2d.Wavefunction2D(grid, psi0.values / psi0.norm())
    _, snaps = reference2d.evolve_cn(psi0, A, 0.1, 0.01, 1000)
    res.at_most("Crank-Nicolson norm drift (1000 steps)", abs(snaps[-1].norm() - 1.0), 1e-9)
    tr = semiclassics.integrate_trajectory(harmonic, 1.0, 0.0, T)
    phi0 = np.array([0.6, 0.8j])
    phi = semiclassics.transport_solve(harmonic, tr, phi0)
    res.at_most("transport norm drift", np.max(np.abs(np.linalg.norm(phi, axis=1) - 1.0)), 1e-9)
    fl = semiclassics.floquet_exponents(harmonic, 0.5, 0.0, r=2)
    res.at_most("Floquet imaginary residue", np.max(np.abs(np.log(np.abs(fl.eigenvalues)))) / fl.period, 1e-9)


CRITERIA = {f.__name__: f for f in (criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
                                    criterion_6, criterion_7, criterion_8, criterion_9, criterion_10)}


def run_all(numbers=None) -> list[CriterionResult]:
    out = []
    for k in range(1, 11):
        if numbers is None or k in numbers:
            out.append(CRITERIA[f"criterion_{k}"]())
    return out
