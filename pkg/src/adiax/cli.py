"""Command-line front end: ``adiax <command> --config run.json``.

Results go to ``<outdir>/<command>/<config-hash>/``: CSV tables plus a
``summary.json``.  Exit codes: 0 success, 2 invalid input or failed
validation, 3 numerical failure (the error class is named in the summary).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from . import __version__, bloch, reduction, reference2d, semiclassics, transverse
from .config import RunConfig, compile_derivative, compile_expression, config_hash, load_config
from .errors import AdiaxError, RegimeMismatch

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERICAL = 3

COMMANDS = ("bands", "reduce", "bound-states", "scatter", "propagate", "validate", "regimes")


class _ValidationFailed(Exception):
    """Raised when the acceptance suite reports a failing criterion."""


class Run:
    """Output directory bookkeeping for one command."""

    def __init__(self, root: Path, threads: int):
        self.root = root
        self.threads = threads
        self.files: list[Path] = []
        self.extra: dict = {}

    def write_csv(self, name: str, columns: list[str], rows) -> Path:
        path = self.root / name
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(columns)
            for row in rows:
                writer.writerow([_cell(v) for v in row])
        self.files.append(path)
        return path

    def discard(self):
        for path in self.files:
            path.unlink(missing_ok=True)
        self.files = []


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    return str(v)


# building blocks


def _x_grid(cfg: RunConfig) -> np.ndarray:
    cfg.require("x_grid")
    return cfg.x_grid.array()


def _model(cfg: RunConfig):
    cfg.require("confinement")
    c = cfg.confinement
    if c.kind == "rigid":
        return transverse.RigidWall(compile_expression(c.y1), compile_expression(c.y2))
    if c.kind == "power":
        return transverse.PowerWell(compile_expression(c.D), c.m)
    if c.kind == "harmonic":
        return transverse.Harmonic(c.omega)
    return transverse.Tabulated(compile_expression(c.expression, ("x", "y")))


def _y_grid(cfg: RunConfig, model, x: np.ndarray, K: int) -> np.ndarray:
    if cfg.y_grid is not None:
        return cfg.y_grid.array()
    if isinstance(model, transverse.Tabulated):
        raise ValueError("an expression confinement needs an explicit y_grid")
    lo, hi = transverse.soft_wall_window(model, x, K)
    return np.linspace(lo, hi, cfg.y_points)


def _branches(cfg: RunConfig, run: Run, K: int, gap_tol: float = 1e-8):
    model = _model(cfg)
    x = _x_grid(cfg)
    y = _y_grid(cfg, model, x, K)
    return model, x, transverse.track_branches(model, x, y, K, gap_tol=gap_tol, threads=run.threads)


def _periodic(cfg: RunConfig) -> bloch.PeriodicPotential:
    b = cfg.bloch
    a = compile_expression(b.amplitude)
    U = compile_expression(b.U)
    dU = compile_derivative(b.U)
    return bloch.PeriodicPotential(lambda x: float(a(x)) * np.array([1.0, 0.0, 1.0], dtype=complex),
                                   lambda x: float(U(x)), lambda x: float(dU(x)))


def _regime(cfg: RunConfig):
    if cfg.mu is None or (cfg.h is None and cfg.regime is None):
        return None, None
    h = cfg.h if cfg.h is not None else reduction.canonical_h(cfg.mu, cfg.regime)
    tag = reduction.classify_regime(cfg.mu, h)
    if cfg.regime is not None and tag.value != cfg.regime:
        raise RegimeMismatch(f"h={h:g} classifies as {tag.value}, not {cfg.regime}")
    return h, tag.value


def _reduced_potential(cfg: RunConfig, run: Run, nu: int = 1):
    """``(x, v_ext + eps_nu)`` of the configured waveguide."""
    _, x, branches = _branches(cfg, run, nu)
    return x, compile_expression(cfg.v_ext)(x) + branches[nu - 1].eps


# commands


def cmd_bands(cfg: RunConfig, run: Run):
    opts = cfg.section("bands")
    if cfg.problem == "bloch":
        pot = _periodic(cfg)
        x = _x_grid(cfg) if cfg.x_grid is not None else np.array([0.0])
        P = bloch.default_P_grid(cfg.bloch.P_points)
        bands = bloch.bloch_band_table(pot, x, opts.K, P, cfg.bloch.n_pw)
        for nu in range(1, opts.K + 1):
            bloch.band_gap_check(bands, nu, opts.gap_tol)
        rows = [[xv, Pv] + [b.dispersion[i, j] for b in bands] for j, xv in enumerate(x) for i, Pv in enumerate(P)]
        run.write_csv("bands.csv", ["x", "P"] + [f"E_{b.nu}" for b in bands], rows)
        run.extra["gaps"] = {str(b.nu): [b.gap_below if np.isfinite(b.gap_below) else None, b.gap_above]
                             for b in bands}
        return
    _, x, branches = _branches(cfg, run, opts.K, opts.gap_tol)
    rows = [[xv] + [b.eps[i] for b in branches] for i, xv in enumerate(x)]
    run.write_csv("bands.csv", ["x"] + [f"eps_{b.nu}" for b in branches], rows)


def cmd_reduce(cfg: RunConfig, run: Run):
    nu = cfg.section("reduce").nu
    cfg.require("mu")
    h, tag = _regime(cfg)
    if h is None:
        raise ValueError("reduce needs h or a regime override")
    curv = compile_expression(cfg.curvature) if cfg.curvature is not None else None
    if cfg.problem == "bloch":
        pot = _periodic(cfg)
        x = _x_grid(cfg)
        term = bloch.BlochTerm(pot, nu, cfg.bloch.n_y, cfg.bloch.n_pw, positions=x)
        L1 = reduction.correction_L1(term, term.family(), term, [0.0]).total[0]
        heff = np.array([term.value(0.0, xv) for xv in x])
        G = reduction.geometric_potential(curv(x)) if curv else np.zeros_like(x)
        run.extra["regime"] = tag
    else:
        model, x, branches = _branches(cfg, run, nu + 1)
        branch = branches[nu - 1]
        v_ext = compile_expression(cfg.v_ext)(x)
        family = reduction.waveguide_family(branch, model, v_ext)
        em = reduction.build_effective_model(branch, v_ext, cfg.mu, h=h, regime=cfg.regime, family=family,
                                             curvature=None if curv is None else curv(x))
        heff = em.v_ext + em.eps
        L1 = em.L1_coeffs[0]
        G = em.G
        run.extra["regime"] = em.regime.value
        run.extra["L1_fit_residual"] = em.L1_fit_residual
    run.write_csv("reduce.csv", ["x", "H_eff_p0", "L1_p0_re", "L1_p0_im", "G"],
                  zip(x, heff, np.real(L1), np.imag(L1), G))


def cmd_bound_states(cfg: RunConfig, run: Run):
    opts = cfg.section("bound-states")
    cfg.require("h")
    ns = sorted(set(opts.n))
    if opts.potential is not None:
        v = compile_expression(opts.potential)
        dv, d2v = compile_derivative(opts.potential), compile_derivative(opts.potential, 2)
        field_of = lambda L1: semiclassics.HamiltonianField.potential(v, dv, d2v, L1=L1)
    else:
        xs, vs = _reduced_potential(cfg, run)
        field0 = semiclassics.HamiltonianField.from_samples(xs, vs)
        v = lambda s: field0.H(0.0, s)
        field_of = lambda L1: semiclassics.HamiltonianField.from_samples(xs, vs, L1=L1)
    columns, cols = ["n"], [ns]
    if opts.method in ("bohr-sommerfeld", "both"):
        L1 = None
        if opts.L1 is not None:
            fn = compile_expression(opts.L1, ("p", "x"))
            L1 = lambda p, x: complex(fn(p, x))
        series = semiclassics.spectral_series(v, cfg.h, ns, opts.x_range, field_of(L1) if L1 else None)
        columns += ["E", "beta", "E_j"]
        cols += [[e.E for e in series.entries], [float(e.beta[0]) for e in series.entries],
                 [float(e.E_j[0]) for e in series.entries]]
    if opts.method in ("direct", "both"):
        x = np.linspace(*opts.x_range, opts.direct_points)
        ess = reduction.EssentialHamiltonian(x, cfg.h, np.asarray(v(x), dtype=float))
        E, _ = reduction.solve_reduced_stationary(ess, count=max(ns) + 1)
        columns.append("E_direct")
        cols.append([float(E[k]) for k in ns])
    run.write_csv("bound_states.csv", columns, zip(*cols))


def cmd_scatter(cfg: RunConfig, run: Run):
    opts = cfg.section("scatter")
    v = compile_expression(opts.potential)
    energies = opts.energies.array() if hasattr(opts.energies, "array") else np.asarray(opts.energies, dtype=float)
    rows = []
    for E in energies:
        out = semiclassics.scatter_1d(v, float(E), cfg.h or 1.0, opts.v_minus, opts.v_plus, opts.x_range,
                                      opts.offset_minus, opts.offset_plus)
        rows.append([E, out.outcome, out.p_minus, out.p_plus, out.x_f])
    run.write_csv("scatter.csv", ["E", "outcome", "p_minus", "p_plus", "x_f"], rows)


def _gaussian(opts):
    if opts.amplitude is not None:
        return compile_expression(opts.amplitude)
    return lambda s: np.exp(-(np.asarray(s) - opts.x0) ** 2 / (2 * opts.sigma**2))


def _propagate_cn(cfg: RunConfig, run: Run, opts):
    cfg.require("mu")
    mu = cfg.mu
    model, x, branches = _branches(cfg, run, 2)
    if isinstance(model, transverse.RigidWall):
        lo, hi = model.walls(x)
        if np.ptp(lo) > 0 or np.ptp(hi) > 0:
            raise ValueError("Crank-Nicolson needs straight rigid walls")
    y = branches[0].y_grid
    grid = reference2d.Rect2DGrid(x, y)
    amp = _gaussian(opts)
    v_ext = compile_expression(cfg.v_ext)
    start = branches[0].w * (amp(x) * np.exp(1j * opts.pbar * x / mu))[:, None]
    psi0 = reference2d.Wavefunction2D(grid, grid.from_interior(grid.to_interior(start)))
    psi0 = reference2d.Wavefunction2D(grid, psi0.values / psi0.norm())
    if isinstance(model, transverse.RigidWall):
        pot = lambda X, Y: v_ext(X)
    else:
        pot = lambda X, Y: model.potential(X, Y) + v_ext(X)
    A = reference2d.assemble_2d(mu, pot, grid)
    i0 = int(np.argmin(np.abs(x - opts.x0)))
    shift = 0.5 * opts.pbar**2 + branches[0].eps[i0] + float(v_ext(x[i0]))
    times, snaps = reference2d.evolve_cn(psi0, A, mu, opts.dt, opts.steps, opts.snapshot_every, shift=shift)
    wy = np.full(y.size, grid.dy)
    rows = []
    for t, s in zip(times, snaps):
        density = np.abs(s.values) ** 2 @ wy
        mode1 = np.abs(reference2d.project_modes(s, branches[:1])[0]) ** 2
        rows += [[t, xv, d, m] for xv, d, m in zip(x, density, mode1)]
    run.write_csv("cn.csv", ["t", "x", "density", "mode1"], rows)
    run.extra["norm_drift"] = abs(snaps[-1].norm() - 1.0)
    return times, x, branches


def cmd_propagate(cfg: RunConfig, run: Run):
    opts = cfg.section("propagate")
    times = opts.times
    x_eval = cfg.x_grid.array() if cfg.x_grid is not None else None
    reduced = None
    if opts.method in ("cn", "both"):
        t_cn, x_eval, branches = _propagate_cn(cfg, run, opts)
        reduced = (x_eval, compile_expression(cfg.v_ext)(x_eval) + branches[0].eps)
        times = list(t_cn) if opts.method == "both" else times
    if opts.method == "cn":
        return
    h = cfg.h if cfg.h is not None else cfg.mu
    if h is None:
        raise ValueError("the WKB route needs h (or mu)")
    if times is None:
        raise ValueError("the WKB route needs propagate.times")
    if opts.potential is not None:
        v = opts.potential
        field = semiclassics.HamiltonianField.potential(compile_expression(v), compile_derivative(v),
                                                        compile_derivative(v, 2))
    else:
        if reduced is None:
            reduced = _reduced_potential(cfg, run)
        field = semiclassics.HamiltonianField.from_samples(*reduced)
    S0_text = opts.S0 if opts.S0 is not None else f"({opts.pbar!r})*x"
    S0, dS0, d2S0 = compile_expression(S0_text), compile_derivative(S0_text), compile_derivative(S0_text, 2)
    fan_nodes = opts.fan.array() if opts.fan is not None else np.linspace(opts.x0 - 6 * opts.sigma,
                                                                          opts.x0 + 6 * opts.sigma, 401)
    t_fan = sorted(set([0.0] + [float(t) for t in times]))
    fan = semiclassics.launch_fan(field, S0, dS0, d2S0, _gaussian(opts), fan_nodes, t_fan)
    if x_eval is None:
        x_eval = np.linspace(fan.x.min(), fan.x.max(), 401)
    rows = []
    for t in times:
        psi = semiclassics.wkb_evaluate(fan, float(t), x_eval, h)
        rows += [[t, xv, a] for xv, a in zip(x_eval, np.abs(psi) ** 2)]
    run.write_csv("wkb.csv", ["t", "x", "abs2"], rows)


def cmd_validate(cfg: RunConfig, run: Run):
    from . import acceptance

    results = acceptance.run_all(set(cfg.section("validate").criteria))
    rows = [[r.number, c.label, c.value, c.threshold, c.passed] for r in results for c in r.checks]
    run.write_csv("validate.csv", ["criterion", "check", "value", "threshold", "passed"], rows)
    run.extra["criteria"] = [r.as_dict() for r in results]
    failed = [r.number for r in results if not r.passed]
    run.extra["failed"] = failed
    for r in results:
        print(r.line())
    if failed:
        raise _ValidationFailed(f"criteria {failed} failed")


def cmd_regimes(cfg: RunConfig, run: Run):
    opts = cfg.section("regimes")
    rows = []
    for h in opts.h:
        try:
            tag = reduction.classify_regime(opts.mu, h).value
        except RegimeMismatch:
            tag = "rejected"
        rows.append([opts.mu, h, np.log(h) / np.log(opts.mu) + 0.0, tag])
    run.write_csv("regimes.csv", ["mu", "h", "exponent", "tag"], rows)


HANDLERS = {
    "bands": cmd_bands,
    "reduce": cmd_reduce,
    "bound-states": cmd_bound_states,
    "scatter": cmd_scatter,
    "propagate": cmd_propagate,
    "validate": cmd_validate,
    "regimes": cmd_regimes,
}


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def run(command: str, config_path, outdir=None, threads: int = 1) -> int:
    """Execute one command; returns the process exit code."""
    return execute(command, config_path, outdir, threads)[0]


def execute(command: str, config_path, outdir=None, threads: int = 1) -> tuple[int, Path]:
    """Execute one command; returns ``(exit code, output directory)``."""
    if command not in HANDLERS:
        raise ValueError(f"unknown command {command!r}")
    t0 = time.perf_counter()
    raw = Path(config_path).read_bytes() if Path(config_path).exists() else b""
    summary = {"command": command, "version": __version__}
    cfg = None
    try:
        if not raw:
            raise FileNotFoundError(f"configuration {config_path} not found or empty")
        cfg = load_config(raw.decode())
        digest = config_hash(cfg)
    except (ValidationError, ValueError, FileNotFoundError) as exc:
        digest = hashlib.sha256(raw).hexdigest()[:12]
        code, error, message = EXIT_INVALID, type(exc).__name__, str(exc)
    base = Path(outdir or (cfg.outdir if cfg is not None and cfg.outdir else "adiax-out"))
    root = base / command / digest
    root.mkdir(parents=True, exist_ok=True)
    job = Run(root, threads)
    summary["config_hash"] = digest
    if cfg is not None:
        (root / "config.json").write_text(json.dumps(cfg.model_dump(mode="json", by_alias=True), indent=2,
                                                     sort_keys=True) + "\n")
        try:
            HANDLERS[command](cfg, job)
            code, error, message = EXIT_OK, "ok", ""
        except _ValidationFailed as exc:
            code, error, message = EXIT_INVALID, "ValidationFailed", str(exc)
        except AdiaxError as exc:
            job.discard()
            code, error, message = EXIT_NUMERICAL, type(exc).__name__, str(exc)
        except (ValidationError, ValueError) as exc:
            job.discard()
            code, error, message = EXIT_INVALID, type(exc).__name__, str(exc)
        except BaseException:
            job.discard()
            raise
    summary.update(job.extra)
    summary.setdefault("regime", None)
    summary.update({
        "error": error,
        "message": message,
        "exit_code": code,
        "wall_time": time.perf_counter() - t0,
        "files": [p.name for p in job.files],
    })
    (root / "summary.json").write_text(json.dumps(summary, indent=2, default=_json_default) + "\n")
    return code, root


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="adiax", description="Adiabatic reduction of 2D wave problems.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--outdir", default=None, help="output root (default: config outdir or ./adiax-out)")
    parser.add_argument("--threads", type=int, default=1, help="worker threads for branch tracking")
    args = parser.parse_args(argv)
    if args.threads < 1:
        parser.error("--threads must be at least 1")
    code, root = execute(args.command, args.config, args.outdir, args.threads)
    print(f"adiax {args.command}: exit {code}, results in {root}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
