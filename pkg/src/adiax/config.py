"""Strict run configuration for the command-line front end.

A configuration is one JSON document.  Unknown keys are rejected and every
numeric field is range checked before any computation starts.  Functions of
the slow variable are given as expression strings such as ``"x**2/2"`` and
compiled with sympy.
"""

from __future__ import annotations

import hashlib
import json
from typing import Literal

import numpy as np
import sympy
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt, field_validator, model_validator

_ALLOWED = {
    "x": ("x",),
    "xy": ("x", "y"),
    "px": ("p", "x"),
}


def compile_expression(text: str, variables: tuple[str, ...] = ("x",)):
    """Vectorized numpy callable for an expression in the given variables."""
    syms = sympy.symbols(variables)
    syms = syms if isinstance(syms, tuple) else (syms,)
    try:
        expr = sympy.sympify(text, locals={name: s for name, s in zip(variables, syms)})
    except (sympy.SympifyError, SyntaxError, TypeError) as exc:
        raise ValueError(f"cannot parse expression {text!r}") from exc
    extra = {str(s) for s in expr.free_symbols} - set(variables)
    if extra:
        raise ValueError(f"expression {text!r} uses unknown symbols {sorted(extra)}")
    fn = sympy.lambdify(syms, expr, modules="numpy")

    def call(*args):
        arrays = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in args))
        out = np.asarray(fn(*arrays))
        return np.broadcast_to(out, arrays[0].shape).astype(out.dtype, copy=True)

    call.expression = text
    return call


def compile_derivative(text: str, order: int = 1, variable: str = "x"):
    """Callable for the ``order``-th derivative of a one-variable expression."""
    x = sympy.Symbol(variable)
    expr = sympy.diff(sympy.sympify(text, locals={variable: x}), x, order)
    return compile_expression(str(expr), (variable,))


def _expression_field(variables: str):
    def check(v):
        if v is not None:
            compile_expression(v, _ALLOWED[variables])
        return v

    return check


class Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class Grid1D(Strict):
    start: float
    stop: float
    n: int = Field(ge=3)

    @model_validator(mode="after")
    def _ordered(self):
        if not self.stop > self.start:
            raise ValueError("grid stop must exceed start")
        return self

    def array(self) -> np.ndarray:
        return np.linspace(self.start, self.stop, self.n)


class Confinement(Strict):
    """Transverse confinement of a waveguide.

    ``rigid``: walls ``y1(x) < y2(x)``; ``power``: ``(y/D(x))**(2m)``;
    ``harmonic``: ``omega**2 y**2 / 2``; ``expression``: any ``v(x, y)``.
    """

    kind: Literal["rigid", "power", "harmonic", "expression"]
    y1: str = "0"
    y2: str = "1"
    D: str = "1"
    m: PositiveInt = 1
    omega: PositiveFloat = 1.0
    expression: str | None = None

    _x = field_validator("y1", "y2", "D")(_expression_field("x"))
    _xy = field_validator("expression")(_expression_field("xy"))

    @model_validator(mode="after")
    def _complete(self):
        if self.kind == "expression" and self.expression is None:
            raise ValueError("confinement kind 'expression' needs an expression")
        return self


class BlochPotential(Strict):
    """Mathieu-type fast potential ``2 a(x) cos y`` with phase derivative ``U(x)``."""

    amplitude: str
    U: str = "1"
    n_pw: int = Field(16, ge=2, le=256)
    P_points: int = Field(128, ge=8, le=4096)
    n_y: int = Field(128, ge=16, le=4096)

    _x = field_validator("amplitude", "U")(_expression_field("x"))


class BandsOptions(Strict):
    K: PositiveInt = 1
    gap_tol: float = Field(1e-8, ge=0)


class ReduceOptions(Strict):
    nu: PositiveInt = 1


class BoundStatesOptions(Strict):
    potential: str | None = None
    n: list[int] = Field(min_length=1)
    method: Literal["bohr-sommerfeld", "direct", "both"] = "bohr-sommerfeld"
    x_range: tuple[float, float]
    L1: str | None = None
    direct_points: int = Field(2001, ge=16)

    _x = field_validator("potential")(_expression_field("x"))
    _px = field_validator("L1")(_expression_field("px"))

    @field_validator("n")
    @classmethod
    def _non_negative(cls, v):
        if min(v) < 0:
            raise ValueError("quantum numbers must be non-negative")
        return v

    @field_validator("x_range")
    @classmethod
    def _range(cls, v):
        if not v[1] > v[0]:
            raise ValueError("x_range must be increasing")
        return v


class ScatterOptions(Strict):
    potential: str
    energies: Grid1D | list[float]
    v_minus: float = 0.0
    v_plus: float = 0.0
    offset_minus: float = 0.0
    offset_plus: float = 0.0
    x_range: tuple[float, float]

    _x = field_validator("potential")(_expression_field("x"))


class PropagateOptions(Strict):
    """WKB fan and/or 2D Crank-Nicolson evolution of a Gaussian packet.

    The WKB route needs ``potential`` (the reduced potential) and uses
    ``S0 = pbar x``; the Crank-Nicolson route needs a waveguide confinement
    and the x/y grids of the run.
    """

    method: Literal["wkb", "cn", "both"] = "wkb"
    potential: str | None = None
    S0: str | None = None
    amplitude: str | None = None
    x0: float = 0.0
    sigma: PositiveFloat = 0.25
    pbar: float = 1.0
    fan: Grid1D | None = None
    times: list[float] | None = None
    dt: PositiveFloat = 0.005
    steps: PositiveInt = 200
    snapshot_every: PositiveInt = 50

    _x = field_validator("potential", "S0", "amplitude")(_expression_field("x"))

    @field_validator("times")
    @classmethod
    def _times(cls, v):
        if v is not None and (min(v) < 0 or any(b <= a for a, b in zip(v, v[1:]))):
            raise ValueError("times must be non-negative and increasing")
        return v


class RegimesOptions(Strict):
    mu: float = Field(gt=0, lt=1)
    h: list[PositiveFloat] = Field(min_length=1)


class ValidateOptions(Strict):
    criteria: list[int] = Field(default_factory=lambda: list(range(1, 11)))

    @field_validator("criteria")
    @classmethod
    def _known(cls, v):
        if not v or any(k < 1 or k > 10 for k in v):
            raise ValueError("criteria are numbered 1..10")
        return v


class RunConfig(Strict):
    problem: Literal["waveguide", "bloch"] = "waveguide"
    mu: float | None = Field(None, gt=0, lt=1)
    h: PositiveFloat | None = None
    regime: Literal["ShortWave", "MediumWave", "LongWave", "UltraShortWave"] | None = None
    x_grid: Grid1D | None = None
    y_grid: Grid1D | None = None
    y_points: int = Field(201, ge=16)
    confinement: Confinement | None = None
    v_ext: str = "0"
    curvature: str | None = None
    bloch: BlochPotential | None = None
    bands: BandsOptions | None = None
    reduce: ReduceOptions | None = None
    bound_states: BoundStatesOptions | None = None
    scatter: ScatterOptions | None = None
    propagate: PropagateOptions | None = None
    regimes: RegimesOptions | None = None
    validate_: ValidateOptions | None = Field(None, alias="validate")
    outdir: str | None = None
    seed: int = Field(0, ge=0)

    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)

    _x = field_validator("v_ext", "curvature")(_expression_field("x"))

    @model_validator(mode="after")
    def _problem_data(self):
        if self.problem == "bloch" and self.bloch is None:
            raise ValueError("a bloch problem needs a 'bloch' section")
        return self

    def section(self, command: str):
        name = {"bound-states": "bound_states", "validate": "validate_"}.get(command, command)
        value = getattr(self, name)
        if value is None:
            default = {"bands": BandsOptions, "reduce": ReduceOptions, "validate": ValidateOptions}.get(command)
            if default is None:
                raise ValueError(f"command {command!r} needs a '{command.replace('-', '_')}' section")
            return default()
        return value

    def require(self, *names: str):
        missing = [n for n in names if getattr(self, n) is None]
        if missing:
            raise ValueError(f"this command needs: {', '.join(missing)}")


def load_config(text: str) -> RunConfig:
    """Parse and validate one JSON document."""
    data = json.loads(text)
    if not isinstance(data, dict):
        raise ValueError("the configuration must be a JSON object")
    return RunConfig.model_validate(data)


def config_hash(config: RunConfig) -> str:
    """First 12 hex digits of the SHA-256 of the canonical validated config."""
    canon = json.dumps(config.model_dump(mode="json", by_alias=True, exclude={"outdir"}), sort_keys=True,
                       separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:12]
