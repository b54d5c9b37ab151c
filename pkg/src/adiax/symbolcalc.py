"""Truncated mu-expansions of operator symbols and their composition.

A symbol is stored as a list of mu-orders; each order is a polynomial in the
momentum ``p`` whose coefficients are sampled on a uniform ``x`` grid.  A
coefficient sample may be a scalar, a transverse field (vector on the
transverse grid) or a transverse operator (dense matrix on that grid).

Composition follows the left ordering: the symbol of ``A(p - i mu d/dx, x) B``
has order-``mu^j`` term

    sum_{a+b+k=j} (-i)^k / k! * d_p^k A_a * d_x^k B_b .

``d_p`` is exact on the polynomial; ``d_x`` uses second-order finite
differences on the grid.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np

from . import _grid
from .errors import GridMismatch

SCALAR = "scalar"
FIELD = "field"
OPERATOR = "operator"

P_SAMPLES = np.array([-1.0, -0.5, 0.0, 0.5, 1.0])

_KIND_BY_TAIL = {0: SCALAR, 1: FIELD, 2: OPERATOR}


def _kind_of(coeffs: np.ndarray) -> str:
    try:
        return _KIND_BY_TAIL[coeffs.ndim - 2]
    except KeyError:
        raise ValueError(f"coefficient array of rank {coeffs.ndim} not supported") from None


@dataclass(frozen=True)
class PSymbol:
    """Polynomial in p with x-sampled coefficients.

    ``coeffs[k, i, ...]`` multiplies ``p**k`` at grid node ``i``.  The trailing
    axes define the kind: none for scalar, one for a transverse field, two for
    a transverse operator.
    """

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        _kind_of(c)
        if not np.all(np.isfinite(c)):
            raise ValueError("symbol coefficients must be finite")
        object.__setattr__(self, "coeffs", c)

    @property
    def kind(self) -> str:
        return _kind_of(self.coeffs)

    @property
    def degree(self) -> int:
        return self.coeffs.shape[0] - 1

    @property
    def nx(self) -> int:
        return self.coeffs.shape[1]

    @property
    def tail(self) -> tuple:
        return self.coeffs.shape[2:]

    def d_p(self, k: int = 1) -> "PSymbol":
        d = self.degree
        if k > d:
            return PSymbol(np.zeros((1,) + self.coeffs.shape[1:], dtype=complex))
        powers = np.arange(k, d + 1)
        fall = np.array([factorial(n) // factorial(n - k) for n in powers], dtype=float)
        fall = fall.reshape((-1,) + (1,) * (self.coeffs.ndim - 1))
        return PSymbol(self.coeffs[k:] * fall)

    def d_x(self, k: int, dx: float) -> "PSymbol":
        if k == 0:
            return self
        return PSymbol(_grid.dk(self.coeffs, dx, k, axis=1))

    def evaluate(self, p) -> np.ndarray:
        """Values at momentum ``p`` (scalar), shape ``(nx, *tail)``."""
        out = np.zeros(self.coeffs.shape[1:], dtype=complex)
        for c in self.coeffs[::-1]:
            out = out * p + c
        return out

    def padded(self, degree: int) -> np.ndarray:
        if degree < self.degree:
            raise ValueError("cannot pad to a lower degree")
        pad = [(0, degree - self.degree)] + [(0, 0)] * (self.coeffs.ndim - 1)
        return np.pad(self.coeffs, pad)


def _pointwise(a: np.ndarray, b: np.ndarray, ka: str, kb: str) -> np.ndarray:
    """Product of coefficient samples (leading axis is x)."""
    if ka == SCALAR and kb == SCALAR:
        return a * b
    if ka == SCALAR:
        return a.reshape(a.shape + (1,) * (b.ndim - 1)) * b
    if kb == SCALAR:
        return a * b.reshape(b.shape + (1,) * (a.ndim - 1))
    if ka == OPERATOR and kb == FIELD:
        return np.einsum("xij,xj->xi", a, b)
    if ka == OPERATOR and kb == OPERATOR:
        return np.einsum("xij,xjk->xik", a, b)
    raise ValueError(f"product {ka} * {kb} is not defined")


def _product_kind(ka: str, kb: str) -> str:
    if ka == SCALAR:
        return kb
    if kb == SCALAR:
        return ka
    if ka == OPERATOR:
        return kb
    raise ValueError(f"product {ka} * {kb} is not defined")


def psymbol_product(A: PSymbol, B: PSymbol) -> PSymbol:
    """Pointwise product in x, polynomial product in p."""
    ka, kb = A.kind, B.kind
    if ka != SCALAR and kb != SCALAR and A.tail[-1] != B.tail[0]:
        raise GridMismatch("incompatible transverse grids")
    kind = _product_kind(ka, kb)
    da, db = A.degree, B.degree
    out = None
    for i in range(da + 1):
        for j in range(db + 1):
            term = _pointwise(A.coeffs[i], B.coeffs[j], ka, kb)
            if out is None:
                out = np.zeros((da + db + 1,) + term.shape, dtype=complex)
            out[i + j] += term
    assert _kind_of(out) == kind
    return PSymbol(out)


def _add(A: PSymbol, B: PSymbol) -> PSymbol:
    if A.coeffs.shape[1:] != B.coeffs.shape[1:]:
        raise GridMismatch("cannot add symbols of different kind or grid")
    d = max(A.degree, B.degree)
    return PSymbol(A.padded(d) + B.padded(d))


@dataclass(frozen=True)
class MuSymbol:
    """Truncated series ``sum_j mu**j orders[j]`` on a shared uniform x grid."""

    orders: tuple
    x_grid: np.ndarray

    def __post_init__(self):
        orders = tuple(o if isinstance(o, PSymbol) else PSymbol(o) for o in self.orders)
        if not orders:
            raise ValueError("a symbol needs at least one order")
        x = np.asarray(self.x_grid, dtype=float)
        _grid.spacing(x, "x_grid")
        shapes = {o.coeffs.shape[1:] for o in orders}
        if len(shapes) != 1:
            raise GridMismatch("all orders must share kind and grid")
        if orders[0].nx != x.size:
            raise GridMismatch("coefficients do not match x_grid")
        object.__setattr__(self, "orders", orders)
        object.__setattr__(self, "x_grid", x)

    @property
    def max_mu_order(self) -> int:
        return len(self.orders) - 1

    @property
    def p_degree(self) -> int:
        return max(o.degree for o in self.orders)

    @property
    def kind(self) -> str:
        return self.orders[0].kind

    @property
    def dx(self) -> float:
        return _grid.spacing(self.x_grid)

    @classmethod
    def from_orders(cls, x_grid, *coeff_arrays) -> "MuSymbol":
        return cls(tuple(PSymbol(c) for c in coeff_arrays), x_grid)

    @classmethod
    def identity(cls, x_grid) -> "MuSymbol":
        x = np.asarray(x_grid, dtype=float)
        return cls((PSymbol(np.ones((1, x.size))),), x)

    def order(self, j: int) -> PSymbol:
        """Order ``j`` coefficient, zero beyond the stored truncation."""
        if j <= self.max_mu_order:
            return self.orders[j]
        return PSymbol(np.zeros((1,) + self.orders[0].coeffs.shape[1:], dtype=complex))

    def evaluate(self, mu: float, p) -> np.ndarray:
        out = 0
        for j, o in enumerate(self.orders):
            out = out + mu**j * o.evaluate(p)
        return out

    def __add__(self, other: "MuSymbol") -> "MuSymbol":
        _grid.same_grid(self.x_grid, other.x_grid, "x_grid")
        n = max(self.max_mu_order, other.max_mu_order)
        return MuSymbol(tuple(_add(self.order(j), other.order(j)) for j in range(n + 1)), self.x_grid)

    def __sub__(self, other: "MuSymbol") -> "MuSymbol":
        return self + other.scaled(-1.0)

    def scaled(self, c: complex) -> "MuSymbol":
        return MuSymbol(tuple(PSymbol(c * o.coeffs) for o in self.orders), self.x_grid)

    def shifted(self, k: int = 1) -> "MuSymbol":
        """Multiply by ``mu**k``."""
        zero = PSymbol(np.zeros((1,) + self.orders[0].coeffs.shape[1:], dtype=complex))
        return MuSymbol((zero,) * k + self.orders, self.x_grid)


def compose(A: MuSymbol, B: MuSymbol, N: int | None = None) -> MuSymbol:
    """Symbol of the operator product ``A B`` truncated at order ``mu**N``."""
    _grid.same_grid(A.x_grid, B.x_grid, "x_grid")
    n_max = A.max_mu_order + B.max_mu_order + A.p_degree
    if N is None:
        N = n_max
    if N < 0 or N > n_max:
        raise ValueError(f"order N={N} exceeds representable order {n_max}")
    dx = A.dx
    dA = {}
    dB = {}
    orders = []
    for j in range(N + 1):
        acc = None
        for k in range(min(j, A.p_degree) + 1):
            coef = (-1j) ** k / factorial(k)
            for a in range(min(j - k, A.max_mu_order) + 1):
                b = j - k - a
                if b > B.max_mu_order:
                    continue
                if (a, k) not in dA:
                    dA[a, k] = A.orders[a].d_p(k)
                if (b, k) not in dB:
                    dB[b, k] = B.orders[b].d_x(k, dx)
                term = psymbol_product(dA[a, k], dB[b, k])
                term = PSymbol(coef * term.coeffs)
                acc = term if acc is None else _add(acc, term)
        if acc is None:
            # all contributing orders were truncated away
            kind_shape = psymbol_product(A.orders[0], B.orders[0]).coeffs.shape[1:]
            acc = PSymbol(np.zeros((1,) + kind_shape, dtype=complex))
        orders.append(acc)
    return MuSymbol(tuple(orders), A.x_grid)


def residual_series(H: MuSymbol, chi: MuSymbol, L: MuSymbol, chi_t: MuSymbol | None = None,
                    N: int | None = None) -> MuSymbol:
    """Series of ``chi o L + i mu chi_t - H o chi``."""
    if chi.kind != FIELD:
        raise ValueError("chi must have transverse-field coefficients")
    if L.kind != SCALAR:
        raise ValueError("L must be scalar valued")
    if H.kind != OPERATOR:
        raise ValueError("H must have transverse-operator coefficients")
    if H.orders[0].tail[-1] != chi.orders[0].tail[0]:
        raise GridMismatch("incompatible transverse grids")
    if N is None:
        N = max(chi.max_mu_order + L.max_mu_order + chi.p_degree,
                H.max_mu_order + chi.max_mu_order + H.p_degree,
                chi.max_mu_order + 1 if chi_t is not None else 0)
    left = compose(chi, L, min(N, chi.max_mu_order + L.max_mu_order + chi.p_degree))
    right = compose(H, chi, min(N, H.max_mu_order + chi.max_mu_order + H.p_degree))
    res = left - right
    if chi_t is not None:
        if chi_t.orders[0].tail != chi.orders[0].tail:
            raise GridMismatch("chi_t must live on the transverse grid of chi")
        res = res + chi_t.scaled(1j).shifted(1)
    return MuSymbol(tuple(res.order(j) for j in range(N + 1)), res.x_grid)


def order_norms(S: MuSymbol, p_scale: float = 1.0) -> np.ndarray:
    """Max-norm of every order over the p-sample set, x grid and transverse grid."""
    ps = P_SAMPLES * p_scale
    return np.array([max(np.max(np.abs(o.evaluate(p)), initial=0.0) for p in ps) for o in S.orders])


def reduction_residual(H: MuSymbol, chi: MuSymbol, L: MuSymbol, chi_t: MuSymbol | None = None,
                       N: int | None = None, p_scale: float = 1.0) -> np.ndarray:
    """Per-order max-norms of the intertwining identity residual."""
    return order_norms(residual_series(H, chi, L, chi_t, N), p_scale)


def series_norm(S: MuSymbol, mu: float, p_scale: float = 1.0) -> float:
    """Max-norm of the summed series at a given mu over the p-sample set."""
    return max(float(np.max(np.abs(S.evaluate(mu, p)))) for p in P_SAMPLES * p_scale)
