"""Test functions with analytic derivatives up to order four.

Every function is backed by a sympy expression so that derivatives, dilations
and partial evaluations stay exact.  Evaluation is vectorised: a call takes an
array of shape ``(..., m)`` (or ``(...)`` when m = 1) and returns ``(...)``.
"""

from __future__ import annotations

from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
import sympy as sp

from .errors import ExpressionError
from .expressions import parse_expression, point_symbols

MAX_DERIVATIVE_ORDER = 4


class TestFunction:
    """A smooth function on R^m with optional compact support box.

    Parameters
    ----------
    expr : sympy expression in ``symbols``.
    symbols : the m coordinate symbols.
    support : optional sequence of ``(lo, hi)`` per axis; the function is
        declared to vanish outside the open box (boundary included), and
        lattice operators skip those points.
    tag : short identifier used in reports.
    check : run the derivative self-check on construction.
    """

    __test__ = False  # keep pytest from collecting this class

    def __init__(self, expr, symbols: Sequence[sp.Symbol], support=None, tag: str = "expression",
                 check: bool = True):
        self.expr = sp.sympify(expr)
        self.symbols = tuple(symbols)
        self.arity = len(self.symbols)
        self.support = None if support is None else tuple((float(lo), float(hi)) for lo, hi in support)
        if self.support is not None and len(self.support) != self.arity:
            raise ValueError("support box must have one interval per axis")
        self.tag = tag
        self._compiled = {}
        if check:
            self.check_derivatives()

    def __repr__(self):
        return f"TestFunction({self.tag!r}, arity={self.arity})"

    # -- evaluation -------------------------------------------------------

    def _points(self, points):
        pts = np.asarray(points, dtype=float)
        if self.arity == 1 and (pts.ndim == 0 or pts.shape[-1] != 1):
            pts = pts[..., None]
        if pts.shape[-1] != self.arity:
            raise ValueError(f"expected points with {self.arity} coordinates, got shape {pts.shape}")
        return pts

    def inside_support(self, points) -> np.ndarray:
        pts = self._points(points)
        if self.support is None:
            return np.ones(pts.shape[:-1], dtype=bool)
        lo = np.array([s[0] for s in self.support])
        hi = np.array([s[1] for s in self.support])
        return np.all((pts > lo) & (pts < hi), axis=-1)

    def _compile(self, index):
        if index not in self._compiled:
            expr = self.expr
            for sym, k in zip(self.symbols, index):
                if k:
                    expr = sp.diff(expr, sym, k)
            self._compiled[index] = sp.lambdify(self.symbols, expr, modules="numpy")
        return self._compiled[index]

    def _evaluate(self, index, points):
        pts = self._points(points)
        func = self._compile(index)
        with np.errstate(all="ignore"):
            vals = np.asarray(func(*[pts[..., j] for j in range(self.arity)]), dtype=float)
        vals = np.broadcast_to(vals, pts.shape[:-1]).copy()
        if self.support is not None:
            vals[~self.inside_support(pts)] = 0.0
        return vals

    def __call__(self, points) -> np.ndarray:
        return self._evaluate((0,) * self.arity, points)

    def derivative(self, index, points) -> np.ndarray:
        """Partial derivative given as an order (m = 1) or a multi-index."""
        if isinstance(index, (int, np.integer)):
            if self.arity != 1:
                raise ValueError("use a multi-index for functions of several variables")
            index = (int(index),)
        index = tuple(int(k) for k in index)
        if len(index) != self.arity or min(index) < 0 or sum(index) > MAX_DERIVATIVE_ORDER:
            raise ValueError(f"derivative multi-index {index} not supported")
        return self._evaluate(index, points)

    def hessian(self, points) -> np.ndarray:
        pts = self._points(points)
        m = self.arity
        out = np.empty(pts.shape[:-1] + (m, m))
        for i in range(m):
            for j in range(i, m):
                idx = [0] * m
                idx[i] += 1
                idx[j] += 1
                out[..., i, j] = out[..., j, i] = self._evaluate(tuple(idx), pts)
        return out

    # -- derived functions ------------------------------------------------

    def second_partial(self, i: int, j: int) -> "TestFunction":
        expr = sp.diff(self.expr, self.symbols[i], self.symbols[j])
        return TestFunction(expr, self.symbols, self.support, tag=f"d2[{i},{j}]{self.tag}", check=False)

    def dilated(self, factor: float, axes: Optional[Sequence[int]] = None) -> "TestFunction":
        """``y ↦ f(factor · y)`` on the chosen axes (all by default)."""
        axes = range(self.arity) if axes is None else axes
        subs = {self.symbols[j]: factor * self.symbols[j] for j in axes}
        support = None
        if self.support is not None:
            support = [(lo / factor, hi / factor) if j in axes else (lo, hi)
                       for j, (lo, hi) in enumerate(self.support)]
        expr = self.expr.xreplace(subs)
        return TestFunction(expr, self.symbols, support, tag=f"{self.tag}@x{factor:g}", check=False)

    def with_fixed(self, values: Sequence[float], start: int) -> "TestFunction":
        """Freeze coordinates ``start, start+1, …`` at ``values``; keep the rest."""
        fixed = {self.symbols[start + k]: sp.Float(v) for k, v in enumerate(values)}
        keep = [s for s in self.symbols if s not in fixed]
        support = None
        if self.support is not None:
            for k, v in enumerate(values):
                lo, hi = self.support[start + k]
                if not lo < v < hi:
                    return TestFunction(sp.Integer(0), keep, None, tag=f"{self.tag}|fixed", check=False)
            support = [self.support[j] for j, s in enumerate(self.symbols) if s not in fixed]
        return TestFunction(self.expr.xreplace(fixed), keep, support, tag=f"{self.tag}|fixed", check=False)

    def sup_abs_on(self, points) -> float:
        vals = self(points)
        return float(np.max(np.abs(vals))) if vals.size else 0.0

    # -- self-check -------------------------------------------------------

    def sample_points(self, count: int = 5) -> np.ndarray:
        rng = np.random.default_rng(20240611)
        if self.support is None:
            lo, hi = np.full(self.arity, 0.3), np.full(self.arity, 2.7)
        else:
            lo = np.array([s[0] for s in self.support])
            hi = np.array([s[1] for s in self.support])
            lo, hi = lo + 0.1 * (hi - lo), hi - 0.1 * (hi - lo)
        return lo + (hi - lo) * rng.random((count, self.arity))

    def check_derivatives(self, rtol: float = 1e-5) -> None:
        """Compare every derivative of order 1..4 with central differences of the order below."""
        pts = self.sample_points()
        m = self.arity
        for order in range(1, MAX_DERIVATIVE_ORDER + 1):
            for index in _multi_indices(m, order):
                axis = next(j for j, k in enumerate(index) if k)
                lower = list(index)
                lower[axis] -= 1
                lower = tuple(lower)
                h = 1e-5 * np.maximum(1.0, np.abs(pts[:, axis]))
                step = np.zeros_like(pts)
                step[:, axis] = h
                fd = (self._evaluate(lower, pts + step) - self._evaluate(lower, pts - step)) / (2 * h)
                exact = self._evaluate(index, pts)
                scale = np.maximum(1.0, np.abs(exact))
                if not np.all(np.abs(fd - exact) <= rtol * scale):
                    worst = float(np.max(np.abs(fd - exact) / scale))
                    raise ExpressionError(
                        f"{self.tag}: derivative {index} disagrees with finite differences (rel {worst:.2e})")


def _multi_indices(m: int, order: int):
    if m == 1:
        yield (order,)
        return
    for k in range(order, -1, -1):
        for rest in _multi_indices(m - 1, order - k):
            yield (k,) + rest


# ---------------------------------------------------------------------------
# Constructors


def from_expression(text: str, arity: int = 1, support=None, tag: Optional[str] = None) -> TestFunction:
    """Parse ``text`` over ``t`` (m = 1), ``s, t`` (m = 2) or ``t1..tm``."""
    syms = point_symbols(arity)
    return TestFunction(parse_expression(text, syms), syms, support, tag=tag or text)


def monomial(k: int, arity: int = 1, axis: int = 0) -> TestFunction:
    syms = point_symbols(arity)
    return TestFunction(syms[axis] ** k, syms, tag=f"monomial-{k}")


def gaussian_bump(center=1.0, width=0.5, arity: int = 1) -> TestFunction:
    """exp(−|t − c|² / (2 w²)); smooth and rapidly decaying but not compactly supported."""
    syms = point_symbols(arity)
    centers = np.broadcast_to(np.asarray(center, dtype=float), (arity,))
    r2 = sum((s - sp.Float(c)) ** 2 for s, c in zip(syms, centers))
    return TestFunction(sp.exp(-r2 / (2 * sp.Float(width) ** 2)), syms, tag="gaussian-bump")


def smooth_bump(center=1.0, radius=1.0, arity: int = 1) -> TestFunction:
    """Tensor product of exp(1 − 1/(1 − ((t − c)/r)²)) on |t − c| < r; C^∞ with compact support."""
    syms = point_symbols(arity)
    centers = np.broadcast_to(np.asarray(center, dtype=float), (arity,))
    radii = np.broadcast_to(np.asarray(radius, dtype=float), (arity,))
    expr = sp.Integer(1)
    for s, c, r in zip(syms, centers, radii):
        y = (s - sp.Float(c)) / sp.Float(r)
        expr *= sp.exp(1 - 1 / (1 - y**2))
    support = [(c - r, c + r) for c, r in zip(centers, radii)]
    return TestFunction(expr, syms, support, tag="smooth-bump")


def cosine_window(center=1.0, radius=1.0, arity: int = 1) -> TestFunction:
    """cos⁶(π(t − c)/(2r)) on |t − c| ≤ r; five continuous derivatives, compact support."""
    syms = point_symbols(arity)
    centers = np.broadcast_to(np.asarray(center, dtype=float), (arity,))
    radii = np.broadcast_to(np.asarray(radius, dtype=float), (arity,))
    expr = sp.Integer(1)
    for s, c, r in zip(syms, centers, radii):
        expr *= sp.cos(sp.pi * (s - sp.Float(c)) / (2 * sp.Float(r))) ** 6
    support = [(c - r, c + r) for c, r in zip(centers, radii)]
    return TestFunction(expr, syms, support, tag="cosine-window")


BUILTIN_TAGS = ("monomial-<k>", "gaussian-bump", "smooth-bump", "cosine-window")


@lru_cache(maxsize=256)
def parse_function(spec: str, arity: int = 1) -> TestFunction:
    """Build a function from a tag (``gaussian-bump:center=1,width=0.3``) or an expression.

    Results are cached per (spec, arity); the returned objects are shared.
    """
    text = spec.strip()
    name, _, params = text.partition(":")
    kwargs = {}
    if params and name in ("gaussian-bump", "smooth-bump", "cosine-window"):
        for item in params.split(","):
            key, _, value = item.partition("=")
            kwargs[key.strip()] = float(value)
    if name.startswith("monomial-") and name[len("monomial-"):].isdigit():
        return monomial(int(name[len("monomial-"):]), arity)
    if name == "gaussian-bump":
        return gaussian_bump(arity=arity, **kwargs)
    if name == "smooth-bump":
        return smooth_bump(arity=arity, **kwargs)
    if name == "cosine-window":
        return cosine_window(arity=arity, **kwargs)
    return from_expression(text, arity)


def constant(value: float = 1.0, arity: int = 1) -> TestFunction:
    return TestFunction(sp.Float(value) if not float(value).is_integer() else sp.Integer(int(value)),
                        point_symbols(arity), tag=f"const-{value:g}", check=False)


def is_polynomial(f: TestFunction) -> bool:
    return f.expr.is_polynomial(*f.symbols)


def polynomial_degree(f: TestFunction) -> Optional[int]:
    if not is_polynomial(f):
        return None
    return int(sp.Poly(f.expr, *f.symbols).total_degree()) if f.expr != 0 else 0


__all__ = [
    "TestFunction", "from_expression", "monomial", "gaussian_bump", "smooth_bump", "cosine_window",
    "parse_function", "constant", "is_polynomial", "polynomial_degree", "BUILTIN_TAGS",
]
