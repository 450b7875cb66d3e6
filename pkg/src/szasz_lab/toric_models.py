"""Toric Kähler models and the Legendre duality between ρ and moment coordinates.

A model is described by its Kähler potential φ(ρ) in logarithmic coordinates
ρ_j = log|z_j|².  Everything else (moment map, symplectic potential, Hessians)
is either supplied in closed form by the built-in factories or derived from φ.

All model callables are vectorised over leading axes: ``phi`` maps an array of
shape ``(..., m)`` to ``(...)``, ``grad_phi`` to ``(..., m)`` and ``hess_phi``
to ``(..., m, m)``.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from functools import cached_property, reduce
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
import sympy as sp
from scipy.optimize import linprog
from scipy.special import expit, gammaln, xlogy

from .errors import ConvergenceError, DomainError, NumericalInstabilityError
from .expressions import parse_expression, rho_symbols

NEWTON_TOL = 1e-12
NEWTON_MAX_ITER = 100


# ---------------------------------------------------------------------------
# Polytopes


@dataclass(frozen=True)
class Polytope:
    """Polyhedral set ``{x : <x, v_r> >= λ_r for every facet r}``."""

    dimension: int
    facets: tuple
    is_unbounded: bool = field(init=False)

    def __post_init__(self):
        facets = []
        for normal, offset in self.facets:
            normal = tuple(int(v) for v in normal)
            if len(normal) != self.dimension:
                raise ValueError(f"facet normal {normal} has wrong length for dimension {self.dimension}")
            if reduce(math.gcd, (abs(v) for v in normal)) != 1:
                raise ValueError(f"facet normal {normal} is not a primitive lattice vector")
            facets.append((normal, float(offset)))
        object.__setattr__(self, "facets", tuple(facets))
        object.__setattr__(self, "is_unbounded", self._recession_cone_nontrivial())

    @classmethod
    def orthant(cls, dimension: int) -> "Polytope":
        return cls(dimension, tuple((tuple(int(i == j) for i in range(dimension)), 0.0) for j in range(dimension)))

    @classmethod
    def unit_interval(cls) -> "Polytope":
        return cls(1, (((1,), 0.0), ((-1,), -1.0)))

    @classmethod
    def product(cls, first: "Polytope", second: "Polytope") -> "Polytope":
        m1, m2 = first.dimension, second.dimension
        facets = [(tuple(v) + (0,) * m2, lam) for v, lam in first.facets]
        facets += [(((0,) * m1) + tuple(v), lam) for v, lam in second.facets]
        return cls(m1 + m2, tuple(facets))

    @cached_property
    def normals(self) -> np.ndarray:
        return np.array([v for v, _ in self.facets], dtype=float).reshape(-1, self.dimension)

    @cached_property
    def offsets(self) -> np.ndarray:
        return np.array([lam for _, lam in self.facets], dtype=float)

    def slack(self, x) -> np.ndarray:
        """Affine facet functions ℓ_r(x) = <x, v_r> − λ_r, shape ``(..., d)``."""
        return np.asarray(x, dtype=float) @ self.normals.T - self.offsets

    def contains(self, x, strict: bool = False) -> np.ndarray:
        s = self.slack(x)
        return np.all(s > 0, axis=-1) if strict else np.all(s >= 0, axis=-1)

    def violated_facet(self, x, strict: bool = False) -> Optional[int]:
        s = self.slack(x)
        bad = np.nonzero(s <= 0 if strict else s < 0)[0]
        return int(bad[0]) if bad.size else None

    def describe_facet(self, r: int) -> str:
        v, lam = self.facets[r]
        return f"facet {r} (<x, {list(v)}> >= {lam:g})"

    def _recession_cone_nontrivial(self) -> bool:
        m = self.dimension
        a_ub = -np.array([v for v, _ in self.facets], dtype=float).reshape(-1, m)
        b_ub = np.zeros(a_ub.shape[0])
        for j in range(m):
            for sign in (1.0, -1.0):
                c = np.zeros(m)
                c[j] = -sign
                res = linprog(c, A_ub=a_ub, b_ub=b_ub, bounds=[(-1, 1)] * m, method="highs")
                if res.status == 0 and -res.fun > 1e-9:
                    return True
        return False

    @cached_property
    def axis_bounds(self) -> tuple:
        """Per-axis ``(min, max)`` of x_j over the polytope; ±inf when unbounded."""
        m = self.dimension
        a_ub = -self.normals
        b_ub = -self.offsets
        bounds = []
        for j in range(m):
            ends = []
            for sign in (1.0, -1.0):
                c = np.zeros(m)
                c[j] = sign
                res = linprog(c, A_ub=a_ub, b_ub=b_ub, bounds=[(None, None)] * m, method="highs")
                if res.status == 3:
                    ends.append(-sign * math.inf)
                elif res.status == 0:
                    ends.append(sign * res.fun)
                else:
                    raise DomainError(f"polytope is empty or degenerate (linprog status {res.status})")
            bounds.append((ends[0], ends[1]))
        return tuple(bounds)

    def lattice_bounds(self, N: int):
        """Integer box containing ``N·P ∩ Z^m`` as two arrays (floats, may be ±inf)."""
        lo = np.array([b[0] for b in self.axis_bounds]) * N
        hi = np.array([b[1] for b in self.axis_bounds]) * N
        lo = np.where(np.isfinite(lo), np.ceil(lo - 1e-9), lo)
        hi = np.where(np.isfinite(hi), np.floor(hi + 1e-9), hi)
        return lo, hi

    def contains_lattice(self, alphas: np.ndarray, N: int) -> np.ndarray:
        """Membership of integer points in ``N·P`` with an integer-safe tolerance."""
        s = np.asarray(alphas, dtype=float) @ self.normals.T - N * self.offsets
        return np.all(s >= -1e-9, axis=-1)


# ---------------------------------------------------------------------------
# Models


@dataclass(frozen=True, eq=False)
class ToricModel:
    """A toric Kähler model given by φ(ρ) plus whatever closed forms are known.

    ``rho_domain`` is ``"all"`` (ρ ranges over R^m), ``"ball"`` (Σ e^{ρ_j} < 1)
    or ``"product"`` (constraints inherited from ``factors``).  The optional
    closed forms feed initial guesses and cross-checks; nothing downstream
    requires them.

    ``log_kernel_diag`` is the diagonal Bergman kernel implied by the monomial
    norms, ``log_stated_kernel_diag`` the closed-form value usually quoted for
    this metric.  They differ for the Bergman ball.
    """

    name: str
    dimension: int
    phi: Callable
    grad_phi: Callable
    hess_phi: Callable
    polytope: Polytope
    rho_domain: str = "all"
    factors: tuple = ()
    rho_guess: Optional[Callable] = None
    u_closed: Optional[Callable] = None
    hess_u_closed: Optional[Callable] = None
    log_norm_closed: Optional[Callable] = None
    log_kernel_diag: Optional[Callable] = None
    log_stated_kernel_diag: Optional[Callable] = None
    min_N: int = 1
    source: Optional[dict] = None

    def domain_violation(self, rho) -> Optional[str]:
        """Describe why ``rho`` is inadmissible, or ``None`` when it is fine."""
        rho = np.asarray(rho, dtype=float)
        if rho.shape[-1:] != (self.dimension,):
            return f"rho must have length {self.dimension}, got shape {rho.shape}"
        if not np.all(np.isfinite(rho)):
            return "rho has non-finite entries"
        if self.rho_domain == "ball":
            s = np.sum(np.exp(rho), axis=-1)
            if np.any(s >= 1.0):
                return f"sum(exp(rho)) = {np.max(s):.17g} violates sum(exp(rho)) < 1"
        elif self.rho_domain == "product":
            start = 0
            for factor in self.factors:
                msg = factor.domain_violation(rho[..., start:start + factor.dimension])
                if msg:
                    return f"{factor.name} block: {msg}"
                start += factor.dimension
        return None

    def in_domain(self, rho) -> bool:
        return self.domain_violation(rho) is None

    @property
    def has_closed_norms(self) -> bool:
        return self.log_norm_closed is not None

    def kernel_diag(self, N: int) -> Optional[float]:
        return None if self.log_kernel_diag is None else float(np.exp(self.log_kernel_diag(N)))

    def stated_kernel_diag(self, N: int) -> Optional[float]:
        f = self.log_stated_kernel_diag or self.log_kernel_diag
        return None if f is None else float(np.exp(f(N)))

    def initial_rho(self, x: np.ndarray) -> np.ndarray:
        if self.rho_guess is not None:
            return np.asarray(self.rho_guess(x), dtype=float)
        rho = np.zeros(self.dimension)
        if not self.in_domain(rho):
            rho = np.full(self.dimension, -math.log(2.0 * self.dimension))
        return rho

    def __repr__(self):
        return f"ToricModel({self.name!r}, m={self.dimension})"


def _diag(v):
    v = np.asarray(v, dtype=float)
    return v[..., :, None] * np.eye(v.shape[-1])


def bargmann_fock(dimension: int = 1) -> ToricModel:
    """C^m with φ(ρ) = Σ e^{ρ_j}; the classical Szasz operator lives here."""
    m = dimension

    def log_norm(alpha, N):
        alpha = np.asarray(alpha, dtype=float)
        return np.sum(gammaln(alpha + 1), axis=-1) - (m + np.sum(alpha, axis=-1)) * math.log(N)

    return ToricModel(
        name="bargmann-fock" if m == 1 else f"bargmann-fock-{m}",
        dimension=m,
        phi=lambda rho: np.sum(np.exp(rho), axis=-1),
        grad_phi=lambda rho: np.exp(rho),
        hess_phi=lambda rho: _diag(np.exp(rho)),
        polytope=Polytope.orthant(m),
        rho_guess=lambda x: np.log(x),
        u_closed=lambda x: np.sum(xlogy(x, x) - x, axis=-1),
        hess_u_closed=lambda x: _diag(1.0 / np.asarray(x, dtype=float)),
        log_norm_closed=log_norm,
        log_kernel_diag=lambda N: m * math.log(N),
    )


def fubini_study_cp1() -> ToricModel:
    """CP¹ with φ(ρ) = log(1 + e^ρ); generalized operator = Bernstein polynomial."""

    def log_norm(alpha, N):
        a = np.asarray(alpha, dtype=float)[..., 0]
        return gammaln(a + 1) + gammaln(N - a + 1) - gammaln(N + 2)

    def hess(rho):
        p = expit(rho)
        return _diag(p * (1 - p))

    return ToricModel(
        name="fubini-study-cp1",
        dimension=1,
        phi=lambda rho: np.logaddexp(0.0, rho)[..., 0],
        grad_phi=lambda rho: expit(rho),
        hess_phi=hess,
        polytope=Polytope.unit_interval(),
        rho_guess=lambda x: np.log(x) - np.log1p(-x),
        u_closed=lambda x: (xlogy(x, x) + xlogy(1 - x, 1 - x))[..., 0],
        hess_u_closed=lambda x: _diag(1.0 / x + 1.0 / (1.0 - x)),
        log_norm_closed=log_norm,
        log_kernel_diag=lambda N: math.log(N + 1),
    )


def bergman_ball(dimension: int = 1) -> ToricModel:
    """Unit ball B^m with φ(ρ) = −log(1 − Σ e^{ρ_j}); moment polyhedron R^m_+.

    Monomial norms j!Γ(N−m)/Γ(N+|j|) (m = 1: j!Γ(N−1)/Γ(N+j)) are finite for
    N > m; the kernel they imply is Γ(N)/Γ(N−m), whereas the usually quoted kernel
    for this metric is (N+m)!/N!.
    """
    m = dimension

    def phi(rho):
        return -np.log1p(-np.sum(np.exp(rho), axis=-1))

    def grad(rho):
        t = np.exp(rho)
        return t / (1.0 - np.sum(t, axis=-1, keepdims=True))

    def hess(rho):
        t = np.exp(rho)
        d = 1.0 - np.sum(t, axis=-1)[..., None, None]
        return _diag(t) / d + t[..., :, None] * t[..., None, :] / d**2

    def rho_guess(x):
        x = np.asarray(x, dtype=float)
        return np.log(x) - np.log1p(np.sum(x, axis=-1, keepdims=True))

    def u(x):
        x = np.asarray(x, dtype=float)
        s = np.sum(x, axis=-1)
        return np.sum(xlogy(x, x), axis=-1) - (1 + s) * np.log1p(s)

    def hess_u(x):
        x = np.asarray(x, dtype=float)
        s = np.sum(x, axis=-1)[..., None, None]
        return _diag(1.0 / x) - np.ones((m, m)) / (1.0 + s)

    def log_norm(alpha, N):
        a = np.asarray(alpha, dtype=float)
        return np.sum(gammaln(a + 1), axis=-1) + gammaln(N - m) - gammaln(N + np.sum(a, axis=-1))

    return ToricModel(
        name=f"bergman-ball-{m}",
        dimension=m,
        phi=phi,
        grad_phi=grad,
        hess_phi=hess,
        polytope=Polytope.orthant(m),
        rho_domain="ball",
        rho_guess=rho_guess,
        u_closed=u,
        hess_u_closed=hess_u,
        log_norm_closed=log_norm,
        log_kernel_diag=lambda N: float(gammaln(N) - gammaln(N - m)),
        log_stated_kernel_diag=lambda N: float(gammaln(N + m + 1) - gammaln(N + 1)),
        min_N=m + 1,
    )


def product_model(first: ToricModel, second: ToricModel) -> ToricModel:
    """Riemannian product; φ, norms and kernels split over the two blocks."""
    m1, m2 = first.dimension, second.dimension
    a, b = slice(0, m1), slice(m1, m1 + m2)
    factors = (first.factors or (first,)) + (second.factors or (second,))

    def both(f1, f2):
        if f1 is None or f2 is None:
            return None
        return lambda x: np.concatenate([np.asarray(f1(x[..., a])), np.asarray(f2(x[..., b]))], axis=-1)

    def add(f1, f2):
        if f1 is None or f2 is None:
            return None
        return lambda x: f1(x[..., a]) + f2(x[..., b])

    def block(f1, f2):
        if f1 is None or f2 is None:
            return None

        def hess(x):
            x = np.asarray(x, dtype=float)
            out = np.zeros(x.shape[:-1] + (m1 + m2, m1 + m2))
            out[..., a, a] = f1(x[..., a])
            out[..., b, b] = f2(x[..., b])
            return out

        return hess

    log_norm = None
    if first.log_norm_closed and second.log_norm_closed:
        def log_norm(alpha, N):
            alpha = np.asarray(alpha)
            return first.log_norm_closed(alpha[..., a], N) + second.log_norm_closed(alpha[..., b], N)

    def kernel_sum(f1, f2):
        if f1 is None or f2 is None:
            return None
        return lambda N: f1(N) + f2(N)

    return ToricModel(
        name=f"product:{first.name}x{second.name}",
        dimension=m1 + m2,
        phi=add(first.phi, second.phi),
        grad_phi=both(first.grad_phi, second.grad_phi),
        hess_phi=block(first.hess_phi, second.hess_phi),
        polytope=Polytope.product(first.polytope, second.polytope),
        rho_domain="product",
        factors=factors,
        rho_guess=both(first.rho_guess, second.rho_guess),
        u_closed=add(first.u_closed, second.u_closed),
        hess_u_closed=block(first.hess_u_closed, second.hess_u_closed),
        log_norm_closed=log_norm,
        log_kernel_diag=kernel_sum(first.log_kernel_diag, second.log_kernel_diag),
        log_stated_kernel_diag=kernel_sum(
            first.log_stated_kernel_diag or first.log_kernel_diag,
            second.log_stated_kernel_diag or second.log_kernel_diag,
        ),
        min_N=max(first.min_N, second.min_N),
    )


# ---------------------------------------------------------------------------
# Registry and custom models

MODEL_NAMES = ("bargmann-fock", "fubini-study-cp1", "bergman-ball-1", "product:<a>x<b>")

_BASE = {
    "bargmann-fock": lambda: bargmann_fock(1),
    "fubini-study-cp1": fubini_study_cp1,
}


def get_model(name: str) -> ToricModel:
    """Look up a built-in model by registry name.

    ``bergman-ball-<m>`` accepts any m >= 1; ``product:<a>x<b>[x<c>...]``
    composes built-ins, e.g. ``product:fubini-study-cp1xfubini-study-cp1``.
    """
    name = name.strip()
    if name.startswith("product:"):
        parts = name[len("product:"):].split("x")
        if len(parts) < 2 or not all(parts):
            raise KeyError(f"malformed product model name {name!r}")
        return reduce(product_model, [get_model(p) for p in parts])
    if name in _BASE:
        return _BASE[name]()
    match = re.fullmatch(r"bergman-ball-(\d+)", name)
    if match and int(match.group(1)) >= 1:
        return bergman_ball(int(match.group(1)))
    match = re.fullmatch(r"bargmann-fock-(\d+)", name)
    if match and int(match.group(1)) >= 1:
        return bargmann_fock(int(match.group(1)))
    raise KeyError(f"unknown model {name!r}; known: {', '.join(MODEL_NAMES)}")


def _lambdify_array(exprs, symbols, shape):
    """Vectorised evaluator for a nested list of sympy expressions."""
    flat = [sp.sympify(e) for e in np.asarray(exprs, dtype=object).ravel()]
    funcs = [sp.lambdify(symbols, e, modules="numpy") for e in flat]

    def evaluate(rho):
        rho = np.asarray(rho, dtype=float)
        args = [rho[..., j] for j in range(rho.shape[-1])]
        lead = rho.shape[:-1]
        with np.errstate(all="ignore"):
            vals = [np.broadcast_to(np.asarray(f(*args), dtype=float), lead) for f in funcs]
        out = np.stack(vals, axis=-1) if vals else np.zeros(lead + (0,))
        return out.reshape(lead + shape)

    return evaluate


def model_from_expression(
    phi: str,
    dimension: int,
    facets: Sequence,
    rho_domain: str = "all",
    name: str = "custom",
) -> ToricModel:
    """Build a model from a φ(ρ) expression; derivatives are taken symbolically."""
    if rho_domain not in ("all", "ball"):
        raise ValueError(f"rho_domain must be 'all' or 'ball', got {rho_domain!r}")
    syms = rho_symbols(dimension)
    expr = parse_expression(phi, syms)
    grad = [sp.diff(expr, s) for s in syms]
    hess = [[sp.diff(g, s) for s in syms] for g in grad]
    parsed = []
    for facet in facets:
        if isinstance(facet, dict):
            parsed.append((facet["normal"], facet["offset"]))
        else:
            parsed.append((facet[0], facet[1]))
    return ToricModel(
        name=name,
        dimension=dimension,
        phi=_lambdify_array([expr], syms, ()),
        grad_phi=_lambdify_array(grad, syms, (dimension,)),
        hess_phi=_lambdify_array(hess, syms, (dimension, dimension)),
        polytope=Polytope(dimension, tuple(parsed)),
        rho_domain=rho_domain,
        source={"dimension": dimension, "phi": phi, "rho_domain": rho_domain,
                "facets": [[list(v), lam] for v, lam in parsed], "name": name},
    )


def load_custom_model(document) -> ToricModel:
    """Load a model from a JSON document (dict, JSON text or a file path).

    Keys: ``dimension``, ``phi`` (expression over ``rho`` or ``rho1..rhom``),
    ``rho_domain`` (``"all"`` or ``"ball"``), ``facets`` (list of
    ``[normal, offset]`` pairs or ``{"normal", "offset"}`` objects), and an
    optional ``name``.
    """
    if isinstance(document, (str, Path)):
        text = str(document)
        path = Path(text)
        doc = json.loads(path.read_text()) if not text.lstrip().startswith("{") and path.exists() else json.loads(text)
    else:
        doc = dict(document)
    missing = {"dimension", "phi", "facets"} - doc.keys()
    if missing:
        raise ValueError(f"custom model document lacks {sorted(missing)}")
    return model_from_expression(
        doc["phi"], int(doc["dimension"]), doc["facets"],
        rho_domain=doc.get("rho_domain", "all"), name=doc.get("name", "custom"),
    )


def resolve_model(spec) -> ToricModel:
    """Accept a model, a registry name, a JSON document or a path to one."""
    if isinstance(spec, ToricModel):
        return spec
    if isinstance(spec, dict):
        return load_custom_model(spec)
    text = str(spec)
    if text.endswith(".json") or text.lstrip().startswith("{"):
        return load_custom_model(text)
    return get_model(text)


# ---------------------------------------------------------------------------
# Duality


@dataclass(frozen=True)
class DualPoint:
    """A point x of the polytope together with its Legendre-dual data."""

    x: np.ndarray
    rho: np.ndarray
    u_value: float
    grad_u: np.ndarray
    hessian_G: np.ndarray
    hessian_H: np.ndarray
    residual: float = 0.0
    iterations: int = 0


def _as_point(model: ToricModel, x) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (model.dimension,):
        raise DomainError(f"{model.name}: expected a point of length {model.dimension}, got shape {x.shape}")
    return x


def _require_interior(model: ToricModel, x: np.ndarray) -> None:
    r = model.polytope.violated_facet(x, strict=True)
    if r is not None:
        raise DomainError(f"{model.name}: x = {x.tolist()} is not interior; fails {model.polytope.describe_facet(r)}")


def moment_map(model: ToricModel, rho) -> np.ndarray:
    """μ(ρ) = ∇_ρ φ(ρ)."""
    rho = _as_point(model, rho)
    msg = model.domain_violation(rho)
    if msg:
        raise DomainError(f"{model.name}: {msg}")
    return np.asarray(model.grad_phi(rho), dtype=float)


def legendre_invert(model: ToricModel, x, init=None, tol: float = NEWTON_TOL,
                    max_iter: int = NEWTON_MAX_ITER) -> DualPoint:
    """Solve ∇φ(ρ) = x by damped Newton and return the dual data at x.

    The step is halved until the iterate stays in the ρ-domain and the
    residual ‖∇φ(ρ) − x‖∞ decreases.  Convergence means the residual is at
    most ``tol · max(1, ‖x‖∞)``.
    """
    x = _as_point(model, x)
    _require_interior(model, x)
    rho = model.initial_rho(x) if init is None else np.asarray(init, dtype=float).copy()
    if not model.in_domain(rho):
        rho = model.initial_rho(x)
    if not model.in_domain(rho):
        rho = np.full(model.dimension, -math.log(2.0 * model.dimension))
    scale = tol * max(1.0, float(np.max(np.abs(x))))
    resid = np.asarray(model.grad_phi(rho)) - x
    norm = float(np.max(np.abs(resid)))
    it = 0
    while norm > scale:
        if it >= max_iter:
            raise ConvergenceError(
                f"{model.name}: Newton did not converge at x = {x.tolist()} after {max_iter} iterations "
                f"(residual {norm:.3e})", residual=norm)
        it += 1
        jac = np.asarray(model.hess_phi(rho))
        try:
            step = np.linalg.solve(jac, -resid)
        except np.linalg.LinAlgError:
            raise ConvergenceError(f"{model.name}: singular Hessian at rho = {rho.tolist()}", residual=norm) from None
        t = 1.0
        for _ in range(60):
            trial = rho + t * step
            if model.in_domain(trial):
                trial_resid = np.asarray(model.grad_phi(trial)) - x
                trial_norm = float(np.max(np.abs(trial_resid)))
                if trial_norm < norm:
                    break
            t *= 0.5
        else:
            raise ConvergenceError(
                f"{model.name}: line search stalled at x = {x.tolist()} (residual {norm:.3e})", residual=norm)
        rho, resid, norm = trial, trial_resid, trial_norm
    hess_h = np.asarray(model.hess_phi(rho), dtype=float)
    if model.hess_u_closed is not None:
        hess_g = np.asarray(model.hess_u_closed(x), dtype=float)
    else:
        hess_g = np.linalg.inv(hess_h)
    u = float(x @ rho - model.phi(rho))
    return DualPoint(x=x, rho=rho, u_value=u, grad_u=rho.copy(), hessian_G=hess_g,
                     hessian_H=hess_h, residual=norm, iterations=it)


def symplectic_potential(model: ToricModel, x) -> float:
    """u_φ(x) = <x, ρ(x)> − φ(ρ(x))."""
    return legendre_invert(model, x).u_value


def canonical_potential(polytope: Polytope, x) -> float:
    """u₀(x) = Σ_r ℓ_r(x) log ℓ_r(x) (with 0 log 0 = 0)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    r = polytope.violated_facet(x)
    if r is not None:
        raise DomainError(f"x = {x.tolist()} violates {polytope.describe_facet(r)}")
    ell = polytope.slack(x)
    return float(np.sum(xlogy(ell, ell)))


def _step(value: float) -> float:
    return 1e-5 * max(1.0, abs(value))


def _central_jacobian(func, point: np.ndarray, steps: np.ndarray) -> np.ndarray:
    """Jacobian by central differences with one Richardson refinement."""
    m = point.size

    def estimate(h):
        cols = []
        for j in range(m):
            e = np.zeros(m)
            e[j] = h[j]
            cols.append((np.asarray(func(point + e)) - np.asarray(func(point - e))) / (2 * h[j]))
        return np.stack(cols, axis=-1)

    coarse = estimate(steps)
    fine = estimate(steps / 2)
    return (4 * fine - coarse) / 3


def hessians(model: ToricModel, x):
    """Numerical (G_φ(x), H_φ(ρ(x))) from differences of ∇u and ∇φ.

    G is the Jacobian of x ↦ ρ(x) = ∇u(x); H the Jacobian of ∇φ at ρ(x).
    Steps are 1e-5·max(1, |coordinate|), shrunk to stay inside the polytope
    and the ρ-domain, followed by one Richardson refinement.
    """
    x = _as_point(model, x)
    dual = legendre_invert(model, x)
    steps_x = np.array([_step(v) for v in x])
    # keep x ± h strictly inside every facet
    norms = np.abs(model.polytope.normals)
    room = model.polytope.slack(x)
    for j in range(model.dimension):
        touching = norms[:, j] > 0
        if np.any(touching):
            steps_x[j] = min(steps_x[j], 0.25 * float(np.min(room[touching] / norms[touching, j])))
    G = _central_jacobian(lambda p: legendre_invert(model, p, init=dual.rho).rho, x, steps_x)

    steps_rho = np.array([_step(v) for v in dual.rho])
    while True:
        probes = [dual.rho + s * h * np.eye(model.dimension)[j]
                  for j, h in enumerate(steps_rho) for s in (1, -1)]
        if all(model.in_domain(p) for p in probes):
            break
        steps_rho /= 4
    H = _central_jacobian(lambda r: model.grad_phi(r), dual.rho, steps_rho)
    G = 0.5 * (G + G.T)
    H = 0.5 * (H + H.T)
    for label, mat in (("G", G), ("H", H)):
        if np.min(np.linalg.eigvalsh(mat)) <= 0:
            raise NumericalInstabilityError(f"{model.name}: numerical Hessian {label} is not positive definite at x = {x.tolist()}")
    return G, H


@dataclass(frozen=True)
class SmoothRemainder:
    """h(x) = u_φ(x) − Σ x_j log x_j near the vertex at the origin."""

    value: Optional[float]
    gradient0: np.ndarray
    hessian0: np.ndarray
    deltas: tuple


REMAINDER_DELTAS = (1e-2, 5e-3, 2.5e-3)


def remainder_value(model: ToricModel, x) -> float:
    x = _as_point(model, x)
    return symplectic_potential(model, x) - float(np.sum(xlogy(x, x)))


def smooth_remainder(model: ToricModel, x=None, deltas=REMAINDER_DELTAS) -> SmoothRemainder:
    """Value of h at ``x`` and one-sided limits of ∇h, ∇²h at the origin vertex.

    For each δ the derivatives are central differences with step δ centred at
    2δ·(1, …, 1), so every stencil point sits in the open orthant.  Those
    estimates equal the derivatives at 2δ up to O(δ²); a quadratic polynomial
    in δ through the three estimates is evaluated at δ = 0.
    """
    m = model.dimension
    ones = np.ones(m)
    eye = np.eye(m)
    grads, hesss = [], []
    for d in deltas:
        c = 2 * d * ones
        for probe in (c + d * ones, c - d * ones):
            if not model.polytope.contains(probe, strict=True):
                raise DomainError(f"{model.name}: remainder stencil at delta={d} leaves the polytope")

        def h(p):
            return remainder_value(model, p)

        g = np.array([(h(c + d * eye[i]) - h(c - d * eye[i])) / (2 * d) for i in range(m)])
        H = np.empty((m, m))
        h0 = h(c)
        for i in range(m):
            H[i, i] = (h(c + d * eye[i]) - 2 * h0 + h(c - d * eye[i])) / d**2
            for j in range(i + 1, m):
                H[i, j] = H[j, i] = (
                    h(c + d * (eye[i] + eye[j])) - h(c + d * (eye[i] - eye[j]))
                    - h(c - d * (eye[i] - eye[j])) + h(c - d * (eye[i] + eye[j]))
                ) / (4 * d**2)
        grads.append(g)
        hesss.append(H)
    grad0 = _extrapolate_to_zero(deltas, grads)
    hess0 = _extrapolate_to_zero(deltas, hesss)
    value = None if x is None else remainder_value(model, x)
    return SmoothRemainder(value=value, gradient0=grad0, hessian0=hess0, deltas=tuple(deltas))


def _extrapolate_to_zero(deltas, estimates):
    """Lagrange polynomial through (δ_k, estimate_k), evaluated at δ = 0."""
    deltas = np.asarray(deltas, dtype=float)
    total = np.zeros_like(np.asarray(estimates[0], dtype=float))
    for k, est in enumerate(estimates):
        others = np.delete(deltas, k)
        weight = np.prod(others / (others - deltas[k]))
        total = total + weight * np.asarray(est, dtype=float)
    return total
