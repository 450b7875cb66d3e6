"""Monomial norms and diagonal Bergman kernels by numerical integration.

On the torus-invariant part of a toric manifold

    ‖z^α‖² = c · ∫ exp(<ρ, α> − Nφ(ρ)) det ∇²φ(ρ) dρ,

with c the angular constant.  The integral is evaluated with composite
Gauss–Legendre on a Laplace window around the integrand mode, widened until
the value is stable.  Models whose ρ-domain is {Σ e^{ρ_j} < 1} are integrated
in t = e^ρ over the simplex, written as the unit cube by stick-breaking.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import threading
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize, minimize_scalar
from scipy.special import expit, logsumexp

from .errors import DivergenceWarning, DomainError
from .lattice import DEFAULT_POLICY, TruncationPolicy, lattice_window
from .toric_models import ToricModel, legendre_invert, resolve_model

WINDOW_FACTORS = (6, 12, 24, 48, 96, 192, 384, 768)
PANEL_SIGMAS = 8.0  # panel width in units of the Laplace scale
MAX_PANELS = 512


@dataclass(frozen=True)
class QuadratureSpec:
    """Quadrature settings.

    ``window="auto"`` uses the Laplace window; an explicit window is a list
    of ``(lo, hi)`` per axis in the integration coordinate (ρ, or the cube
    coordinate for ball-type models).  ``calibration_constant=None`` fixes the
    constant from the α = 0 closed form when the model has one and uses 1
    otherwise.
    """

    nodes_per_axis: int = 64
    window: object = "auto"
    rel_tol: float = 1e-10
    calibration_constant: Optional[float] = None

    def __post_init__(self):
        if self.nodes_per_axis < 2:
            raise ValueError("nodes_per_axis must be at least 2")
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")
        if self.calibration_constant is not None and not self.calibration_constant > 0:
            raise ValueError("calibration_constant must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        if not isinstance(d["window"], str):
            d["window"] = [list(map(float, w)) for w in d["window"]]
        return d


DEFAULT_SPEC = QuadratureSpec()


@dataclass(frozen=True)
class Integral:
    log_value: float
    rel_error: float
    converged: bool
    window: list


# ---------------------------------------------------------------------------
# Integrands


def _log_det(hess: np.ndarray) -> np.ndarray:
    if hess.shape[-1] == 1:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.log(hess[..., 0, 0])
    sign, logdet = np.linalg.slogdet(hess)
    return np.where(sign > 0, logdet, -np.inf)


def _stick(s: np.ndarray):
    """Cube → simplex: t_1 = s_1, t_j = s_j Π_{i<j}(1 − s_i); returns (log t, log Jacobian)."""
    m = s.shape[-1]
    log1m = np.log1p(-s)
    cum = np.concatenate([np.zeros(s.shape[:-1] + (1,)), np.cumsum(log1m, axis=-1)[..., :-1]], axis=-1)
    log_t = np.log(s) + cum
    log_jac = np.sum(log1m * (m - 1 - np.arange(m)), axis=-1)
    return log_t, log_jac


def _integrand(model: ToricModel, N: int, alpha: np.ndarray):
    """Log integrand in the integration coordinate and whether that coordinate is the cube."""
    if model.rho_domain == "ball":
        def log_f(s):
            with np.errstate(divide="ignore", invalid="ignore"):
                rho, log_jac = _stick(s)
                val = (rho @ (alpha - 1.0) - N * model.phi(rho)
                       + _log_det(model.hess_phi(rho)) + log_jac)
            return np.where(np.isnan(val), -np.inf, val)
        return log_f, True

    def log_f(rho):
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            val = rho @ alpha - N * model.phi(rho) + _log_det(model.hess_phi(rho))
        return np.where(np.isnan(val), -np.inf, val)
    return log_f, False


def _mode_and_scale(model, N, alpha, log_f, cube: bool):
    """Integrand mode and per-axis Laplace scale in the integration coordinate."""
    m = model.dimension
    x = alpha / N
    if cube:
        guess = np.full(m, 0.0)
        to_y = expit
    else:
        if model.polytope.violated_facet(x, strict=True) is None:
            try:
                guess = legendre_invert(model, x).rho
            except Exception:
                guess = model.initial_rho(np.maximum(x, 1e-3))
        else:
            guess = np.zeros(m) if model.in_domain(np.zeros(m)) else model.initial_rho(np.full(m, 0.1))
        to_y = lambda z: z  # noqa: E731

    def objective(z):
        v = float(log_f(to_y(z)[None, :])[0])
        return -v if np.isfinite(v) else 1e300

    if m == 1:
        g0 = float(guess[0])
        res = minimize_scalar(lambda z: objective(np.array([z])), bracket=(g0 - 0.5, g0 + 0.5),
                              options={"xtol": 1e-10, "maxiter": 500})
        y0 = to_y(np.array([res.x]))
    else:
        res = minimize(objective, guess, method="BFGS", options={"gtol": 1e-9, "maxiter": 400})
        y0 = to_y(res.x)
    if cube:
        y0 = np.clip(y0, 0.0, 1.0)
    peak = float(log_f(y0[None, :])[0])
    # scale: distance at which log f has dropped by 1/2, probed on a geometric ladder
    ladder = 1e-7 * 2.0 ** np.arange(48)
    sigma = np.ones(m)
    for j in range(m):
        found = []
        for side in (-1.0, 1.0):
            pts = np.repeat(y0[None, :], ladder.size, axis=0)
            pts[:, j] += side * ladder
            lo, hi = (0.0, 1.0) if cube else (-np.inf, np.inf)
            ok = (pts[:, j] > lo) & (pts[:, j] < hi)
            if not ok[0]:
                continue
            vals = np.full(ladder.size, -np.inf)
            vals[ok] = log_f(pts[ok])
            drop = np.flatnonzero(ok & (vals < peak - 0.5))
            if drop.size and ok[: drop[0]].all():
                found.append(ladder[drop[0]])
        if found:
            sigma[j] = min(found)
    if cube:
        sigma = np.minimum(sigma, 1.0)
    return y0, sigma, peak


@lru_cache(maxsize=32)
def _gauss_legendre(nodes: int):
    return np.polynomial.legendre.leggauss(nodes)


def _gl_axis(lo: float, hi: float, width: float, nodes: int):
    """Composite Gauss–Legendre nodes/log-weights on [lo, hi] with panels ≈ ``width`` wide."""
    panels = int(min(MAX_PANELS, max(1, math.ceil((hi - lo) / width))))
    gx, gw = _gauss_legendre(nodes)
    edges = np.linspace(lo, hi, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    pts = (mid[:, None] + half[:, None] * gx[None, :]).ravel()
    wts = (half[:, None] * gw[None, :]).ravel()
    return pts, np.log(wts)


def _tensor_log_integral(log_f, box, sigma, nodes) -> float:
    axes = [_gl_axis(lo, hi, PANEL_SIGMAS * s, nodes) for (lo, hi), s in zip(box, sigma)]
    if len(axes) == 1:
        pts, lw = axes[0]
        vals = log_f(pts[:, None]) + lw
    else:
        grids = np.meshgrid(*[a[0] for a in axes], indexing="ij")
        wgrids = np.meshgrid(*[a[1] for a in axes], indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=-1)
        vals = log_f(pts) + sum(w.ravel() for w in wgrids)
    if not np.any(np.isfinite(vals)):
        return -np.inf
    return float(logsumexp(vals))


def raw_log_integral(model, N: int, alpha, spec: QuadratureSpec = DEFAULT_SPEC) -> Integral:
    """Uncalibrated log ∫ e^{<ρ,α> − Nφ} det ∇²φ dρ for a single (non-product) model."""
    model = resolve_model(model)
    alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
    log_f, cube = _integrand(model, N, alpha)
    m = model.dimension
    bounds = [(0.0, 1.0)] * m if cube else [(-np.inf, np.inf)] * m

    if not isinstance(spec.window, str):
        box = [tuple(map(float, w)) for w in spec.window]
        sigma = np.array([(hi - lo) / PANEL_SIGMAS for lo, hi in box])
        value = _tensor_log_integral(log_f, box, sigma, spec.nodes_per_axis)
        fine = _tensor_log_integral(log_f, box, sigma, 2 * spec.nodes_per_axis)
        err = abs(math.expm1(value - fine))
        return Integral(fine, err, err <= spec.rel_tol, box)

    y0, sigma, _ = _mode_and_scale(model, N, alpha, log_f, cube)
    prev = None
    converged = False
    err = math.inf
    for c in WINDOW_FACTORS:
        box = [(max(b[0], y - c * s), min(b[1], y + c * s)) for y, s, b in zip(y0, sigma, bounds)]
        value = _tensor_log_integral(log_f, box, sigma, spec.nodes_per_axis)
        if prev is not None and np.isfinite(value):
            err = abs(math.expm1(prev - value))
            if err <= spec.rel_tol:
                converged = True
                break
        prev = value
    if converged:
        fine = _tensor_log_integral(log_f, box, sigma, 2 * spec.nodes_per_axis)
        err = max(err, abs(math.expm1(value - fine)))
    return Integral(value, err, converged and err <= spec.rel_tol, [list(b) for b in box])


# ---------------------------------------------------------------------------
# Norms


def _factors(model: ToricModel):
    return model.factors or (model,)


def _calibration(model: ToricModel, N: int, spec: QuadratureSpec) -> float:
    """log of the calibration constant for a non-product model."""
    if spec.calibration_constant is not None:
        return math.log(spec.calibration_constant)
    if model.log_norm_closed is None:
        return 0.0
    zero = np.zeros(model.dimension)
    raw = raw_log_integral(model, N, zero, spec)
    return float(model.log_norm_closed(zero, N)) - raw.log_value


def monomial_norm_detail(model, N: int, alpha, spec: QuadratureSpec = DEFAULT_SPEC, calibration=None):
    """(log_norm, rel_error, log_calibration); product models are split into factors."""
    model = resolve_model(model)
    alpha = np.atleast_1d(np.asarray(alpha, dtype=np.int64))
    if alpha.shape != (model.dimension,):
        raise DomainError(f"alpha must have {model.dimension} entries")
    if N < model.min_N:
        raise DomainError(f"{model.name} needs N >= {model.min_N}")
    if not model.polytope.contains_lattice(alpha, N):
        raise DomainError(f"alpha = {alpha.tolist()} is not in N·P for N = {N}")
    total, err, cal_total = 0.0, 0.0, 0.0
    start = 0
    for k, factor in enumerate(_factors(model)):
        a = alpha[start:start + factor.dimension]
        start += factor.dimension
        integral = raw_log_integral(factor, N, a, spec)
        if not integral.converged:
            warnings.warn(
                f"{factor.name}: monomial norm for alpha = {a.tolist()} at N = {N} did not converge "
                f"(relative change {integral.rel_error:.2e}); the integral may diverge",
                DivergenceWarning, stacklevel=2)
        cal = calibration[k] if calibration is not None else _calibration(factor, N, spec)
        total += integral.log_value + cal
        err += integral.rel_error
        cal_total += cal
    return total, err, cal_total


def monomial_norm(model, N: int, alpha, spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    """log ‖z^α‖² by quadrature, calibrated by the angular constant."""
    return monomial_norm_detail(model, N, alpha, spec)[0]


class QuadratureNorms:
    """Norm source backed by quadrature with a per-(N, α) cache.

    Usable wherever lattice_operators expects a norm source.  Thread safe.
    """

    def __init__(self, model, spec: QuadratureSpec = DEFAULT_SPEC):
        self.model = resolve_model(model)
        self.spec = spec
        self.label = "quadrature"
        self._cache = {}
        self._calibration = {}
        self._lock = threading.Lock()

    def calibration(self, N: int):
        with self._lock:
            if N in self._calibration:
                return self._calibration[N]
        cal = tuple(_calibration(f, N, self.spec) for f in _factors(self.model))
        with self._lock:
            self._calibration[N] = cal
        return cal

    def detail(self, alpha, N: int):
        key = (int(N), tuple(int(a) for a in np.atleast_1d(alpha)))
        with self._lock:
            hit = self._cache.get(key)
        if hit is not None:
            return hit
        out = monomial_norm_detail(self.model, N, np.array(key[1]), self.spec, self.calibration(N))[:2]
        with self._lock:
            self._cache[key] = out
        return out

    def __call__(self, alphas, N: int) -> np.ndarray:
        alphas = np.atleast_2d(np.asarray(alphas, dtype=np.int64))
        out = np.empty(len(alphas))
        inside = self.model.polytope.contains_lattice(alphas, N)
        out[~inside] = np.inf  # weight zero outside N·P
        for i in np.flatnonzero(inside):
            out[i] = self.detail(alphas[i], N)[0]
        return out


@dataclass(frozen=True)
class NormTable:
    """Quadrature norms for one (model, N); entries map α → (log_norm, est_error)."""

    model: str
    N: int
    entries: dict
    spec: dict = field(default_factory=dict)

    def log_norm(self, alpha) -> float:
        return self.entries[tuple(int(a) for a in np.atleast_1d(alpha))][0]

    def to_csv(self, target=None) -> str:
        buf = io.StringIO()
        buf.write("# " + json.dumps({"model": self.model, "N": self.N, "spec": self.spec}, sort_keys=True) + "\n")
        writer = csv.writer(buf, lineterminator="\n")
        m = len(next(iter(self.entries))) if self.entries else 1
        writer.writerow([f"alpha_{j + 1}" for j in range(m)] + ["log_norm", "est_error"])
        for alpha in sorted(self.entries):
            lv, err = self.entries[alpha]
            writer.writerow(list(alpha) + [repr(float(lv)), repr(float(err))])
        text = buf.getvalue()
        if target is not None:
            Path(target).write_text(text)
        return text

    @classmethod
    def from_csv(cls, source) -> "NormTable":
        text = Path(source).read_text() if not str(source).startswith("#") else str(source)
        first, _, body = text.partition("\n")
        header = json.loads(first.lstrip("# "))
        entries = {}
        for row in list(csv.reader(io.StringIO(body)))[1:]:
            if row:
                entries[tuple(int(v) for v in row[:-2])] = (float(row[-2]), float(row[-1]))
        return cls(model=header["model"], N=header["N"], entries=entries, spec=header.get("spec", {}))


def default_jobs() -> int:
    env = os.environ.get("SZASZ_LAB_JOBS")
    return max(1, int(env)) if env else 1


def norm_table(model, N: int, alphas: Sequence, spec: QuadratureSpec = DEFAULT_SPEC,
               jobs: Optional[int] = None) -> NormTable:
    """Quadrature norms for the listed α; entries are computed independently on ``jobs`` threads."""
    source = QuadratureNorms(model, spec)
    source.calibration(N)
    keys = [tuple(int(a) for a in np.atleast_1d(alpha)) for alpha in alphas]
    jobs = jobs or default_jobs()
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(lambda k: source.detail(k, N), keys))
    else:
        results = [source.detail(k, N) for k in keys]
    return NormTable(model=source.model.name, N=N, entries=dict(zip(keys, results)), spec=spec.to_dict())


# ---------------------------------------------------------------------------
# Kernel diagonal


def kernel_diag(model, N: int, x, spec: QuadratureSpec = DEFAULT_SPEC,
                policy: TruncationPolicy = DEFAULT_POLICY, norms=None):
    """Diagonal Bergman kernel B(z, z) = Σ_α |z^α|² e^{−Nφ} / ‖z^α‖² at z = μ⁻¹(x).

    Returns ``(B, partial_sums)`` where ``partial_sums[k]`` is the sum over
    lattice points with |α| ≤ k (within the truncation window).
    """
    model = resolve_model(model)
    norms = norms or QuadratureNorms(model, spec)
    dual = legendre_invert(model, x)
    phi_val = float(model.phi(dual.rho))
    lower, upper = model.polytope.lattice_bounds(N)
    spread = np.sqrt(np.maximum(N * np.diag(dual.hessian_H), 0.0))
    window = lattice_window(
        lambda a: a @ dual.rho - N * phi_val - norms(a, N),
        N * dual.x, spread, lower, upper, policy,
        member=lambda a: model.polytope.contains_lattice(a, N),
    )
    shells = np.sum(window.alphas, axis=-1)
    order = np.argsort(shells, kind="stable")
    w = np.exp(window.log_weights[order])
    _, first = np.unique(shells[order], return_index=True)
    per_shell = np.add.reduceat(w, first)
    partial = np.cumsum(per_shell)
    return float(math.fsum(w)), [float(v) for v in partial]


@dataclass(frozen=True)
class TYZResult:
    N: list
    ratios: list
    a1: float
    fit_degree: int


def tyz_ratio(model, N_list, x, spec: QuadratureSpec = DEFAULT_SPEC, use_quadrature: bool = True) -> TYZResult:
    """B(N)/N^m along ``N_list`` and the fitted a₁ in 1 + a₁/N + a₂/N² + …

    With ``use_quadrature=False`` the closed-form norms are used instead.
    """
    model = resolve_model(model)
    Ns = [int(n) for n in N_list]
    source = QuadratureNorms(model, spec) if use_quadrature else None
    if source is None:
        from .lattice_operators import ClosedFormNorms

        source = ClosedFormNorms(model)
    ratios = [kernel_diag(model, n, x, spec, norms=source)[0] / n**model.dimension for n in Ns]
    degree = min(2, len(Ns) - 1)
    if degree < 1:
        return TYZResult(Ns, ratios, float("nan"), 0)
    h = 1.0 / np.asarray(Ns, dtype=float)
    A = np.stack([h**k for k in range(1, degree + 1)], axis=-1)
    coef, *_ = np.linalg.lstsq(A, np.asarray(ratios) - 1.0, rcond=None)
    return TYZResult(Ns, ratios, float(coef[0]), degree)
