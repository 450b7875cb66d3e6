"""Empirical asymptotics: Voronovskaya coefficients, corner and wall limits,
and the first-order correction to the Poisson limit of the binomial law.

Coefficients are extracted by least squares in h = N₀/N (N₀ = smallest grid
value) and rescaled, which keeps the Vandermonde matrix well conditioned.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .errors import ConditioningWarning, DomainError
from .functions import TestFunction, is_polynomial, polynomial_degree
from .lattice import DEFAULT_POLICY, TruncationPolicy
from .lattice_operators import _coerce_function, generalized_operator, szasz_classical
from .toric_models import legendre_invert, resolve_model, smooth_remainder

DEFAULT_N_GRID = (32, 48, 64, 96, 128, 192, 256, 384, 512, 768, 1024, 1536, 2048)
CONDITION_LIMIT = 1e10


def _jsonable(value):
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.floating, float)):
        v = float(value)
        return v if math.isfinite(v) else None
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def loglog_slope(N_grid, values) -> float:
    """Least-squares slope of log|value| against log N (zeros are dropped)."""
    N = np.asarray(N_grid, dtype=float)
    v = np.abs(np.asarray(values, dtype=float))
    keep = v > 0
    if keep.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(N[keep]), np.log(v[keep]), 1)[0])


@dataclass(frozen=True)
class AsymptoticFit:
    """S_N ≈ c₀ + c₁/N + … + c_p/N^p fitted over ``N_grid``.

    ``residuals`` are S_N − c₀ − c₁/N with the fitted c₀, c₁, and
    ``residual_slope`` is their log-log slope.
    """

    N_grid: list
    values: list
    coefficients: list
    stderr: list
    residuals: list
    residual_slope: float
    r2: float
    condition: float
    degree: int
    label: str = ""

    @property
    def c0(self) -> float:
        return self.coefficients[0]

    @property
    def c1(self) -> float:
        return self.coefficients[1]

    def predict(self, N) -> np.ndarray:
        N = np.asarray(N, dtype=float)
        return sum(c / N**k for k, c in enumerate(self.coefficients))

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["N", "value", "residual"])
        for n, v, r in zip(self.N_grid, self.values, self.residuals):
            writer.writerow([n, repr(float(v)), repr(float(r))])
        return buf.getvalue()


def fit_expansion(N_grid, values, degree: int = 3, label: str = "") -> AsymptoticFit:
    """Least-squares fit of values to a polynomial in 1/N of the given degree."""
    N = np.asarray(N_grid, dtype=float)
    y = np.asarray(values, dtype=float)
    if N.ndim != 1 or N.size < 4:
        raise ValueError("N_grid needs at least 4 points")
    if np.any(np.diff(N) <= 0):
        raise ValueError("N_grid must be strictly increasing")
    if degree + 1 > N.size:
        raise ValueError(f"degree {degree} needs at least {degree + 1} grid points")
    N0 = N[0]
    h = N0 / N
    A = np.vander(h, degree + 1, increasing=True)
    cond = float(np.linalg.cond(A))
    if cond > CONDITION_LIMIT:
        warnings.warn(f"expansion fit is ill-conditioned (condition number {cond:.3e})",
                      ConditioningWarning, stacklevel=2)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    fitted = A @ coef
    dof = N.size - (degree + 1)
    ss_res = float(np.sum((y - fitted) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    if dof > 0:
        cov = ss_res / dof * np.linalg.pinv(A.T @ A)
        se = np.sqrt(np.maximum(np.diag(cov), 0.0))
    else:
        se = np.full(degree + 1, np.nan)
    scale = N0 ** np.arange(degree + 1)
    coefficients = coef * scale
    stderr = se * scale
    resid = y - coefficients[0] - (coefficients[1] / N if degree >= 1 else 0.0)
    return AsymptoticFit(
        N_grid=[int(n) for n in N], values=y.tolist(), coefficients=coefficients.tolist(),
        stderr=stderr.tolist(), residuals=resid.tolist(), residual_slope=loglog_slope(N, resid),
        r2=r2, condition=cond, degree=degree, label=label,
    )


def _evaluate_grid(func, N_grid, jobs: int = 1) -> list:
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(func, N_grid))
    return [func(n) for n in N_grid]


def _regime(f: TestFunction) -> str:
    if f.support is not None:
        return "compact-support"
    if is_polynomial(f):
        return "polynomial-moment-oracle"
    return "smooth-noncompact"


# ---------------------------------------------------------------------------
# Interior expansion


def voronovskaya_extract(model, f, x, N_grid=DEFAULT_N_GRID, degree: int = 3,
                         normalization: str = "kernel-sum", policy: TruncationPolicy = DEFAULT_POLICY,
                         jobs: int = 1) -> AsymptoticFit:
    """Fit S_N f(x) = c₀ + c₁/N + … at an interior point."""
    model = resolve_model(model)
    f = _coerce_function(f, model.dimension)
    legendre_invert(model, x)  # domain check up front
    N_grid = [int(n) for n in N_grid]

    def value(n):
        return generalized_operator(model, f, n, x, policy, normalization=normalization)[0]

    vals = _evaluate_grid(value, N_grid, jobs)
    return fit_expansion(N_grid, vals, degree, label=f"voronovskaya:{model.name}:{f.tag}:{_regime(f)}")


def voronovskaya_theory(model, f, x) -> float:
    """½ Σ_ij H_φ(x)_ij f_ij(x), the second-order part of L₁ f."""
    model = resolve_model(model)
    f = _coerce_function(f, model.dimension)
    dual = legendre_invert(model, x)
    return 0.5 * float(np.sum(dual.hessian_H * f.hessian(dual.x)))


# ---------------------------------------------------------------------------
# Corner


def _corner_point(model, x, N):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = x / N
    r = model.polytope.violated_facet(y, strict=True)
    if r is not None:
        raise DomainError(f"x/N = {y.tolist()} is not interior for N = {N}; fails {model.polytope.describe_facet(r)}")
    return y


def corner_scaled_operator(model, f, x, N: int, policy: TruncationPolicy = DEFAULT_POLICY,
                           normalization: str = "kernel-sum") -> float:
    """(D_{1/N} S_{h^N} D_{1/N}^{−1}) f (x) = S_{h^N}(f(N ·))(x/N) at the vertex at the origin."""
    model = resolve_model(model)
    f = _coerce_function(f, model.dimension)
    y = _corner_point(model, x, N)
    return generalized_operator(model, f.dilated(N), N, y, policy, normalization=normalization)[0]


def szasz_limit(f, x, policy: TruncationPolicy = DEFAULT_POLICY) -> float:
    """S_{h_BF¹}(f)(x), the classical Szasz operator at N = 1."""
    return szasz_classical(f, 1, x, policy)


def b1_formula(model, f, x, policy: TruncationPolicy = DEFAULT_POLICY) -> float:
    """½ Σ_ij a_ij(x) S_BF¹(f_ij)(x) with a = diag(x)² ∇²h(0)."""
    model = resolve_model(model)
    f = _coerce_function(f, model.dimension)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    hess0 = smooth_remainder(model).hessian0
    a = np.diag(x) @ np.diag(x) @ hess0
    total = 0.0
    for i in range(model.dimension):
        for j in range(model.dimension):
            if a[i, j] != 0.0:
                total += a[i, j] * szasz_classical(f.second_partial(i, j), 1, x, policy)
    return 0.5 * total


@dataclass(frozen=True)
class CornerReport:
    fit: AsymptoticFit
    limit: float
    c0_gap: float
    c1_fitted: float
    b1_formula: float
    sign_agrees: Optional[bool]
    magnitude_gap: Optional[float]
    verdict_eligible: bool
    hessian_h0: list
    regime: str

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))


def corner_b1_fit(model, f, x, N_grid=DEFAULT_N_GRID, degree: int = 3,
                  normalization: str = "kernel-sum", policy: TruncationPolicy = DEFAULT_POLICY,
                  jobs: int = 1) -> CornerReport:
    """Fit the corner-scaled operator in 1/N and compare c₀, c₁ with S_BF¹f and b₁.

    ``verdict_eligible`` is true only for quadratic f; for other f both
    numbers are reported without a verdict.
    """
    model = resolve_model(model)
    f = _coerce_function(f, model.dimension)
    N_grid = [int(n) for n in N_grid]
    vals = _evaluate_grid(lambda n: corner_scaled_operator(model, f, x, n, policy, normalization), N_grid, jobs)
    fit = fit_expansion(N_grid, vals, degree, label=f"corner:{model.name}:{f.tag}:{_regime(f)}")
    limit = szasz_limit(f, x, policy)
    b1 = b1_formula(model, f, x, policy)
    c1 = fit.c1
    tiny = 1e-9 * max(1.0, abs(limit))
    if abs(b1) <= tiny and abs(c1) <= tiny:
        sign, gap = True, 0.0
    elif abs(b1) <= tiny or abs(c1) <= tiny:
        sign, gap = None, None
    else:
        sign = bool(np.sign(b1) == np.sign(c1))
        gap = abs(abs(c1) - abs(b1)) / abs(b1)
    return CornerReport(
        fit=fit, limit=limit, c0_gap=abs(fit.c0 - limit), c1_fitted=c1, b1_formula=b1,
        sign_agrees=sign, magnitude_gap=gap, verdict_eligible=polynomial_degree(f) == 2,
        hessian_h0=smooth_remainder(model).hessian0.tolist(), regime=_regime(f),
    )


@dataclass(frozen=True)
class ConvergenceSweep:
    N_grid: list
    values: list
    limit: float
    distances: list
    slope: float
    label: str = ""

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))


def corner_sweep(model, f, x, N_grid=(16, 32, 64, 128, 256, 512, 1024, 2048),
                 normalization: str = "kernel-sum", policy: TruncationPolicy = DEFAULT_POLICY,
                 jobs: int = 1) -> ConvergenceSweep:
    """|corner-scaled operator − S_BF¹ f(x)| along ``N_grid`` and its log-log slope."""
    model = resolve_model(model)
    f = _coerce_function(f, model.dimension)
    N_grid = [int(n) for n in N_grid]
    vals = _evaluate_grid(lambda n: corner_scaled_operator(model, f, x, n, policy, normalization), N_grid, jobs)
    limit = szasz_limit(f, x, policy)
    dist = [abs(v - limit) for v in vals]
    return ConvergenceSweep(N_grid, vals, limit, dist, loglog_slope(N_grid, dist),
                            label=f"corner:{model.name}:{f.tag}")


# ---------------------------------------------------------------------------
# Wall


@dataclass(frozen=True)
class WallResult:
    value: float
    limit: float
    distance: float


def wall_scaled_operator(model, f, x_wall, x_along, N: int, policy: TruncationPolicy = DEFAULT_POLICY,
                         normalization: str = "kernel-sum") -> WallResult:
    """Dilate the leading coordinates x′ (transverse to the wall), keep x″ fixed.

    Evaluates S_{h^N}(f(N x′, x″))(x′/N, x″) and compares it with
    S_BF¹(f_{x″})(x′), where f_{x″} freezes the trailing coordinates.
    """
    model = resolve_model(model)
    f = _coerce_function(f, model.dimension)
    xw = np.atleast_1d(np.asarray(x_wall, dtype=float))
    xa = np.atleast_1d(np.asarray(x_along, dtype=float))
    k = xw.size
    if k + xa.size != model.dimension:
        raise DomainError(f"x′ and x″ must together have {model.dimension} coordinates")
    point = np.concatenate([xw / N, xa])
    r = model.polytope.violated_facet(point, strict=True)
    if r is not None:
        raise DomainError(f"(x′/N, x″) = {point.tolist()} is not interior; fails {model.polytope.describe_facet(r)}")
    g = f.dilated(N, axes=list(range(k)))
    value = generalized_operator(model, g, N, point, policy, normalization=normalization)[0]
    limit = szasz_classical(f.with_fixed(xa, start=k), 1, xw, policy)
    return WallResult(value, limit, abs(value - limit))


def wall_sweep(model, f, x_wall, x_along, N_grid=(8, 16, 32, 64, 128, 256, 512, 1024),
               policy: TruncationPolicy = DEFAULT_POLICY, jobs: int = 1) -> ConvergenceSweep:
    model = resolve_model(model)
    N_grid = [int(n) for n in N_grid]
    res = _evaluate_grid(lambda n: wall_scaled_operator(model, f, x_wall, x_along, n, policy), N_grid, jobs)
    dist = [r.distance for r in res]
    return ConvergenceSweep(N_grid, [r.value for r in res], res[0].limit, dist, loglog_slope(N_grid, dist),
                            label=f"wall:{model.name}")


# ---------------------------------------------------------------------------
# Poisson limit


def pmf_gap(x: float, N: int, k: int) -> float:
    """|Binomial(N, x/N)(k) − Poisson(x)(k)|."""
    return abs(float(stats.binom.pmf(k, N, x / N)) - float(stats.poisson.pmf(k, x)))


def first_order_correction(x: float, k) -> np.ndarray:
    """d_k with Binomial(N, x/N)(k) = Poisson(x)(k) + d_k/N + O(N⁻²)."""
    k = np.asarray(k, dtype=float)
    return -0.5 * stats.poisson.pmf(k, x) * ((k - x) ** 2 - k)


@dataclass(frozen=True)
class PoissonReport:
    x: float
    k_max: int
    N_grid: list
    sup_residual: list
    slope: float
    corrected_residual: list
    corrected_slope: float
    fitted_d: list
    analytic_d: list
    d_max_gap: float
    residual_table: list = field(default_factory=list)  # |Δ_k(N)|, one row per N, k = 0..k_max

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))


def poisson_refinement(x: float, k_max: Optional[int] = None, N_grid=DEFAULT_N_GRID) -> PoissonReport:
    """Binomial(N, x/N) against Poisson(x) for k ≤ k_max.

    Each k is fitted as Δ_k(N) = d_k/N + e_k/N² + g_k/N³; the corrected
    residual subtracts the fitted d_k/N.  The fitted d_k are reported next to
    the analytic first-order coefficients.
    """
    x = float(x)
    if x < 0:
        raise DomainError("poisson_refinement needs x >= 0")
    if k_max is None:
        k_max = int(math.ceil(x + 10 * math.sqrt(x) + 10))
    N = np.asarray([int(n) for n in N_grid], dtype=float)
    if np.any(x / N >= 1):
        raise DomainError("every N in the grid must exceed x")
    k = np.arange(k_max + 1)
    diff = stats.binom.pmf(k[None, :], N[:, None].astype(int), x / N[:, None]) - stats.poisson.pmf(k[None, :], x)
    sup = np.max(np.abs(diff), axis=1)
    A = np.stack([1 / N, 1 / N**2, 1 / N**3], axis=-1)
    coef, *_ = np.linalg.lstsq(A * N[0], diff * N[0], rcond=None)
    d = coef[0]
    corrected = np.max(np.abs(diff - d[None, :] / N[:, None]), axis=1)
    analytic = first_order_correction(x, k)
    return PoissonReport(
        x=x, k_max=int(k_max), N_grid=[int(n) for n in N], sup_residual=sup.tolist(),
        slope=loglog_slope(N, sup), corrected_residual=corrected.tolist(),
        corrected_slope=loglog_slope(N, corrected), fitted_d=d.tolist(), analytic_d=analytic.tolist(),
        d_max_gap=float(np.max(np.abs(d - analytic))), residual_table=np.abs(diff).tolist(),
    )
