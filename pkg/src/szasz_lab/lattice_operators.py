"""Classical and generalized Szasz operators as truncated lattice sums.

All weights are handled in log space; sums subtract the maximum log weight
before exponentiating.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.special import gammaln, xlog1py, xlogy

from .errors import DependencyError, DomainError
from .functions import TestFunction
from .lattice import DEFAULT_POLICY, LatticeWindow, TruncationPolicy, lattice_window
from .pmf import log_negbinomial, log_poisson
from .toric_models import DualPoint, ToricModel, legendre_invert, resolve_model

NORMALIZATIONS = ("kernel-sum", "paper-prefactor")


# ---------------------------------------------------------------------------
# Norm sources


class ClosedFormNorms:
    """log ‖z^α‖² from the model's closed form."""

    def __init__(self, model: ToricModel):
        if model.log_norm_closed is None:
            raise DependencyError(f"{model.name} has no closed-form monomial norms")
        self.model = model
        self.label = "closed-form"

    def __call__(self, alphas: np.ndarray, N: int) -> np.ndarray:
        return np.asarray(self.model.log_norm_closed(np.asarray(alphas), N), dtype=float)


class ScaledNorms:
    """Another norm source with every norm multiplied by ``constant``."""

    def __init__(self, source, constant: float):
        if not constant > 0:
            raise ValueError("norm scaling constant must be positive")
        self.source = source
        self.log_constant = math.log(constant)
        self.label = f"{getattr(source, 'label', 'norms')}*{constant:g}"

    def __call__(self, alphas, N):
        return self.source(alphas, N) + self.log_constant


def default_norm_source(model: ToricModel):
    """Closed forms when the model has them, quadrature otherwise."""
    if model.log_norm_closed is not None:
        return ClosedFormNorms(model)
    from .kernel_quadrature import QuadratureNorms

    return QuadratureNorms(model)


# ---------------------------------------------------------------------------
# Weight table


@dataclass(frozen=True)
class LatticeWeightTable:
    """Per-lattice-point log weights of a generalized operator at fixed (N, x)."""

    N: int
    x: np.ndarray
    alphas: np.ndarray
    log_weights: np.ndarray
    normalizer: float
    model: str
    truncation_radius: list = field(default_factory=list)
    tail_bound: float = 0.0
    normalization: str = "kernel-sum"

    @property
    def log_normalizer(self) -> float:
        return math.log(self.normalizer)

    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    def partition_sum(self) -> float:
        """Σ_α w_α / normalizer; 1 for the kernel-sum normalisation."""
        return float(np.sum(np.exp(self.log_weights - self.log_normalizer)))

    def header(self) -> dict:
        return {
            "N": self.N, "x": [float(v) for v in self.x], "model": self.model,
            "normalizer": self.normalizer, "truncation_radius": self.truncation_radius,
            "tail_bound": self.tail_bound, "normalization": self.normalization,
        }

    def to_csv(self, target=None) -> str:
        """Write ``# {json header}`` then columns ``alpha_1..alpha_m, log_weight``."""
        buf = io.StringIO()
        buf.write("# " + json.dumps(self.header(), sort_keys=True) + "\n")
        writer = csv.writer(buf, lineterminator="\n")
        m = self.alphas.shape[1]
        writer.writerow([f"alpha_{j + 1}" for j in range(m)] + ["log_weight"])
        for a, lw in zip(self.alphas, self.log_weights):
            writer.writerow([int(v) for v in a] + [repr(float(lw))])
        text = buf.getvalue()
        if target is not None:
            Path(target).write_text(text)
        return text

    @classmethod
    def from_csv(cls, source) -> "LatticeWeightTable":
        text = Path(source).read_text() if not str(source).startswith("#") else str(source)
        first, _, body = text.partition("\n")
        header = json.loads(first.lstrip("# "))
        rows = list(csv.reader(io.StringIO(body)))[1:]
        data = np.array([[float(v) for v in row] for row in rows if row])
        return cls(
            N=header["N"], x=np.array(header["x"]), alphas=data[:, :-1].astype(np.int64),
            log_weights=data[:, -1], normalizer=header["normalizer"], model=header["model"],
            truncation_radius=header["truncation_radius"], tail_bound=header["tail_bound"],
            normalization=header.get("normalization", "kernel-sum"),
        )


# ---------------------------------------------------------------------------
# Helpers


def _check_N(N) -> int:
    if int(N) != N or N < 1:
        raise DomainError(f"N must be a positive integer, got {N!r}")
    return int(N)


def _point(x, m=None) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if m is not None and x.shape != (m,):
        raise DomainError(f"expected a point with {m} coordinates, got shape {x.shape}")
    return x


def _weighted_sum(f: TestFunction, alphas, log_weights, N) -> tuple[float, float]:
    """(Σ f(α/N) e^{lw − max}, max) with f skipped outside its support."""
    lmax = float(np.max(log_weights))
    points = alphas / float(N)
    inside = f.inside_support(points)
    vals = np.zeros(len(alphas))
    if np.any(inside):
        vals[inside] = f(points[inside])
    return float(np.sum(vals * np.exp(log_weights - lmax))), lmax


def _coerce_function(f, arity):
    if isinstance(f, TestFunction):
        if f.arity != arity:
            raise DomainError(f"function has arity {f.arity}, model dimension is {arity}")
        return f
    from .functions import parse_function

    return parse_function(str(f), arity)


# ---------------------------------------------------------------------------
# Closed-form model operators


def szasz_log_weights(alphas, N, x) -> np.ndarray:
    """log of e^{−N‖x‖} (Nx)^α / α!."""
    a = np.asarray(alphas, dtype=float)
    lam = np.broadcast_to(np.asarray(N * x, dtype=float), a.shape[-1:])
    return np.sum([log_poisson(a[..., i], lam[i]) for i in range(lam.size)], axis=0)


def szasz_classical(f, N: int, x, policy: TruncationPolicy = DEFAULT_POLICY, full_output: bool = False):
    """Classical Szasz operator e^{−N‖x‖} Σ_α f(α/N) (Nx)^α / α!.

    With ``full_output`` the :class:`LatticeWindow` (truncation box and the
    relative tail bound) is returned alongside the value.
    """
    N = _check_N(N)
    x = _point(x)
    if np.any(x <= 0):
        raise DomainError(f"Szasz operator needs x > 0 in every coordinate, got {x.tolist()}")
    f = _coerce_function(f, x.size)
    window = lattice_window(
        lambda a: szasz_log_weights(a, N, x), N * x, np.sqrt(N * x),
        np.zeros(x.size), np.full(x.size, np.inf), policy,
    )
    s, lmax = _weighted_sum(f, window.alphas, window.log_weights, N)
    value = s * math.exp(lmax)
    return (value, window) if full_output else value


def bernstein(f, N: int, x) -> float:
    """Tensor-product Bernstein polynomial Σ_k f(k/N) Π_j C(N,k_j) x_j^{k_j} (1−x_j)^{N−k_j}."""
    N = _check_N(N)
    x = _point(x)
    if np.any((x < 0) | (x > 1)):
        raise DomainError(f"Bernstein operator needs x in [0, 1]^m, got {x.tolist()}")
    f = _coerce_function(f, x.size)
    axes = [np.arange(N + 1)] * x.size
    alphas = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=-1)
    a = alphas.astype(float)
    lw = np.sum(gammaln(N + 1) - gammaln(a + 1) - gammaln(N - a + 1) + xlogy(a, x) + xlog1py(N - a, -x), axis=-1)
    finite = np.isfinite(lw)
    s, lmax = _weighted_sum(f, alphas[finite], lw[finite], N)
    return s * math.exp(lmax)


def pascal_log_weights(j, N, x) -> np.ndarray:
    """log of (1+x)^{−N} (N)_j q^j / j! with q = x/(1+x)."""
    return log_negbinomial(j, N, 1.0 / (1.0 + x), x / (1.0 + x))


def pascal_disk(f, N: int, x: float, policy: TruncationPolicy = DEFAULT_POLICY,
                normalization: str = "kernel-sum", full_output: bool = False):
    """Disk operator (1+x)^{−N} Σ_j (N)_j f(j/N) (x/(1+x))^j / j!.

    ``normalization="paper-prefactor"`` multiplies by (N−1)/(N+1), the ratio
    of the kernel implied by the disk norms (N−1) to the stated kernel (N+1).
    """
    N = _check_N(N)
    if N < 2:
        raise DomainError("disk operator needs N >= 2")
    x = float(np.squeeze(x))
    if not x > 0:
        raise DomainError(f"disk operator needs x > 0, got {x}")
    if normalization not in NORMALIZATIONS:
        raise ValueError(f"normalization must be one of {NORMALIZATIONS}")
    f = _coerce_function(f, 1)
    window = lattice_window(
        lambda a: pascal_log_weights(a[:, 0], N, x), [N * x], [math.sqrt(N * x * (1 + x))],
        [0.0], [np.inf], policy,
    )
    s, lmax = _weighted_sum(f, window.alphas, window.log_weights, N)
    value = s * math.exp(lmax)
    if normalization == "paper-prefactor":
        value *= (N - 1) / (N + 1)
    return (value, window) if full_output else value


# ---------------------------------------------------------------------------
# Generalized operator


def generalized_log_weights(dual: DualPoint, N: int, alphas, log_norms) -> np.ndarray:
    """N(u(x) + <α/N − x, ∇u(x)>) − log‖z^α‖²."""
    a = np.asarray(alphas, dtype=float)
    return N * dual.u_value + (a - N * dual.x) @ dual.grad_u - log_norms


def generalized_weight(model, N: int, x, alpha, norms=None) -> float:
    """Log weight of one lattice point for the generalized operator."""
    model = resolve_model(model)
    N = _check_N(N)
    alpha = np.atleast_1d(np.asarray(alpha, dtype=np.int64))
    if not model.polytope.contains_lattice(alpha, N):
        raise DomainError(f"alpha = {alpha.tolist()} is not in N·P for N = {N}")
    norms = norms or default_norm_source(model)
    dual = legendre_invert(model, x)
    log_norm = norms(alpha[None, :], N)
    return float(generalized_log_weights(dual, N, alpha[None, :], log_norm)[0])


def weight_window(model: ToricModel, N: int, dual: DualPoint, norms, policy: TruncationPolicy) -> LatticeWindow:
    lower, upper = model.polytope.lattice_bounds(N)
    spread = np.sqrt(np.maximum(N * np.diag(dual.hessian_H), 0.0))
    return lattice_window(
        lambda a: generalized_log_weights(dual, N, a, norms(a, N)),
        N * dual.x, spread, lower, upper, policy,
        member=lambda a: model.polytope.contains_lattice(a, N),
    )


def generalized_operator(model, f, N: int, x, policy: TruncationPolicy = DEFAULT_POLICY,
                         norms=None, normalization: str = "kernel-sum"):
    """Generalized Szasz operator S_{h^N}(f)(x) and its weight table.

    The normaliser is the computed Bergman-kernel sum Σ_α w_α by default; with
    ``normalization="paper-prefactor"`` it is the model's stated kernel
    value instead (only the Bergman ball differs).
    """
    model = resolve_model(model)
    N = _check_N(N)
    if N < model.min_N:
        raise DomainError(f"{model.name} needs N >= {model.min_N} for finite monomial norms")
    if normalization not in NORMALIZATIONS:
        raise ValueError(f"normalization must be one of {NORMALIZATIONS}")
    f = _coerce_function(f, model.dimension)
    norms = norms or default_norm_source(model)
    dual = legendre_invert(model, x)
    window = weight_window(model, N, dual, norms, policy)
    s, lmax = _weighted_sum(f, window.alphas, window.log_weights, N)
    kernel_sum = math.exp(window.log_total)
    if normalization == "kernel-sum":
        value = s * math.exp(lmax - window.log_total)
        normalizer = kernel_sum
    else:
        stated = model.stated_kernel_diag(N)
        if stated is None:
            raise DependencyError(f"{model.name} has no closed-form kernel for paper-prefactor normalisation")
        value = s * math.exp(lmax - math.log(stated))
        normalizer = stated
    table = LatticeWeightTable(
        N=N, x=dual.x, alphas=window.alphas, log_weights=window.log_weights,
        normalizer=normalizer, model=model.name, truncation_radius=window.radius,
        tail_bound=window.tail_bound, normalization=normalization,
    )
    return value, table


def weight_identity_gap(model, N: int, x, alphas, norms=None) -> np.ndarray:
    """|N(u + <α/N − x, ∇u>) − (<α, ρ> − Nφ(ρ))| per lattice point, ρ = ρ(x).

    The left side uses only symplectic-potential data, the right side only the
    Kähler potential at the dual point.
    """
    model = resolve_model(model)
    dual = legendre_invert(model, x)
    a = np.atleast_2d(np.asarray(alphas, dtype=float))
    lhs = N * (dual.u_value + (a / N - dual.x) @ dual.grad_u)
    rhs = a @ dual.rho - N * float(model.phi(dual.rho))
    return np.abs(lhs - rhs)
