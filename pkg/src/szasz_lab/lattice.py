"""Truncated enumeration of log-concave lattice weights.

Operator weights along any lattice line are log-concave in α (the linear
exponent is combined with −log‖z^α‖², and α ↦ log‖z^α‖² is convex by Hölder).
Past the mode the ratio of consecutive weights therefore decreases, so the
mass beyond a window edge on each line is at most ``w_edge · r / (1 − r)``
with ``r = w_edge / w_inner``.  Windows are per-axis boxes grown until the
summed edge bounds fall below ``epsilon`` relative to the window mass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import logsumexp

from .errors import TruncationLimitError

NEGLIGIBLE_LOG = 30.0  # lines this far below the epsilon budget are ignored


@dataclass(frozen=True)
class TruncationPolicy:
    """How infinite lattice sums are cut off.

    ``mode="tail-bound"`` grows the window until the estimated relative tail
    mass is below ``epsilon``; ``mode="fixed-radius"`` uses the half-width
    ``radius`` around the mode and only reports the tail estimate.
    """

    mode: str = "tail-bound"
    epsilon: float = 1e-14
    max_terms: int = 4_000_000
    radius: Optional[int] = None

    def __post_init__(self):
        if self.mode not in ("tail-bound", "fixed-radius"):
            raise ValueError(f"unknown truncation mode {self.mode!r}")
        if self.mode == "fixed-radius" and (self.radius is None or self.radius < 1):
            raise ValueError("fixed-radius truncation needs a positive radius")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")


DEFAULT_POLICY = TruncationPolicy()


@dataclass(frozen=True)
class LatticeWindow:
    alphas: np.ndarray       # (k, m) integer points with finite weight
    log_weights: np.ndarray  # (k,)
    lower: np.ndarray        # (m,) window box
    upper: np.ndarray
    tail_bound: float        # estimated mass outside the box, relative to the window mass
    log_total: float         # log of the window mass

    @property
    def radius(self) -> list:
        return [[int(lo), int(hi)] for lo, hi in zip(self.lower, self.upper)]


def _box(lo, hi):
    axes = [np.arange(a, b + 1, dtype=np.int64) for a, b in zip(lo, hi)]
    grids = np.meshgrid(*axes, indexing="ij")
    shape = grids[0].shape
    return np.stack([g.ravel() for g in grids], axis=-1), shape


def lattice_window(
    log_weight: Callable[[np.ndarray], np.ndarray],
    center,
    spread,
    lower,
    upper,
    policy: TruncationPolicy = DEFAULT_POLICY,
    member: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> LatticeWindow:
    """Enumerate the lattice box around ``center`` that carries all but ``epsilon`` of the mass.

    ``lower``/``upper`` are the integer limits of the lattice region per axis
    (±inf when unbounded); ``spread`` is a per-axis scale (standard deviation)
    used for the initial half-width.
    """
    center = np.atleast_1d(np.asarray(center, dtype=float))
    spread = np.atleast_1d(np.asarray(spread, dtype=float))
    lower = np.atleast_1d(np.asarray(lower, dtype=float))
    upper = np.atleast_1d(np.asarray(upper, dtype=float))
    m = center.size
    if policy.mode == "fixed-radius":
        half = np.full(m, float(policy.radius))
    else:
        half = np.ceil(8.0 * np.maximum(spread, 0.0)) + 4.0
    lo = np.maximum(lower, np.floor(center - half))
    hi = np.minimum(upper, np.ceil(center + half))
    hi = np.maximum(hi, lo)
    log_eps = math.log(policy.epsilon)

    while True:
        count = int(np.prod(hi - lo + 1))
        if count > policy.max_terms:
            box_text = list(zip(lo.astype(int).tolist(), hi.astype(int).tolist()))
            raise TruncationLimitError(f"lattice window {box_text} needs {count} terms (cap {policy.max_terms})")
        alphas, shape = _box(lo.astype(np.int64), hi.astype(np.int64))
        lw = np.asarray(log_weight(alphas), dtype=float)
        if member is not None:
            lw = np.where(member(alphas), lw, -np.inf)
        lw = np.where(np.isnan(lw), -np.inf, lw)
        total = float(logsumexp(lw)) if np.any(np.isfinite(lw)) else -np.inf
        if not np.isfinite(total):
            raise TruncationLimitError("all lattice weights vanish in the window; check the point and model")
        box = lw.reshape(shape)
        grow_lo = np.zeros(m, dtype=bool)
        grow_hi = np.zeros(m, dtype=bool)
        tail_logs = []
        for j in range(m):
            for side in (-1, +1):
                edge = hi[j] if side > 0 else lo[j]
                bound = upper[j] if side > 0 else lower[j]
                if edge == bound:
                    continue
                if box.shape[j] < 2:
                    (grow_hi if side > 0 else grow_lo)[j] = True
                    continue
                face = np.take(box, -1 if side > 0 else 0, axis=j)
                inner = np.take(box, -2 if side > 0 else 1, axis=j)
                live = np.isfinite(face)
                if not np.any(live):
                    continue
                with np.errstate(invalid="ignore"):
                    lr = np.where(live & np.isfinite(inner), face - inner, np.inf)
                relevant = live & (face - total > log_eps - NEGLIGIBLE_LOG)
                if np.any(relevant & (lr >= 0)):
                    (grow_hi if side > 0 else grow_lo)[j] = True
                    tail_logs.append(np.inf)
                    continue
                ok = live & (lr < 0)
                side_tail = float(logsumexp(face[ok] + lr[ok] - np.log(-np.expm1(lr[ok])))) if np.any(ok) else -np.inf
                tail_logs.append(side_tail - total)
                if side_tail - total > log_eps - math.log(2 * m):
                    (grow_hi if side > 0 else grow_lo)[j] = True
        if policy.mode == "fixed-radius" or not (grow_lo.any() or grow_hi.any()):
            break
        step = np.maximum(8.0, np.ceil(hi - center))
        hi = np.where(grow_hi, np.minimum(upper, hi + step), hi)
        step = np.maximum(8.0, np.ceil(center - lo))
        lo = np.where(grow_lo, np.maximum(lower, lo - step), lo)

    keep = np.isfinite(lw)
    tail = float(np.exp(logsumexp(tail_logs))) if tail_logs else 0.0
    return LatticeWindow(alphas=alphas[keep], log_weights=lw[keep], lower=lo.astype(np.int64),
                         upper=hi.astype(np.int64), tail_bound=tail, log_total=total)
