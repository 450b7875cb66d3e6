"""Log probability mass functions that stay accurate for large means.

The naive form k log λ − λ − log k! loses about eps·λ·log λ to cancellation,
which at λ ~ 10⁴ already shows up in partition sums.  The saddle-point form
below (Stirling remainder plus the deviance k log(k/λ) − k + λ) keeps the
error near eps.  Near k = λ the deviance is summed as 2k(atanh v − v) + v(k − λ)
with v = (k − λ)/(k + λ); elsewhere ``scipy.special.kl_div`` is accurate.
"""

import math

import numpy as np
from scipy.special import gammaln, kl_div

_HALF_LOG_2PI = 0.5 * math.log(2 * math.pi)
_STIRLING = (1 / 12, 1 / 360, 1 / 1260, 1 / 1680, 1 / 1188)


def deviance(x, mu) -> np.ndarray:
    """x log(x/μ) − x + μ, accurate when x is close to μ."""
    x, mu = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(mu, dtype=float))
    out = np.asarray(kl_div(x, mu), dtype=float).copy()
    with np.errstate(invalid="ignore", divide="ignore"):
        v = (x - mu) / (x + mu)
    near = np.abs(v) < 0.1
    if np.any(near):
        vn = v[near]
        v2 = vn * vn
        term, series = vn * v2, np.zeros_like(vn)
        for j in range(1, 12):  # atanh v − v = Σ v^{2j+1}/(2j+1), |v| < 0.1
            series += term / (2 * j + 1)
            term = term * v2
        out[near] = 2 * x[near] * series + vn * (x[near] - mu[near])
    return out


def stirling_remainder(n) -> np.ndarray:
    """log n! − (n + ½) log n + n − ½ log 2π, with the value at 0 left as nan."""
    n = np.asarray(n, dtype=float)
    out = np.empty_like(n)
    big = n >= 15
    nb = n[big]
    r = 1.0 / nb**2
    s0, s1, s2, s3, s4 = _STIRLING
    out[big] = (s0 - (s1 - (s2 - (s3 - s4 * r) * r) * r) * r) / nb
    ns = n[~big]
    with np.errstate(divide="ignore", invalid="ignore"):
        out[~big] = gammaln(ns + 1) - (ns + 0.5) * np.log(ns) + ns - _HALF_LOG_2PI
    return out


def log_poisson(k, lam: float) -> np.ndarray:
    """log of e^{−λ} λ^k / k! for integer-valued k ≥ 0."""
    k = np.asarray(k, dtype=float)
    if lam == 0:
        return np.where(k == 0, 0.0, -np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        v = -stirling_remainder(k) - deviance(k, lam) - _HALF_LOG_2PI - 0.5 * np.log(k)
    return np.where(k == 0, -lam, v)


def log_binomial(x, n, p: float, q: float = None) -> np.ndarray:
    """log of C(n, x) p^x q^{n−x}; ``q`` defaults to 1 − p but can be passed exactly."""
    x = np.asarray(x, dtype=float)
    n = np.asarray(n, dtype=float)
    q = 1.0 - p if q is None else q
    with np.errstate(divide="ignore", invalid="ignore"):
        v = (stirling_remainder(n) - stirling_remainder(x) - stirling_remainder(n - x)
             - deviance(x, n * p) - deviance(n - x, n * q)
             + 0.5 * np.log(n / (2 * math.pi * x * (n - x))))
        v = np.where(x == 0, n * math.log(q) if q > 0 else np.where(n == 0, 0.0, -np.inf), v)
        v = np.where(x == n, n * math.log(p) if p > 0 else np.where(n == 0, 0.0, -np.inf), v)
    return v


def log_negbinomial(j, N: int, p: float, q: float = None) -> np.ndarray:
    """log P(j failures before the N-th success): (N/(N+j))·C(N+j, N) p^N q^j."""
    j = np.asarray(j, dtype=float)
    q = 1.0 - p if q is None else q
    return np.log(N / (N + j)) + log_binomial(N, N + j, p, q)
