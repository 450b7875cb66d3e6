"""Independent oracles, written without the library.

Exact rationals via :mod:`fractions`, high-precision sums and integrals via
:mod:`mpmath`, derivatives via :mod:`sympy`.  Values they produce are frozen
as literals in the test modules; ``test_oracles.py`` re-derives them.
"""

from fractions import Fraction
from math import comb, factorial

import mpmath as mp
import sympy as sp

mp.mp.dps = 40


def binomial_moment(k, N, x):
    """E[(X/N)^k], X ~ Binomial(N, x), exact for rational x."""
    x = Fraction(x)
    return sum(Fraction(j, N) ** k * comb(N, j) * x**j * (1 - x) ** (N - j) for j in range(N + 1))


def poisson_second_moment(N, x):
    """E[(X/N)²], X ~ Poisson(Nx): (Var + mean²)/N²."""
    x = Fraction(x)
    lam = N * x
    return (lam + lam**2) / N**2


def negbin_second_moment(N, x):
    """E[(X/N)²] for NB failures with mean Nx and variance Nq/p² (q = x/(1+x), p = 1/(1+x))."""
    x = Fraction(x)
    mean = N * x
    var = N * x * (1 + x)
    return (var + mean**2) / N**2


def geometric_series_prefactor(N):
    """Σ_j (N)_j q^j/j! = (1−q)^{−N}, so the prefactor-normalised disk operator at f ≡ 1 is (N−1)/(N+1)."""
    return Fraction(N - 1, N + 1)


def fs_weight(N, x, k):
    """Binomial term times the CP¹ kernel N+1."""
    x = Fraction(x)
    return comb(N, k) * x**k * (1 - x) ** (N - k) * (N + 1)


def beta_norm_fs(N, k):
    """∫₀^∞ t^k (1+t)^{−N−2} dt by numerical quadrature."""
    return mp.quad(lambda t: t**k * (1 + t) ** (-N - 2), [0, 1, mp.inf])


def ball_norm(N, j):
    """∫₀¹ t^j (1−t)^{N−2} dt."""
    return mp.quad(lambda t: t**j * (1 - t) ** (N - 2), [0, 1])


def bf_norm(N, a):
    """∫₀^∞ t^a e^{−Nt} dt."""
    return mp.quad(lambda t: t**a * mp.e ** (-N * t), [0, mp.inf])


def fs_kernel_sum(N, x):
    """Σ_k |z^k|² e^{−Nφ} / ‖z^k‖² with ‖z^k‖² = k!(N−k)!/(N+1)! at |z|² = x/(1−x)."""
    x = Fraction(x)
    z2 = x / (1 - x)
    return sum(z2**k * (1 + z2) ** (-N) * Fraction(factorial(N + 1), factorial(k) * factorial(N - k))
               for k in range(N + 1))


def moment_map_symbolic(phi_text, rho_value):
    rho = sp.Symbol("rho")
    phi = sp.sympify(phi_text, locals={"rho": rho})
    return sp.nsimplify(sp.diff(phi, rho).subs(rho, rho_value))


def h_second_derivative_at_zero(h_text):
    x = sp.Symbol("x")
    h = sp.sympify(h_text, locals={"x": x})
    return sp.limit(sp.diff(h, x, 2), x, 0, "+")


def poisson_spot(x, N, k):
    """|C(N,k)(x/N)^k(1−x/N)^{N−k} − e^{−x}x^k/k!| at 40 digits."""
    x = mp.mpf(x)
    b = mp.binomial(N, k) * (x / N) ** k * (1 - x / N) ** (N - k)
    p = mp.e ** (-x) * x**k / mp.factorial(k)
    return abs(b - p)


def corner_fs_second_moment(N, x):
    """E[X²] with X ~ Binomial(N, x/N): x + x² − x²/N."""
    return sum(Fraction(j) ** 2 * comb(N, j) * (Fraction(x) / N) ** j * (1 - Fraction(x) / N) ** (N - j)
               for j in range(N + 1))


def pascal_trials_mean_over_N(x):
    """E[X/N] for trials X with p = 1/(1+x): (N/p)/N = 1 + x."""
    return 1 + Fraction(x)


def symplectic_potential_closed(name, x):
    """u(x) by hand: x log x − x (BF), x log x + (1−x) log(1−x) (FS), x log x − (1+x) log(1+x) (ball)."""
    x = mp.mpf(x)
    xlx = x * mp.log(x) if x > 0 else mp.mpf(0)
    if name == "bargmann-fock":
        return xlx - x
    if name == "fubini-study-cp1":
        return xlx + (1 - x) * mp.log(1 - x)
    if name == "bergman-ball-1":
        return xlx - (1 + x) * mp.log(1 + x)
    raise KeyError(name)
