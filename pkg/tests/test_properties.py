"""Property-based checks with hypothesis."""

import math

import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from szasz_lab.lattice_operators import (
    ClosedFormNorms, ScaledNorms, bernstein, generalized_operator, szasz_classical,
)
from szasz_lab.pmf import log_binomial, log_negbinomial, log_poisson
from szasz_lab.toric_models import get_model, legendre_invert, symplectic_potential

PROPS = settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])

# (model name, strategy for an interior point)
MODEL_POINTS = {
    "bargmann-fock": st.floats(0.01, 20.0),
    "fubini-study-cp1": st.floats(0.005, 0.995),
    "bergman-ball-1": st.floats(0.01, 20.0),
}
model_and_point = st.sampled_from(sorted(MODEL_POINTS)).flatmap(
    lambda name: st.tuples(st.just(name), MODEL_POINTS[name]))
Ns = st.integers(2, 64)


@PROPS
@given(model_and_point, Ns)
def test_partition_of_unity(mp, N):
    name, x = mp
    value, _ = generalized_operator(name, "1", N, x)
    assert abs(value - 1) <= 1e-12


@PROPS
@given(model_and_point, Ns, st.floats(1e-3, 1e3))
def test_measure_constant_invariance(mp, N, c):
    name, x = mp
    model = get_model(name)
    base, _ = generalized_operator(model, "gaussian-bump", N, x)
    scaled, _ = generalized_operator(model, "gaussian-bump", N, x, norms=ScaledNorms(ClosedFormNorms(model), c))
    assert abs(base - scaled) <= 1e-13 * max(1.0, abs(base))


@PROPS
@given(model_and_point)
def test_legendre_round_trip(mp):
    name, x = mp
    model = get_model(name)
    dual = legendre_invert(model, x)
    assert abs(float(model.grad_phi(dual.rho)[0]) - x) <= 1e-10 * max(1.0, x)


@PROPS
@given(model_and_point, model_and_point)
def test_symplectic_potential_midpoint_convex(a, b):
    if a[0] != b[0]:
        return
    model = get_model(a[0])
    xa, xb = a[1], b[1]
    mid = symplectic_potential(model, 0.5 * (xa + xb))
    assert mid <= 0.5 * (symplectic_potential(model, xa) + symplectic_potential(model, xb)) + 1e-12


@PROPS
@given(model_and_point, Ns, st.floats(-3, 3), st.floats(-3, 3))
def test_reproduces_affine_functions(mp, N, a, b):
    # kernel-sum normalised operators reproduce affine f exactly
    name, x = mp
    value, _ = generalized_operator(name, f"{a!r} + {b!r}*t", N, x)
    assert abs(value - (a + b * x)) <= 1e-11 * (1 + abs(a) + abs(b) * (1 + x))


@PROPS
@given(model_and_point, Ns)
def test_positivity_and_monotonicity(mp, N):
    name, x = mp
    low, _ = generalized_operator(name, "exp(-(t-1)**2)", N, x)
    high, _ = generalized_operator(name, "exp(-(t-1)**2) + t**2/10", N, x)
    assert low >= 0
    assert high >= low - 1e-14


@PROPS
@given(Ns, st.floats(0.01, 0.99))
def test_bernstein_between_extremes(N, x):
    vals = np.cos(3 * np.arange(N + 1) / N)
    value = bernstein("cos(3*t)", N, x)
    assert vals.min() - 1e-12 <= value <= vals.max() + 1e-12


@PROPS
@given(Ns, st.floats(0.05, 10.0))
def test_szasz_second_moment(N, x):
    # the ε tail is relative to the weight mass; t² grows past the window edge
    assert math.isclose(szasz_classical("t^2", N, x), x * x + x / N, rel_tol=1e-12, abs_tol=1e-12)


@PROPS
@given(st.floats(1e-3, 2e4))
def test_poisson_pmf_sums_to_one(lam):
    k = np.arange(0, int(lam + 40 * math.sqrt(lam) + 60))
    assert abs(math.fsum(np.exp(log_poisson(k, lam))) - 1) <= 1e-13


@PROPS
@given(st.integers(1, 400), st.floats(0.0, 1.0))
def test_binomial_pmf_sums_to_one(n, p):
    k = np.arange(n + 1)
    assert abs(math.fsum(np.exp(log_binomial(k, n, p))) - 1) <= 1e-13


@PROPS
@given(st.integers(1, 200), st.floats(0.05, 1.0))
def test_negbinomial_pmf_sums_to_one(n, p):
    q = 1 - p
    mean, sd = n * q / p, math.sqrt(n * q) / p
    j = np.arange(0, int(mean + 40 * sd + 80))
    assert abs(math.fsum(np.exp(log_negbinomial(j, n, p))) - 1) <= 1e-13
