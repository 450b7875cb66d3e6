import json
import math
import warnings

import numpy as np
import pytest

from oracles import corner_fs_second_moment, poisson_spot
from szasz_lab.asymptotics_lab import (
    DEFAULT_N_GRID, b1_formula, corner_b1_fit, corner_scaled_operator, corner_sweep, first_order_correction,
    fit_expansion, loglog_slope, pmf_gap, poisson_refinement, szasz_limit, voronovskaya_extract,
    voronovskaya_theory, wall_scaled_operator, wall_sweep,
)
from szasz_lab.errors import ConditioningWarning, DomainError

FS = "fubini-study-cp1"
BALL = "bergman-ball-1"
BF = "bargmann-fock"
CP1xCP1 = "product:fubini-study-cp1xfubini-study-cp1"


def test_fit_recovers_polynomial():
    N = np.array(DEFAULT_N_GRID, dtype=float)
    fit = fit_expansion(N, 2.0 - 3.0 / N + 5.0 / N**2 + 7.0 / N**3)
    assert fit.coefficients == pytest.approx([2.0, -3.0, 5.0, 7.0], rel=1e-8)
    assert fit.r2 == pytest.approx(1.0)
    assert fit.predict(100) == pytest.approx(2.0 - 0.03 + 5e-4 + 7e-6)


def test_fit_residual_slope_second_order():
    N = np.array(DEFAULT_N_GRID, dtype=float)
    fit = fit_expansion(N, 1.0 + 0.5 / N + 4.0 / N**2 - 1.0 / N**3)
    assert -2.3 <= fit.residual_slope <= -1.7


def test_fit_validation():
    with pytest.raises(ValueError):
        fit_expansion([1, 2, 3], [1, 1, 1])
    with pytest.raises(ValueError):
        fit_expansion([1, 3, 2, 4], [1, 1, 1, 1])
    with pytest.raises(ValueError):
        fit_expansion([1, 2, 3, 4], [1, 1, 1, 1], degree=4)


def test_fit_conditioning_warning():
    N = np.arange(1000, 1010)
    with pytest.warns(ConditioningWarning, match="condition number"):
        fit_expansion(N, 1 + 1 / N, degree=5)


def test_fit_serialization():
    fit = fit_expansion([4, 8, 16, 32, 64], [1.5, 1.25, 1.125, 1.0625, 1.03125], degree=2)
    doc = json.loads(json.dumps(fit.to_dict()))
    assert doc["N_grid"] == [4, 8, 16, 32, 64]
    assert fit.to_csv().splitlines()[0] == "N,value,residual"


def test_loglog_slope():
    N = [10, 20, 40, 80]
    assert loglog_slope(N, [3 / n for n in N]) == pytest.approx(-1.0)
    assert math.isnan(loglog_slope(N, [0, 0, 0, 1]))


@pytest.mark.parametrize("model, x, c1", [(BF, 1.0, 1.0), (FS, 0.5, 0.25), (BALL, 1.0, 2.0)])
def test_voronovskaya_examples(model, x, c1):
    fit = voronovskaya_extract(model, "t^2", x)
    assert fit.c0 == pytest.approx(x**2, rel=1e-9)
    assert fit.c1 == pytest.approx(c1, rel=1e-8)
    assert voronovskaya_theory(model, "t^2", x) == pytest.approx(c1, rel=1e-10)


def test_voronovskaya_gaussian_bump_residual():
    fit = voronovskaya_extract(FS, "gaussian-bump", 0.4)
    assert -2.3 <= fit.residual_slope <= -1.7
    assert "smooth-noncompact" in fit.label or "compact-support" in fit.label


def test_voronovskaya_paper_prefactor_zeroth_order():
    # the prefactor normalisation multiplies by (N−1)/(N+1) = 1 − 2/N + 2/N² − …, cut at degree 3
    fit = voronovskaya_extract(BALL, "1", 0.7, normalization="paper-prefactor")
    assert fit.c0 == pytest.approx(1.0, abs=1e-7)
    assert fit.c1 == pytest.approx(-2.0, rel=1e-4)


def test_voronovskaya_domain():
    with pytest.raises(DomainError):
        voronovskaya_extract(FS, "t^2", 1.5)


@pytest.mark.parametrize("N", [4, 10, 33])
def test_corner_fs_moments(N):
    assert corner_scaled_operator(FS, "t", 1.0, N) == pytest.approx(1.0, rel=1e-13)
    assert corner_scaled_operator(FS, "t^2", 1.0, N) == pytest.approx(float(corner_fs_second_moment(N, 1)), rel=1e-13)


def test_corner_bf_fixed_point():
    values = [corner_scaled_operator(BF, "smooth-bump:center=1,radius=1.5", 0.8, n) for n in (2, 17, 256, 2048)]
    assert max(values) - min(values) <= 1e-12
    assert values[0] == pytest.approx(szasz_limit("smooth-bump:center=1,radius=1.5", 0.8), abs=1e-13)


def test_corner_domain():
    with pytest.raises(DomainError):
        corner_scaled_operator(FS, "t", 5.0, 4)


@pytest.mark.parametrize("model, sign", [(FS, -1.0), (BALL, 1.0)])
def test_corner_b1_quadratic(model, sign):
    x = 0.6
    rep = corner_b1_fit(model, "t^2", x)
    assert rep.c0_gap < 1e-8
    assert rep.c1_fitted == pytest.approx(sign * x**2, rel=1e-6)
    # h″(0) comes from a finite-difference stencil
    assert rep.b1_formula == pytest.approx(-sign * x**2, rel=1e-5)
    assert rep.sign_agrees is False
    assert rep.magnitude_gap < 0.02
    assert rep.verdict_eligible


def test_corner_b1_cubic_no_verdict():
    rep = corner_b1_fit(FS, "t^3", 0.6)
    assert not rep.verdict_eligible
    assert rep.regime == "polynomial-moment-oracle"
    assert rep.magnitude_gap is not None


def test_corner_b1_bf_zero():
    rep = corner_b1_fit(BF, "t^2", 0.9)
    assert abs(rep.c1_fitted) < 1e-9
    assert abs(b1_formula(BF, "t^2", 0.9)) < 1e-9
    assert rep.sign_agrees is True


@pytest.mark.parametrize("model", [FS, BALL])
def test_corner_sweep_slope(model):
    sweep = corner_sweep(model, "smooth-bump:center=1,radius=1.5", 0.7)
    assert -1.15 <= sweep.slope <= -0.85


def test_wall_examples():
    for N in (8, 64, 512):
        assert wall_scaled_operator(CP1xCP1, "s", 1.3, 0.4, N).value == pytest.approx(1.3, rel=1e-12)
    d = [wall_scaled_operator(CP1xCP1, "t^2", 1.3, 0.4, N).distance for N in (16, 32, 64, 128)]
    # S_N(t²)(x″) = x″² + x″(1−x″)/N
    assert d == pytest.approx([0.24 / N for N in (16, 32, 64, 128)], rel=1e-10)


def test_wall_sweep_slope():
    sweep = wall_sweep(CP1xCP1, "smooth-bump:center=2,radius=2.5", 1.1, 0.4)
    assert -1.15 <= sweep.slope <= -0.85


def test_wall_domain():
    with pytest.raises(DomainError):
        wall_scaled_operator(CP1xCP1, "s", [1.0, 0.2], 0.4, 8)
    with pytest.raises(DomainError):
        wall_scaled_operator(CP1xCP1, "s", 1.0, 1.4, 8)


def test_poisson_spot_value():
    assert pmf_gap(1.0, 10, 0) == pytest.approx(abs(0.9**10 - math.exp(-1)), abs=1e-15)
    assert pmf_gap(1.0, 10, 0) == pytest.approx(float(poisson_spot(1, 10, 0)), abs=1e-15)


def test_first_order_correction_matches_numbers():
    x, N = 2.0, 4000
    k = np.arange(12)
    from scipy import stats

    diff = stats.binom.pmf(k, N, x / N) - stats.poisson.pmf(k, x)
    assert np.max(np.abs(diff * N - first_order_correction(x, k))) < 5e-3


@pytest.mark.parametrize("x", [1.0, 3.7])
def test_poisson_refinement_slopes(x):
    rep = poisson_refinement(x)
    assert abs(rep.slope + 1) <= 0.1
    assert abs(rep.corrected_slope + 2) <= 0.2
    assert rep.d_max_gap < 1e-3


def test_poisson_refinement_x_zero():
    rep = poisson_refinement(0.0, k_max=3)
    assert max(rep.sup_residual) == 0.0


def test_poisson_refinement_domain():
    with pytest.raises(DomainError):
        poisson_refinement(-1.0)
    with pytest.raises(DomainError):
        poisson_refinement(50.0, N_grid=[32, 64, 128, 256])


def test_parallel_grid_matches_serial():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        a = voronovskaya_extract(FS, "t^3", 0.3, jobs=1)
        b = voronovskaya_extract(FS, "t^3", 0.3, jobs=4)
    assert a.values == b.values
