"""
Test suite for Laplace inversion - invariant functions, Lévy tails and densities
Run with: pytest csbp/tests/test_laplace.py -v
"""

import logging
import math

import numpy as np
import pytest
from scipy import integrate, special

from csbp.errors import GreyConditionError
from csbp.laplace import (
    InvariantFunction,
    InversionKind,
    TransformFn,
    c_theta,
    density_g,
    density_g_grey,
    f_theta,
    hitting_time_lt,
    invert_to_function,
    kappa_transform,
    levy_tail,
    levy_tail_array,
    levy_tail_integral,
    slowly_varying_R,
    transform_diagnostics,
)
from csbp.models import INF


def bessel_density(u: float, x: float = 1.0) -> float:
    """g^∞_x(u) for Feller(2, 1): e^{-u-x}I_0(2√(ux))"""
    return math.exp(-u - x) * special.i0(2.0 * math.sqrt(u * x))


# ============= INVERSION =============

def test_exact_transform_inverts_to_exponential():
    """1/(q+1) ↦ e^{-x}; contour fallback keeps 1e-8 accuracy"""
    T = TransformFn(eval=lambda q: 1 / (q + 1), exact=True, complex_ok=True, label="exp")
    for x in (0.5, 1.0, 3.0):
        assert invert_to_function(T, x, InversionKind.DENSITY) == pytest.approx(math.exp(-x), abs=1e-8)


def test_float_transform_inverts_mass_function():
    """1/(q(q+1)) ↦ 1 - e^{-x} at double precision"""
    T = TransformFn.from_float(lambda q: 1.0 / (q * (q + 1.0)), label="cdf")
    assert invert_to_function(T, 1.0) == pytest.approx(-math.expm1(-1.0), abs=1e-4)


def test_kind_only_changes_clipping():
    """2/q inverts to the constant 2; a distribution function is capped at 1"""
    T = TransformFn(eval=lambda q: 2 / q, exact=True, label="two")
    assert invert_to_function(T, 1.0, InversionKind.MASS_FUNCTION) == pytest.approx(2.0, abs=1e-8)
    assert invert_to_function(T, 1.0, InversionKind.TAIL) == pytest.approx(2.0, abs=1e-8)
    assert invert_to_function(T, 1.0, InversionKind.DISTRIBUTION) == 1.0


def test_inversion_rejects_bad_order_and_point():
    T = TransformFn(eval=lambda q: 1 / (q + 1), exact=True)
    with pytest.raises(ValueError):
        invert_to_function(T, 1.0, order=9)
    with pytest.raises(ValueError):
        invert_to_function(T, 1.0, order=20)
    with pytest.raises(ValueError):
        invert_to_function(T, 0.0)


def test_transform_diagnostics_lists_orders():
    T = TransformFn(eval=lambda q: 1 / (q + 1), exact=True)
    diag = transform_diagnostics(T, 1.0)
    assert list(diag) == ["N=8", "N=10", "N=12", "N=14", "N=16"]
    assert diag["N=16"] == pytest.approx(math.exp(-1.0), abs=1e-5)


# ============= INVARIANT FUNCTIONS =============

@pytest.mark.parametrize("x", [0.5, 1.0, 3.0, 7.0])
def test_feller_f1_is_linear(feller_solver, x):
    """f_1(x) = (1+x)/2 for σ² = 2, γ = 1"""
    assert f_theta(feller_solver, 1.0, x) == pytest.approx((1.0 + x) / 2.0, rel=1e-12)


def test_invariant_function_vectorized(feller_solver):
    f = InvariantFunction(feller_solver, 1.0)
    xs = np.array([0.5, 1.0, 3.0])
    assert f(xs) == pytest.approx((1.0 + xs) / 2.0, rel=1e-12)
    assert isinstance(f(2.0), float)
    with pytest.raises(ValueError):
        f(np.array([1.0, 0.0]))


def test_invariant_function_transform_normalized(neveu_solver):
    """c_θ(1) = 1, so ξ_θ(1) = 1"""
    f = InvariantFunction(neveu_solver, 1.0)
    assert f.xi(1.0) == pytest.approx(1.0)
    assert c_theta(neveu_solver, 2.0, 1.0) == pytest.approx(1.0)


def test_neveu_f_theta_increasing(neveu_solver):
    """f_θ is a mass function: positive and non-decreasing"""
    values = [f_theta(neveu_solver, 1.0, x) for x in (0.5, 2.0, 8.0)]
    assert values[0] > 0
    assert values[0] <= values[1] <= values[2]


def test_theta_zero_is_degenerate(feller_solver, caplog):
    with caplog.at_level(logging.WARNING, logger="csbp.laplace"):
        assert f_theta(feller_solver, 0.0, 2.0) == 1.0
    assert "degenerate" in caplog.text


def test_slowly_varying_R_neveu(neveu_solver):
    """R(q) = ln 2/ln(1+q)"""
    assert slowly_varying_R(neveu_solver, 5.0) == pytest.approx(math.log(2.0) / math.log(6.0), rel=1e-12)


def test_hitting_time_transform_feller(feller_solver):
    """E_1 e^{-T̂_3} = f_1(1)/f_1(3) = 1/2, and the transform is multiplicative"""
    assert hitting_time_lt(feller_solver, 1.0, 1.0, 3.0) == pytest.approx(0.5)
    product = hitting_time_lt(feller_solver, 1.0, 1.0, 3.0) * hitting_time_lt(feller_solver, 1.0, 3.0, 7.0)
    assert product == pytest.approx(hitting_time_lt(feller_solver, 1.0, 1.0, 7.0))
    with pytest.raises(ValueError):
        hitting_time_lt(feller_solver, 1.0, 3.0, 1.0)


# ============= LÉVY TAILS =============

def test_feller_tails(feller_solver):
    """ν̄_∞(x) = e^{-x}; ν̄_1(x) = 2e^{-x}"""
    assert levy_tail(feller_solver, INF, 0.7) == pytest.approx(math.exp(-0.7))
    assert levy_tail(feller_solver, 1.0, 0.7) == pytest.approx(2.0 * math.exp(-0.7))


def test_feller_tail_by_inversion(feller_solver):
    """Inverting κ_λ(q)/q reproduces the closed-form tail"""
    value = invert_to_function(kappa_transform(feller_solver, 1.0), 0.5, InversionKind.TAIL)
    assert value == pytest.approx(2.0 * math.exp(-0.5), abs=1e-7)


def test_neveu_tail_is_exponential_integral(neveu_solver):
    xs = np.array([1e-3, 0.1, 1.0, 5.0])
    assert levy_tail_array(neveu_solver, 1.0, xs) == pytest.approx(special.exp1(xs) / math.log(2.0), rel=1e-12)
    with pytest.raises(GreyConditionError):
        levy_tail(neveu_solver, INF, 1.0)


def test_neveu_tail_integral(neveu_solver):
    """∫_0^ε ν̄_1 against quadrature of E1"""
    eps = 0.01
    expected, _ = integrate.quad(lambda u: special.exp1(u) / math.log(2.0), 0.0, eps)
    assert levy_tail_integral(neveu_solver, 1.0, eps) == pytest.approx(expected, rel=1e-8)


def test_tail_needs_positive_point(feller_solver):
    with pytest.raises(ValueError):
        levy_tail(feller_solver, INF, 0.0)


# ============= DENSITIES =============

@pytest.mark.parametrize("u", [0.1, 0.5, 1.0, 2.0, 5.0])
def test_series_density_matches_bessel(feller_solver, u):
    assert density_g_grey(feller_solver, 1.0, u) == pytest.approx(bessel_density(u), abs=1e-10)


def test_series_density_integrates_to_one(feller_solver):
    grid = np.linspace(0.0, 60.0, 6001)
    values = [density_g_grey(feller_solver, 1.0, u) for u in grid]
    assert integrate.trapezoid(values, grid) == pytest.approx(1.0, abs=2e-3)


@pytest.mark.parametrize("u", [0.5, 2.0])
def test_convolution_density_matches_series(feller_solver, u):
    conv = density_g_grey(feller_solver, 1.0, u, method="convolution")
    assert conv == pytest.approx(density_g_grey(feller_solver, 1.0, u, method="series"), abs=1e-4)


def test_series_density_needs_grey(neveu_solver):
    with pytest.raises(GreyConditionError):
        density_g_grey(neveu_solver, 1.0, 1.0)


def test_monte_carlo_density(feller_solver, stream):
    """E[ν̄_∞(x - W(u)); W(u) < x] within 4 standard errors of the Bessel form"""
    est, se = density_g(feller_solver, INF, 1.0, 1.0, 20000, stream.generator())
    assert abs(est - bessel_density(1.0)) <= 4 * se


if __name__ == "__main__":
    pytest.main([__file__, "-v", "--tb=short"])
