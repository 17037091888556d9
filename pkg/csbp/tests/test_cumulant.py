"""
Test suite for the cumulant engine - closed forms, ODE path and limit exponents
Run with: pytest csbp/tests/test_cumulant.py -v
"""

import math

import pytest

from csbp.cumulant import (
    c_lambda,
    c_ratio,
    extinction_probability,
    inv_psi_integral,
    kappa_inf,
    kappa_lambda,
    kappa_llogl,
    levy_total_mass,
    qsd_laplace,
    v,
    v_array,
    v_by_ode,
    v_inf,
    v_second_zero,
)
from csbp.errors import GreyConditionError
from csbp.models import INF


# ============= CLOSED FORMS =============

@pytest.mark.parametrize("t", [0.5, 2.0, 10.0])
@pytest.mark.parametrize("lam", [0.1, 1.0, 10.0])
def test_feller_closed_form_matches_ode(feller_solver, t, lam):
    """Partial-fraction form against the ODE solver, relative 1e-8"""
    assert v_by_ode(feller_solver, t, lam) == pytest.approx(v(feller_solver, t, lam), rel=1e-8)


@pytest.mark.parametrize("t", [0.5, 2.0, 10.0])
@pytest.mark.parametrize("lam", [0.1, 1.0, 10.0])
def test_neveu_closed_form(neveu_solver, t, lam):
    """v_t(λ) = (1+λ)^{e^{-t}} - 1, also reached by the ODE"""
    exact = (1.0 + lam) ** math.exp(-t) - 1.0
    assert v(neveu_solver, t, lam) == pytest.approx(exact, rel=1e-12)
    assert v_by_ode(neveu_solver, t, lam) == pytest.approx(exact, rel=1e-8)


def test_neveu_example_value(neveu_solver):
    """v_{ln 2}(3) = √4 - 1 = 1"""
    assert v(neveu_solver, math.log(2.0), 3.0) == pytest.approx(1.0, rel=1e-14)


def test_time_zero_is_identity(compound_solver):
    assert v(compound_solver, 0.0, 2.5) == 2.5


def test_v_array_matches_scalar(feller_solver):
    lams = [0.1, 1.0, 7.0]
    out = v_array(feller_solver, 1.3, lams)
    assert out == pytest.approx([v(feller_solver, 1.3, lam) for lam in lams], rel=1e-14)


def test_bad_arguments_rejected(feller_solver):
    with pytest.raises(ValueError):
        v(feller_solver, -1.0, 1.0)
    with pytest.raises(ValueError):
        v(feller_solver, 1.0, 0.0)


# ============= GENERIC MECHANISMS =============

def test_flow_identity_compound(compound_solver):
    """v_{t+u}(λ) = v_t(v_u(λ)) through quadrature and ODE"""
    for t, u, lam in ((0.1, 0.5, 1.0), (1.0, 2.0, 10.0), (0.5, 0.5, 0.1)):
        lhs = v(compound_solver, t + u, lam)
        rhs = v(compound_solver, t, v(compound_solver, u, lam))
        assert abs(lhs - rhs) <= 1e-8 * lam


def test_integral_equation_holds(tempered_solver):
    """∫_{v_t(λ)}^{λ} du/Ψ = t"""
    vt = v(tempered_solver, 1.5, 4.0)
    assert inv_psi_integral(tempered_solver, vt, 4.0) == pytest.approx(1.5, rel=1e-8)


def test_cumulant_decreases_in_time(compound_solver):
    values = [v(compound_solver, t, 2.0) for t in (0.0, 0.5, 1.0, 2.0, 4.0)]
    assert all(a > b for a, b in zip(values, values[1:]))


def test_integral_is_signed(feller_solver):
    a, b = 0.5, 3.0
    assert inv_psi_integral(feller_solver, b, a) == pytest.approx(-inv_psi_integral(feller_solver, a, b))


# ============= EXTINCTION AND MOMENTS =============

def test_feller_v_inf(feller_solver):
    """v_{ln 2}(∞) = γ/(A(e^{γt} - 1)) = 1"""
    assert v_inf(feller_solver, math.log(2.0)) == pytest.approx(1.0, rel=1e-14)
    assert v(feller_solver, math.log(2.0), INF) == pytest.approx(1.0, rel=1e-14)


def test_v_inf_without_grey_is_infinite(neveu_solver):
    assert v_inf(neveu_solver, 1.0) == INF
    assert extinction_probability(neveu_solver, 1.0, 1.0) == 0.0


def test_extinction_probability(feller_solver):
    assert extinction_probability(feller_solver, math.log(2.0), 1.0) == pytest.approx(math.exp(-1.0))


def test_second_derivative_at_zero(feller_solver):
    """∂²v/∂λ² at 0 = -2e^{-t}(1 - e^{-t}) for A = γ = 1"""
    assert v_second_zero(feller_solver, math.log(2.0)) == pytest.approx(-0.5, rel=1e-14)


# ============= LIMIT EXPONENTS =============

@pytest.mark.parametrize("q", [0.01, 1.0, 100.0])
def test_feller_qsd_transform(feller_solver, q):
    """1 - κ_∞(q) = 1/(1+q): ν_∞ = Exp(1)"""
    assert qsd_laplace(feller_solver, q) == pytest.approx(1.0 / (1.0 + q), abs=1e-8)
    assert kappa_inf(feller_solver, q) == pytest.approx(q / (1.0 + q), rel=1e-10)


def test_kappa_inf_needs_grey(neveu_solver):
    with pytest.raises(GreyConditionError):
        kappa_inf(neveu_solver, 1.0)


def test_kappa_lambda_is_signed(feller_solver):
    """κ_1(3) = 3·2/(1·4) = 1.5 > 1 since θ > λ"""
    assert kappa_lambda(feller_solver, 1.0, 3.0) == pytest.approx(1.5, rel=1e-12)
    assert kappa_lambda(feller_solver, 1.0, 1.0) == pytest.approx(1.0)


def test_kappa_lambda_at_infinity_is_kappa_inf(feller_solver):
    assert kappa_lambda(feller_solver, INF, 2.0) == pytest.approx(kappa_inf(feller_solver, 2.0))


def test_neveu_llogl_limits(neveu_solver):
    """κ(θ) = ln(1+θ), so κ(e-1) = 1 and c_λ = ln(1+λ)"""
    assert kappa_llogl(neveu_solver, math.e - 1.0) == pytest.approx(1.0, abs=1e-12)
    assert c_lambda(neveu_solver, 3.0) == pytest.approx(math.log(4.0), rel=1e-12)
    assert kappa_llogl(neveu_solver, 0.0) == 0.0


def test_llogl_growth_at_large_time(neveu_solver):
    """e^{γt}v_t(λ) → c_λ"""
    assert math.exp(20.0) * v(neveu_solver, 20.0, 1.0) == pytest.approx(math.log(2.0), abs=1e-6)


def test_c_ratio_neveu(neveu_solver):
    """c_{3,1} = ln 4/ln 2 = 2, the limit of v_t(3)/v_t(1)"""
    assert c_ratio(neveu_solver, 3.0, 1.0) == pytest.approx(2.0, rel=1e-12)
    ratio = v(neveu_solver, 20.0, 3.0) / v(neveu_solver, 20.0, 1.0)
    assert ratio == pytest.approx(2.0, abs=1e-6)


def test_levy_total_mass(feller_solver, neveu_solver):
    """Feller: 1 + γ/(Aλ); Neveu: infinite; λ = ∞ under Grey: 1"""
    assert levy_total_mass(feller_solver, 1.0) == pytest.approx(2.0, rel=1e-12)
    assert levy_total_mass(feller_solver, INF) == 1.0
    assert levy_total_mass(neveu_solver, 1.0) == INF
    with pytest.raises(GreyConditionError):
        levy_total_mass(neveu_solver, INF)


if __name__ == "__main__":
    pytest.main([__file__, "-v", "--tb=short"])
