"""
Cumulant engine: v_t(λ), ∫du/Ψ and the limit Laplace exponents

Single source of truth for everything derived from the cumulant equation
∫_{v_t(λ)}^λ du/Ψ(u) = t. Feller-type and Neveu mechanisms use closed forms;
every other mechanism goes through quadrature and the ODE solver.
"""
import logging
import math
from functools import lru_cache

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import integrate, optimize

from .config import config
from .errors import GreyConditionError, LLogLConditionError
from .mechanism import grey_holds, llogl_holds, psi, psi_excess, psi_second_zero
from .models import INF, BranchingMechanism, is_infinite

logger = logging.getLogger(__name__)

# Upper log-limit of tail quadratures; e^{700} is the largest safe float argument
_LOG_UPPER = 700.0


class CumulantSolver(BaseModel):
    """Mechanism plus the tolerances used to solve its cumulant equation"""
    model_config = ConfigDict(frozen=True)

    mechanism: BranchingMechanism
    ode_tol: float = Field(default=config.ODE_TOL, gt=0)
    quad_tol: float = Field(default=config.QUAD_TOL, gt=0)

    @property
    def gamma(self) -> float:
        return self.mechanism.gamma

    @property
    def grey(self) -> bool:
        return grey_holds(self.mechanism)

    @property
    def llogl(self) -> bool:
        return llogl_holds(self.mechanism)


def solver_for(m: BranchingMechanism) -> CumulantSolver:
    """Solver with default tolerances"""
    return CumulantSolver(mechanism=m)


# ============= ∫du/Ψ =============

def _quad(f, lo: float, hi: float, tol: float) -> float:
    value, _ = integrate.quad(f, lo, hi, epsabs=tol * 1e-3, epsrel=tol, limit=400)
    return value


def _excess_ratio(s: CumulantSolver, w: float) -> float:
    """(Ψ(u) - γu)/(γΨ(u)) at u = e^w"""
    u = math.exp(w)
    p = psi(s.mechanism, u)
    return psi_excess(s.mechanism, u) / (s.gamma * p) if p > 0 else 0.0


def _integral_numeric(s: CumulantSolver, a: float, b: float) -> float:
    """∫_a^b du/Ψ for 0 < a < b < ∞, log-substituted and split at u = 1"""
    total = 0.0
    lo, hi = math.log(a), math.log(b)
    if lo < 0.0:
        top = min(hi, 0.0)
        # 1/Ψ = 1/(γu) - (Ψ - γu)/(γuΨ); the log part is exact
        total += (top - lo) / s.gamma - _quad(lambda w: _excess_ratio(s, w), lo, top, s.quad_tol)
    if hi > 0.0:
        bottom = max(lo, 0.0)
        total += _quad(lambda w: math.exp(w) / psi(s.mechanism, math.exp(w)), bottom, hi, s.quad_tol)
    return total


def _tail_numeric(s: CumulantSolver, a: float) -> float:
    """∫_a^∞ du/Ψ under Grey's condition"""
    start = max(a, 1.0)
    head = _integral_numeric(s, a, start) if a < start else 0.0
    tail = _quad(lambda w: math.exp(w) / psi(s.mechanism, math.exp(w)), math.log(start), _LOG_UPPER, s.quad_tol)
    return head + tail


def inv_psi_integral(s: CumulantSolver, a: float, b: float) -> float:
    """
    Signed ∫_a^b du/Ψ(u).

    Args:
        s: Solver
        a: Lower limit, > 0
        b: Upper limit, > 0 or INF

    Returns:
        The integral; INF for b = INF without Grey's condition. b < a flips the sign.
    """
    if not a > 0 or not b > 0:
        raise ValueError(f"integration limits must be positive, got a={a}, b={b}")
    if is_infinite(a):
        raise ValueError("lower limit must be finite")
    if a == b:
        return 0.0
    if not is_infinite(b) and b < a:
        return -inv_psi_integral(s, b, a)

    m = s.mechanism
    if is_infinite(b):
        if not grey_holds(m):
            return INF
        if m.is_feller_type:
            return math.log1p(m.gamma / (m.half_sigma2 * a)) / m.gamma
        return _tail_numeric(s, a)

    if m.is_feller_type:
        A = m.half_sigma2
        return (math.log(b / a) - math.log1p(A * (b - a) / (A * a + m.gamma))) / m.gamma
    if m.is_neveu:
        return (math.log(math.log1p(b)) - math.log(math.log1p(a))) / m.gamma
    return _integral_numeric(s, a, b)


def potential(s: CumulantSolver, q: float) -> float:
    """Signed ∫_1^q du/Ψ"""
    return inv_psi_integral(s, 1.0, q)


def _log_correction(s: CumulantSolver, lam: float) -> float:
    """J(λ) = ∫_0^λ (1/(γu) - 1/Ψ(u)) du, finite iff L log L"""
    m = s.mechanism
    if m.is_feller_type:
        return math.log1p(m.half_sigma2 * lam / m.gamma) / m.gamma
    if m.is_neveu:
        return (math.log(lam) - math.log(math.log1p(lam))) / m.gamma
    lo = math.log(lam) - config.LLOGL_LOWER_DECADES
    hi = math.log(lam)
    if hi <= 0.0:
        return _quad(lambda w: _excess_ratio(s, w), lo, hi, s.quad_tol)
    below = _quad(lambda w: _excess_ratio(s, w), lo, 0.0, s.quad_tol)
    # above 1: ∫ (1/(γu) - 1/Ψ) du = hi/γ - ∫_1^λ du/Ψ
    return below + hi / s.gamma - _integral_numeric(s, 1.0, lam)


# ============= CUMULANT v_t(λ) =============

@lru_cache(maxsize=8192)
def _v_numeric(s: CumulantSolver, t: float, lam: float) -> float:
    """ODE in log v, then Newton on the integral equation"""
    m = s.mechanism

    def rhs(_, w):
        u = math.exp(w[0])
        return [-psi(m, u) / u]

    sol = integrate.solve_ivp(
        rhs, (0.0, t), [math.log(lam)], method="DOP853", rtol=s.ode_tol, atol=s.ode_tol
    )
    if not sol.success:
        logger.warning("cumulant ODE failed at t=%g, λ=%g: %s", t, lam, sol.message)
    w0 = float(sol.y[0, -1])

    def residual(w):
        return inv_psi_integral(s, math.exp(w), lam) - t

    def slope(w):
        u = math.exp(w)
        return -u / psi(m, u)

    try:
        w = optimize.newton(residual, w0, fprime=slope, tol=s.quad_tol, maxiter=config.NEWTON_MAXITER)
    except RuntimeError as e:
        logger.warning("cumulant polish did not converge at t=%g, λ=%g (%s); keeping ODE value", t, lam, e)
        w = w0
    return math.exp(w)


def v(s: CumulantSolver, t: float, lam: float) -> float:
    """
    Cumulant v_t(λ), the solution of ∫_{v}^{λ} du/Ψ(u) = t.

    Args:
        s: Solver
        t: Time, >= 0
        lam: λ > 0, or INF for v_t(∞)

    Returns:
        v_t(λ)
    """
    if t < 0:
        raise ValueError(f"time must be >= 0, got {t}")
    if not lam > 0:
        raise ValueError(f"lambda must be > 0, got {lam}")
    if is_infinite(lam):
        return v_inf(s, t) if t > 0 else INF
    if t == 0:
        return float(lam)

    m = s.mechanism
    g = m.gamma
    if m.is_feller_type:
        A = m.half_sigma2
        return g * lam * math.exp(-g * t) / (g + A * lam * -math.expm1(-g * t))
    if m.is_neveu:
        return math.expm1(math.exp(-g * t) * math.log1p(lam))
    return _v_numeric(s, float(t), float(lam))


def v_by_ode(s: CumulantSolver, t: float, lam: float) -> float:
    """v_t(λ) through the ODE even where a closed form exists"""
    if t < 0 or not 0 < lam < INF:
        raise ValueError(f"need t >= 0 and finite λ > 0, got t={t}, λ={lam}")
    return float(lam) if t == 0 else _v_numeric(s, float(t), float(lam))


def v_array(s: CumulantSolver, t: float, lams: np.ndarray) -> np.ndarray:
    """v_t over an array of λ"""
    lams = np.asarray(lams, dtype=float)
    m = s.mechanism
    g = m.gamma
    if t == 0:
        return lams.copy()
    if m.is_feller_type:
        A = m.half_sigma2
        return g * lams * math.exp(-g * t) / (g + A * lams * -math.expm1(-g * t))
    if m.is_neveu:
        return np.expm1(math.exp(-g * t) * np.log1p(lams))
    return np.array([v(s, t, lam) for lam in lams.ravel()]).reshape(lams.shape)


@lru_cache(maxsize=1024)
def _v_inf_numeric(s: CumulantSolver, t: float) -> float:
    def residual(w):
        return inv_psi_integral(s, math.exp(w), INF) - t

    lo, hi = -5.0, 5.0
    # residual decreases in w
    while residual(lo) < 0:
        lo -= 10.0
    while residual(hi) > 0:
        hi += 10.0
    w = optimize.brentq(residual, lo, hi, xtol=s.quad_tol, rtol=4 * np.finfo(float).eps)
    return math.exp(w)


def v_inf(s: CumulantSolver, t: float) -> float:
    """v_t(∞): finite iff Grey's condition holds, INF otherwise"""
    if not t > 0:
        raise ValueError(f"v_t(∞) needs t > 0, got {t}")
    m = s.mechanism
    if not grey_holds(m):
        return INF
    if m.is_feller_type:
        return m.gamma / (m.half_sigma2 * math.expm1(m.gamma * t))
    return _v_inf_numeric(s, float(t))


def v_prime_zero(s: CumulantSolver, t: float) -> float:
    """∂_λ v_t(0) = e^{-γt}, so E X_t(x) = x·e^{-γt}"""
    return math.exp(-s.gamma * t)


def v_second_zero(s: CumulantSolver, t: float) -> float:
    """∂²_λ v_t(0) = -Ψ''(0)e^{-γt}(1 - e^{-γt})/γ"""
    g = s.gamma
    return -psi_second_zero(s.mechanism) * math.exp(-g * t) * -math.expm1(-g * t) / g


def extinction_probability(s: CumulantSolver, t: float, x: float) -> float:
    """P(X_t(x) = 0) = e^{-x·v_t(∞)}"""
    vi = v_inf(s, t)
    return 0.0 if is_infinite(vi) else math.exp(-x * vi)


# ============= LIMIT EXPONENTS =============

def kappa_lambda(s: CumulantSolver, lam: float, theta: float) -> float:
    """
    κ_λ(θ) = exp(-γ∫_θ^λ du/Ψ), signed so κ_λ(θ) > 1 for θ > λ.

    λ = INF gives κ_∞.
    """
    if not theta > 0:
        raise ValueError(f"theta must be > 0, got {theta}")
    if is_infinite(lam):
        return kappa_inf(s, theta)
    return math.exp(-s.gamma * inv_psi_integral(s, theta, lam))


def kappa_inf(s: CumulantSolver, theta: float) -> float:
    """κ_∞(θ) = exp(-γ∫_θ^∞ du/Ψ), needs Grey's condition"""
    if not s.grey:
        raise GreyConditionError(f"κ_∞ needs Grey's condition; {s.mechanism.label} fails it")
    if not theta > 0:
        raise ValueError(f"theta must be > 0, got {theta}")
    return math.exp(-s.gamma * inv_psi_integral(s, theta, INF))


def qsd_laplace(s: CumulantSolver, q: float) -> float:
    """Laplace transform of the quasi-stationary law, 1 - κ_∞(q)"""
    return 1.0 - kappa_inf(s, q)


def kappa_llogl(s: CumulantSolver, theta: float) -> float:
    """κ(θ) = θ·exp(-γ∫_0^θ (1/(γu) - 1/Ψ) du), the limit exponent of e^{γt}v_t"""
    if theta < 0:
        raise ValueError(f"theta must be >= 0, got {theta}")
    if not s.llogl:
        raise LLogLConditionError(f"κ needs the L log L condition; {s.mechanism.label} fails it")
    if theta == 0:
        return 0.0
    return theta * math.exp(-s.gamma * _log_correction(s, theta))


def c_lambda(s: CumulantSolver, lam: float) -> float:
    """c_λ = lim e^{γt}v_t(λ)"""
    if not lam > 0:
        raise ValueError(f"lambda must be > 0, got {lam}")
    return kappa_llogl(s, lam)


def c_ratio(s: CumulantSolver, lam: float, lam2: float) -> float:
    """c_{λ,λ'} = exp(γ∫_{λ'}^{λ} du/Ψ) = lim v_t(λ)/v_t(λ')"""
    if not lam > 0 or not lam2 > 0:
        raise ValueError(f"c_ratio needs positive arguments, got {lam}, {lam2}")
    return math.exp(s.gamma * inv_psi_integral(s, lam2, lam))


def levy_total_mass(s: CumulantSolver, lam: float) -> float:
    """ν_λ((0,∞)) = exp(γ∫_λ^∞ du/Ψ); INF without Grey's condition"""
    if is_infinite(lam):
        if not s.grey:
            raise GreyConditionError("ν_∞ needs Grey's condition")
        return 1.0
    tail = inv_psi_integral(s, lam, INF)
    return INF if is_infinite(tail) else math.exp(s.gamma * tail)
