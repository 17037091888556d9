"""
Branching mechanisms: Ψ and its analytic descriptors.

Pure functions over immutable BranchingMechanism values. The Lévy integral of Ψ
is evaluated in closed form per family, never by quadrature.
"""
import logging
import math
from typing import Tuple, Union

import mpmath
import numpy as np
from scipy import integrate, special

from .config import config
from .models import (
    INF,
    BranchingMechanism,
    FiniteCompound,
    LevyMeasureSpec,
    MechanismConfig,
    NoLevy,
    TemperedStable,
)

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

# Below this |z| the excess functions switch to their Taylor series
_SERIES_CUTOFF = 1e-3


def _binomial_excess(a: float, z: np.ndarray) -> np.ndarray:
    """(1+z)^a - 1 - a·z without cancellation near z = 0"""
    small = np.abs(z) < _SERIES_CUTOFF
    zs = np.where(small, z, 0.0)
    series = (a * (a - 1.0) / 2.0) * zs ** 2 * (
        1.0 + (a - 2.0) / 3.0 * zs * (1.0 + (a - 3.0) / 4.0 * zs)
    )
    zl = np.where(small, 1.0, z)
    direct = np.expm1(a * np.log1p(zl)) - a * zl
    return np.where(small, series, direct)


def _xlogx_excess(z: np.ndarray) -> np.ndarray:
    """(1+z)·log(1+z) - z without cancellation near z = 0"""
    small = np.abs(z) < _SERIES_CUTOFF
    zs = np.where(small, z, 0.0)
    series = zs ** 2 / 2.0 - zs ** 3 / 6.0 + zs ** 4 / 12.0
    zl = np.where(small, 1.0, z)
    direct = (1.0 + zl) * np.log1p(zl) - zl
    return np.where(small, series, direct)


def levy_integral(levy: LevyMeasureSpec, u: ArrayLike) -> np.ndarray:
    """∫(e^{-ux} - 1 + ux)π(dx) in closed form"""
    u = np.asarray(u, dtype=float)
    if isinstance(levy, NoLevy):
        return np.zeros_like(u)
    if isinstance(levy, TemperedStable):
        a, c, t0 = levy.alpha, levy.c, levy.tempering
        if t0 == 0.0:
            return c * special.gamma(-a) * u ** a
        z = u / t0
        if a == 1.0:
            return c * t0 * _xlogx_excess(z)
        return c * special.gamma(-a) * t0 ** a * _binomial_excess(a, z)
    if isinstance(levy, FiniteCompound):
        law = levy.jump_law
        # L(u) - 1 + u·mean with L(u) = (1 + u/rate)^{-shape}
        return levy.rate * _binomial_excess(-law.shape, u / law.rate)
    raise TypeError(f"unknown Lévy variant {levy!r}")


def _check_nonnegative(u: np.ndarray) -> None:
    if np.any(u < 0) or np.any(np.isnan(u)):
        raise ValueError("Ψ is evaluated on u >= 0 only")


def psi_excess(m: BranchingMechanism, u: ArrayLike) -> ArrayLike:
    """Ψ(u) - γu, accurate for small u"""
    arr = np.asarray(u, dtype=float)
    _check_nonnegative(arr)
    out = m.half_sigma2 * arr ** 2 + levy_integral(m.levy, arr)
    return float(out) if out.ndim == 0 else out


def psi(m: BranchingMechanism, u: ArrayLike) -> ArrayLike:
    """
    Branching mechanism Ψ(u).

    Args:
        m: Mechanism
        u: Non-negative scalar or array

    Returns:
        Ψ(u), same shape as u
    """
    arr = np.asarray(u, dtype=float)
    _check_nonnegative(arr)
    if m.is_neveu:
        out = m.gamma * (arr + 1.0) * np.log1p(arr)
    else:
        out = m.half_sigma2 * arr ** 2 + m.gamma * arr + levy_integral(m.levy, arr)
    return float(out) if out.ndim == 0 else out


def psi_mp(m: BranchingMechanism, u):
    """Ψ at mpmath (possibly complex) arguments, for contour inversion"""
    if m.is_neveu:
        return m.gamma * (u + 1) * mpmath.log(u + 1)
    out = mpmath.mpf(m.half_sigma2) * u ** 2 + m.gamma * u
    levy = m.levy
    if isinstance(levy, TemperedStable):
        a, c, t0 = mpmath.mpf(levy.alpha), levy.c, mpmath.mpf(levy.tempering)
        if t0 == 0:
            out += c * mpmath.gamma(-a) * mpmath.power(u, a)
        elif a == 1:
            out += c * ((t0 + u) * mpmath.log(1 + u / t0) - u)
        else:
            out += c * mpmath.gamma(-a) * (
                mpmath.power(t0 + u, a) - mpmath.power(t0, a) - a * mpmath.power(t0, a - 1) * u
            )
    elif isinstance(levy, FiniteCompound):
        k, r = mpmath.mpf(levy.jump_law.shape), mpmath.mpf(levy.jump_law.rate)
        out += levy.rate * (mpmath.power(1 + u / r, -k) - 1 + k * u / r)
    return out


def _log_moment_tail(s: float, t: float) -> float:
    """∫_1^∞ x^{s-1} log x e^{-tx} dx = t^{1-s}·G^{3,0}_{2,3}(t | 0, 0; s-1, -1, -1), t > 0"""
    g = mpmath.meijerg([[], [0, 0]], [[s - 1, -1, -1], []], t)
    return float(mpmath.power(t, 1 - s) * g)


def levy_moments(levy: LevyMeasureSpec) -> Tuple[float, float]:
    """
    Moments of the Lévy measure.

    Returns:
        (m1, llogl) with m1 = ∫x π(dx) and llogl = ∫_1^∞ x log x π(dx), INF when divergent
    """
    if isinstance(levy, NoLevy):
        return 0.0, 0.0
    if isinstance(levy, TemperedStable):
        a, c, t0 = levy.alpha, levy.c, levy.tempering
        m1 = c * special.gamma(1.0 - a) * t0 ** (a - 1.0) if a < 1.0 else INF
        if t0 == 0.0:
            llogl = c / (a - 1.0) ** 2
        else:
            llogl = c * _log_moment_tail(1.0 - a, t0)
        return m1, llogl
    if isinstance(levy, FiniteCompound):
        law = levy.jump_law
        k, r = law.shape, law.rate
        # Gamma(k, r) jumps: r^k/Γ(k)·∫_1^∞ x^k log x e^{-rx} dx
        llogl = math.exp(k * math.log(r) - special.gammaln(k)) * _log_moment_tail(k + 1.0, r)
        return levy.rate * law.mean, levy.rate * llogl
    raise TypeError(f"unknown Lévy variant {levy!r}")


def psi_prime_zero(m: BranchingMechanism) -> float:
    """Ψ'(0+) = γ"""
    return m.gamma


def psi_prime_inf(m: BranchingMechanism) -> float:
    """Ψ'(∞) = lim Ψ(u)/u"""
    if m.sigma2 > 0:
        return INF
    m1, _ = levy_moments(m.levy)
    return m.gamma + m1


def psi_second_zero(m: BranchingMechanism) -> float:
    """Ψ''(0+) = σ² + ∫x²π(dx)"""
    levy = m.levy
    if isinstance(levy, NoLevy):
        second = 0.0
    elif isinstance(levy, TemperedStable):
        if levy.tempering == 0.0:
            return INF
        second = levy.c * special.gamma(2.0 - levy.alpha) * levy.tempering ** (levy.alpha - 2.0)
    else:
        second = levy.rate * levy.jump_law.second_moment
    return m.sigma2 + second


def grey_holds(m: BranchingMechanism) -> bool:
    """Grey's condition ∫^∞ du/Ψ < ∞"""
    if m.sigma2 > 0:
        return True
    return isinstance(m.levy, TemperedStable) and m.levy.alpha > 1.0


def llogl_holds(m: BranchingMechanism) -> bool:
    """∫_1^∞ x log x π(dx) < ∞"""
    _, llogl = levy_moments(m.levy)
    return math.isfinite(llogl)


def grey_quadrature_check(m: BranchingMechanism, upper: float = None) -> bool:
    """
    Quadrature cross-check of Grey's condition.

    Compares ∫_{√U}^{U} du/Ψ with ∫_1^{√U} du/Ψ: the tail piece is negligible when
    the integral converges and of the same order when it diverges like a log.
    """
    upper = upper or config.GREY_CHECK_UPPER
    mid = math.sqrt(upper)

    def integrand(w: float) -> float:
        u = math.exp(w)
        return u / psi(m, u)

    body, _ = integrate.quad(integrand, 0.0, math.log(mid), limit=200)
    tail, _ = integrate.quad(integrand, math.log(mid), math.log(upper), limit=200)
    ratio = tail / body
    logger.debug("grey cross-check for %s: tail/body = %.3e", m.label, ratio)
    return ratio < config.GREY_CHECK_RATIO


def builtin_mechanism(name: str) -> BranchingMechanism:
    """Look up a built-in mechanism by its CLI name"""
    if name not in config.BUILTIN_MECHANISMS:
        raise KeyError(f"unknown mechanism {name!r}; built-ins are {', '.join(config.builtin_names)}")
    return MechanismConfig(builtin=name).build()
