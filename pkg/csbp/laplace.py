"""
Laplace inversion toolkit

Realizes the objects that are only known through their transforms: the θ-invariant
mass functions f_θ, the Lévy tails ν̄_λ, the quasi-stationary law and the densities
of the inverse subordinator. Closed forms are used wherever they exist.
"""
import logging
import math
import threading
from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable, Dict, Optional, Tuple

import mpmath
import numpy as np
from scipy import integrate, interpolate, signal, special

from .config import config
from .cumulant import CumulantSolver, inv_psi_integral, kappa_lambda, potential, qsd_laplace
from .errors import GreyConditionError, InversionError
from .models import INF, is_infinite

logger = logging.getLogger(__name__)

# mpmath keeps its precision in a process-wide context
_MP_LOCK = threading.RLock()


class InversionKind(str, Enum):
    """What the inverted function represents; decides how the result is clipped"""
    DISTRIBUTION = "distribution"  # probability distribution function, in [0, 1]
    MASS_FUNCTION = "mass_function"
    TAIL = "tail"
    DENSITY = "density"


@dataclass(frozen=True)
class TransformFn:
    """
    A Laplace transform q ↦ T(q) on q > 0.

    eval receives mpmath numbers. exact transforms are evaluated at working
    precision; complex_ok transforms accept complex arguments (Talbot contour).
    """
    eval: Callable[[Any], Any]
    exact: bool = False
    complex_ok: bool = False
    completely_monotone: bool = False
    label: str = ""

    def __call__(self, q):
        return self.eval(q)

    @classmethod
    def from_float(cls, fn: Callable[[float], float], label: str = "", completely_monotone: bool = False):
        """Wrap a double-precision transform"""
        return cls(
            eval=lambda p: mpmath.mpf(fn(float(p))),
            exact=False,
            complex_ok=False,
            completely_monotone=completely_monotone,
            label=label,
        )


# ============= INVERSION =============

def _stehfest(T: TransformFn, x: float, order: int) -> float:
    with _MP_LOCK:
        return float(mpmath.invertlaplace(T.eval, x, method="stehfest", degree=order))


def _talbot(T: TransformFn, x: float) -> float:
    with _MP_LOCK:
        with mpmath.workdps(30):
            return float(mpmath.invertlaplace(T.eval, x, method="talbot"))


def invert_to_function(
    T: TransformFn,
    x: float,
    kind: InversionKind = InversionKind.MASS_FUNCTION,
    order: Optional[int] = None,
) -> float:
    """
    Invert a Laplace transform at one point.

    Gaver–Stehfest at orders N and N-2; when they disagree the Talbot contour is
    used if T can be evaluated off the real axis, else a loose agreement is
    accepted with a warning.

    Args:
        T: Transform of the function to recover
        x: Evaluation point, > 0
        kind: Interpretation of the result. It does not change the inversion itself,
            only the clipping: DISTRIBUTION results are clipped to [0, 1], all
            other kinds to [0, ∞)
        order: Even Stehfest order in [8, 16]; defaults by T's precision

    Returns:
        The inverted function at x
    """
    if not x > 0:
        raise ValueError(f"inversion point must be > 0, got {x}")
    n = order or config.stehfest_order(T.exact)
    if n % 2 or not config.STEHFEST_MIN_ORDER <= n <= config.STEHFEST_MAX_ORDER:
        raise ValueError(
            f"Stehfest order must be even in [{config.STEHFEST_MIN_ORDER}, {config.STEHFEST_MAX_ORDER}], got {n}"
        )
    kind = InversionKind(kind)

    value = _stehfest(T, x, n)
    lower = _stehfest(T, x, n - 2)
    gap = abs(value - lower)
    scale = max(1.0, abs(value))
    tol = config.inversion_tolerance(T.exact)

    if gap <= tol * scale:
        logger.debug("stehfest %s at x=%g: N=%d, gap %.2e", T.label, x, n, gap)
    elif T.complex_ok:
        value = _talbot(T, x)
        logger.debug("talbot %s at x=%g (stehfest gap %.2e)", T.label, x, gap)
    elif gap <= config.INVERSION_LOOSE_TOL * scale:
        logger.warning("stehfest orders %d/%d disagree by %.2e on %s at x=%g; accepted", n, n - 2, gap, T.label, x)
    else:
        raise InversionError(
            f"inversion of {T.label or 'transform'} did not converge",
            diagnostics={'x': x, 'order': n, 'value': value, 'lower_order_value': lower, 'gap': gap},
        )

    if not math.isfinite(value):
        raise InversionError("inversion produced a non-finite value", diagnostics={'x': x, 'order': n})
    if kind == InversionKind.DISTRIBUTION:
        return min(max(value, 0.0), 1.0)
    return max(value, 0.0)


# ============= c_θ, R AND f_θ =============

def c_theta(s: CumulantSolver, theta: float, q: float) -> float:
    """c_θ(q) = exp(-θ∫_1^q du/Ψ), so c_θ(1) = 1"""
    if not theta > 0 or not q > 0:
        raise ValueError(f"c_theta needs theta > 0 and q > 0, got {theta}, {q}")
    return math.exp(-theta * potential(s, q))


def slowly_varying_R(s: CumulantSolver, q: float) -> float:
    """R(q) = exp(-∫_1^q du/Ψ); R(1/y) is regularly varying with index 1/γ"""
    return math.exp(-potential(s, q))


def _c_theta_mp(s: CumulantSolver, theta: float, q):
    """c_θ at mpmath arguments; closed-form mechanisms only"""
    m = s.mechanism
    k = mpmath.mpf(theta) / m.gamma
    if m.is_feller_type:
        A, g = mpmath.mpf(m.half_sigma2), mpmath.mpf(m.gamma)
        return mpmath.power((A * q + g) / ((A + g) * q), k)
    if m.is_neveu:
        return mpmath.power(mpmath.log(2) / mpmath.log(1 + q), k)
    raise TypeError("no closed form for this mechanism")


def xi_transform(s: CumulantSolver, theta: float) -> TransformFn:
    """ξ_θ(q) = c_θ(q)/q, the transform of f_θ"""
    m = s.mechanism
    label = f"xi_{theta:g}[{m.label}]"
    if m.is_feller_type or m.is_neveu:
        return TransformFn(
            eval=lambda q: _c_theta_mp(s, theta, q) / q,
            exact=True,
            complex_ok=True,
            completely_monotone=True,
            label=label,
        )
    return TransformFn.from_float(lambda q: c_theta(s, theta, q) / q, label=label, completely_monotone=True)


def f_theta_asymptotic(s: CumulantSolver, theta: float, y: float) -> float:
    """R(1/y)^θ/Γ(1+θ/γ), the large-y form of f_θ(y)"""
    return c_theta(s, theta, 1.0 / y) / math.gamma(1.0 + theta / s.gamma)


def f_theta(s: CumulantSolver, theta: float, x: float) -> float:
    """
    θ-invariant function f_θ(x) = μ_θ([0,x)), normalized by c_θ(1) = 1.

    μ_θ may carry an atom at 0, which f_θ includes.
    """
    if theta < 0:
        raise ValueError(f"theta must be >= 0, got {theta}")
    if not x > 0:
        raise ValueError(f"x must be > 0, got {x}")
    if theta == 0:
        logger.warning("f_0 is degenerate: μ_0 is the unit mass at 0")
        return 1.0
    m = s.mechanism
    if m.is_feller_type:
        A, g = m.half_sigma2, m.gamma
        k = theta / g
        return (A / (A + g)) ** k * float(special.hyp1f1(-k, 1.0, -g * x / A))
    if x > config.ASYMPTOTIC_SWITCH:
        logger.debug("f_%g at x=%g: asymptotic form", theta, x)
        return f_theta_asymptotic(s, theta, x)
    return invert_to_function(xi_transform(s, theta), x, InversionKind.MASS_FUNCTION)


class InvariantFunction:
    """
    Vectorized f_θ for one (mechanism, θ).

    Closed forms are evaluated directly; otherwise f_θ is tabulated once on a
    log grid and interpolated monotonically, with the asymptotic form beyond.
    """

    def __init__(self, s: CumulantSolver, theta: float, x_min: float = 1e-3, x_max: float = None):
        if theta < 0:
            raise ValueError(f"theta must be >= 0, got {theta}")
        self.solver = s
        self.theta = theta
        self.x_min = x_min
        self.x_max = x_max or config.ASYMPTOTIC_SWITCH
        self._interp = None

    @property
    def closed_form(self) -> bool:
        return self.theta == 0 or self.solver.mechanism.is_feller_type

    def _table(self):
        if self._interp is None:
            grid = np.geomspace(self.x_min, self.x_max, config.F_THETA_TABLE_POINTS)
            values = np.array([f_theta(self.solver, self.theta, x) for x in grid])
            values = np.maximum.accumulate(values)
            logger.debug("tabulated f_%g on [%g, %g]", self.theta, self.x_min, self.x_max)
            self._interp = interpolate.PchipInterpolator(np.log(grid), np.log(values))
        return self._interp

    def __call__(self, x):
        arr = np.asarray(x, dtype=float)
        if np.any(arr <= 0):
            raise ValueError("f_θ is evaluated on x > 0")
        if self.theta == 0:
            out = np.ones_like(arr)
        elif self.closed_form:
            m = self.solver.mechanism
            A, g = m.half_sigma2, m.gamma
            k = self.theta / g
            out = (A / (A + g)) ** k * special.hyp1f1(-k, 1.0, -g * arr / A)
        else:
            out = np.empty_like(arr)
            flat, res = arr.ravel(), out.ravel()
            inside = (flat >= self.x_min) & (flat <= self.x_max)
            if inside.any():
                res[inside] = np.exp(self._table()(np.log(flat[inside])))
            for i in np.flatnonzero(~inside):
                res[i] = f_theta(self.solver, self.theta, flat[i]) if flat[i] < self.x_min else \
                    f_theta_asymptotic(self.solver, self.theta, flat[i])
        return float(out) if out.ndim == 0 else out

    def xi(self, q: float) -> float:
        """ξ_θ(q)"""
        return (c_theta(self.solver, self.theta, q) if self.theta > 0 else 1.0) / q


def hitting_time_lt(s: CumulantSolver, theta: float, x: float, y: float) -> float:
    """E_x[e^{-θT̂_y}] = f_θ(x)/f_θ(y) for x <= y"""
    if x > y:
        raise ValueError(f"hitting_time_lt needs x <= y, got x={x}, y={y}")
    if x == y:
        return 1.0
    return f_theta(s, theta, x) / f_theta(s, theta, y)


# ============= LÉVY TAILS =============

def kappa_transform(s: CumulantSolver, lam: float) -> TransformFn:
    """κ_λ(q)/q, the transform of ν̄_λ"""
    m = s.mechanism
    label = f"kappa_{lam:g}[{m.label}]"
    if m.is_feller_type or m.is_neveu:
        g = mpmath.mpf(m.gamma)

        def ev(q):
            if m.is_neveu:
                return mpmath.log(1 + q) / mpmath.log(1 + mpmath.mpf(lam)) / q
            A = mpmath.mpf(m.half_sigma2)
            K = 1 if is_infinite(lam) else (A * lam + g) / (A * lam)
            return K / (q + g / A)

        return TransformFn(eval=ev, exact=True, complex_ok=True, label=label)
    return TransformFn.from_float(lambda q: kappa_lambda(s, lam, q) / q, label=label)


def levy_tail(s: CumulantSolver, lam: float, x: float) -> float:
    """
    ν̄_λ(x) = ν_λ((x, ∞)).

    λ = INF needs Grey's condition; ν_∞ is then the quasi-stationary law.
    """
    if not x > 0:
        raise ValueError(f"x must be > 0, got {x}")
    m = s.mechanism
    if is_infinite(lam) and not s.grey:
        raise GreyConditionError(f"ν_∞ needs Grey's condition; {m.label} fails it")
    g = m.gamma
    if m.is_feller_type:
        A = m.half_sigma2
        mass = 1.0 if is_infinite(lam) else (A * lam + g) / (A * lam)
        return mass * math.exp(-g * x / A)
    if m.is_neveu:
        return float(special.exp1(x)) / math.log1p(lam)
    if is_infinite(lam):
        T = TransformFn.from_float(lambda q: qsd_laplace(s, q) / q, label=f"qsd[{m.label}]")
        return 1.0 - invert_to_function(T, x, InversionKind.DISTRIBUTION)
    return invert_to_function(kappa_transform(s, lam), x, InversionKind.TAIL)


def levy_tail_array(s: CumulantSolver, lam: float, xs: np.ndarray) -> np.ndarray:
    """ν̄_λ over an array, vectorized for the closed forms"""
    xs = np.asarray(xs, dtype=float)
    m = s.mechanism
    if is_infinite(lam) and not s.grey:
        raise GreyConditionError(f"ν_∞ needs Grey's condition; {m.label} fails it")
    if m.is_feller_type:
        A, g = m.half_sigma2, m.gamma
        mass = 1.0 if is_infinite(lam) else (A * lam + g) / (A * lam)
        return mass * np.exp(-g * xs / A)
    if m.is_neveu:
        return special.exp1(xs) / math.log1p(lam)
    return np.array([levy_tail(s, lam, x) for x in xs.ravel()]).reshape(xs.shape)


def levy_tail_integral(s: CumulantSolver, lam: float, eps: float) -> float:
    """∫_0^ε ν̄_λ(u)du, the mean of jumps of size <= ε per unit time, up to ε·ν̄_λ(ε)"""
    m = s.mechanism
    if m.is_neveu:
        # ∫_0^ε E1 = ε·E1(ε) + 1 - e^{-ε}
        return (eps * float(special.exp1(eps)) - math.expm1(-eps)) / math.log1p(lam)
    if m.is_feller_type:
        A, g = m.half_sigma2, m.gamma
        mass = 1.0 if is_infinite(lam) else (A * lam + g) / (A * lam)
        return mass * A / g * -math.expm1(-g * eps / A)
    grid = np.geomspace(eps * 1e-8, eps, 64)
    tail = levy_tail_array(s, lam, grid)
    return float(integrate.trapezoid(tail, grid))


def tail_interpolant(s: CumulantSolver, lam: float, lo: float, hi: float) -> Callable[[np.ndarray], np.ndarray]:
    """
    ν̄_λ on [lo, hi] as a callable.

    Closed forms are returned as-is; otherwise ν̄_λ is inverted on a log grid and
    interpolated monotonically in log-log coordinates.
    """
    m = s.mechanism
    if m.is_feller_type or m.is_neveu:
        return lambda ys: levy_tail_array(s, lam, ys)
    grid = np.geomspace(lo, hi, config.TAIL_TABLE_POINTS)
    values = np.maximum(levy_tail_array(s, lam, grid), np.finfo(float).tiny)
    values = np.minimum.accumulate(values)
    spline = interpolate.PchipInterpolator(np.log(grid), np.log(values), extrapolate=True)
    logger.debug("tabulated ν̄_%g on [%g, %g] for %s", lam, lo, hi, m.label)
    return lambda ys: np.exp(spline(np.log(np.clip(ys, lo, None))))


# ============= DENSITIES OF Ŵ =============

def _poisson_weights(u: float, n_max: int) -> np.ndarray:
    n = np.arange(n_max + 1)
    if u == 0:
        return (n == 0).astype(float)
    return np.exp(n * math.log(u) - u - special.gammaln(n + 1))


def density_g_grey(s: CumulantSolver, x: float, u: float, n_max: int = 64, method: str = "auto") -> float:
    """
    g^∞_x(u) = e^{-u} Σ_n u^n/n! ∫_0^x ν̄_∞(x-z) ν_∞^{*n}(dz), truncated at n_max.

    method: "series" (Feller-type closed form), "convolution" (grid convolutions
    of ν_∞), or "auto".
    """
    if not s.grey:
        raise GreyConditionError(f"the series density needs Grey's condition; {s.mechanism.label} fails it")
    if not x > 0 or u < 0:
        raise ValueError(f"need x > 0 and u >= 0, got x={x}, u={u}")
    weights = _poisson_weights(u, n_max)
    if method == "auto":
        method = "series" if s.mechanism.is_feller_type else "convolution"

    if method == "series":
        # ν_∞ = Exp(b): the n-th term is e^{-bx}(bx)^n/n!
        b = s.mechanism.gamma / s.mechanism.half_sigma2
        n = np.arange(n_max + 1)
        terms = np.exp(n * math.log(b * x) - b * x - special.gammaln(n + 1))
    elif method == "convolution":
        terms = _convolution_terms(s, x, n_max)
    else:
        raise ValueError(f"unknown method {method!r}")

    bound = weights[-1] * float(np.max(terms))
    logger.debug("density_g_grey x=%g u=%g: truncation bound %.2e", x, u, bound)
    return float(np.dot(weights, terms))


def _convolution_terms(s: CumulantSolver, x: float, n_max: int) -> np.ndarray:
    """∫_0^x ν̄_∞(x-z) ν_∞^{*n}(dz) for n = 0..n_max on a uniform grid"""
    cells = config.CONVOLUTION_POINTS
    h = x / cells
    # ν̄_∞ on the half-cell lattice j·h/2, j = 0..2·cells
    half = np.arange(2 * cells + 1) * (0.5 * h)
    tail = np.empty(2 * cells + 1)
    tail[0] = 1.0
    tail[1:] = tail_interpolant(s, INF, 0.5 * h, x)(half[1:])
    mass = tail[0:-1:2] - tail[2::2]          # ν_∞ mass of cell k, placed at (k + 1/2)h
    k = np.arange(cells)

    terms = np.empty(n_max + 1)
    terms[0] = tail[-1]
    conv = mass.copy()
    for n in range(1, n_max + 1):
        # ν_∞^{*n} has its atoms at (k + n/2)h, so x - z sits on half-lattice index 2·cells - 2k - n
        idx = 2 * cells - 2 * k - n
        ok = idx >= 1
        terms[n] = float(np.dot(conv[ok], tail[idx[ok]]))
        conv = np.maximum(signal.fftconvolve(conv, mass)[:cells], 0.0)
    return terms


def density_g(
    s: CumulantSolver,
    lam: float,
    x: float,
    u: float,
    mc_paths: int,
    rng: np.random.Generator,
    eps: Optional[float] = None,
) -> Tuple[float, float]:
    """
    Monte Carlo g^λ_x(u) = E[ν̄_λ(x - W^λ(u)); W^λ(u) < x].

    Returns:
        (estimate, standard error)
    """
    from .limit import sample_W_marginal

    if not x > 0 or not u > 0:
        raise ValueError(f"need x > 0 and u > 0, got x={x}, u={u}")
    w = sample_W_marginal(s, lam, u, mc_paths, rng, eps=eps)
    below = w < x
    vals = np.zeros(mc_paths)
    if below.any():
        vals[below] = levy_tail_array(s, lam, x - w[below])
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(mc_paths))


def transform_diagnostics(T: TransformFn, x: float) -> Dict[str, float]:
    """Stehfest values at every admissible order, for reports"""
    out = {}
    for n in range(config.STEHFEST_MIN_ORDER, config.STEHFEST_MAX_ORDER + 1, 2):
        out[f"N={n}"] = _stehfest(T, x, n)
    return out
