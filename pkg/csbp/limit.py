"""
Limit objects: the drift-free subordinator W^λ, its inverse Ŵ^λ and the ancestral partition

W^λ is compound Poisson when ν_λ is finite (Grey's condition). Otherwise jumps
below a truncation level ε are dropped and the dropped mean is reported.
"""
import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, Optional, Sequence

import numpy as np
import pandas as pd
from scipy import stats

from .config import config
from .cumulant import CumulantSolver, c_ratio, kappa_lambda, levy_total_mass, v_inf
from .errors import GreyConditionError, HorizonError
from .laplace import levy_tail, levy_tail_integral, tail_interpolant
from .mechanism import psi_prime_inf
from .models import (
    BranchingMechanism,
    InversePartition,
    MonteCarloEstimate,
    SubordinatorPath,
    is_infinite,
)
from .sampler import RngStream

logger = logging.getLogger(__name__)


# ============= JUMP LAWS =============

@dataclass(frozen=True, eq=False)
class JumpSampler:
    """Rate and jump law of the (possibly truncated) compound Poisson W^λ"""
    rate: float
    eps: float = 0.0
    truncation_bias: float = 0.0
    exp_rate: float = 0.0                     # > 0: jumps are exactly Exp(exp_rate)
    survival: Optional[np.ndarray] = None     # ascending P(J > y)
    log_sizes: Optional[np.ndarray] = None    # matching log y

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if n == 0:
            return np.zeros(0)
        if self.exp_rate > 0:
            return rng.exponential(1.0 / self.exp_rate, n)
        return np.exp(np.interp(rng.uniform(size=n), self.survival, self.log_sizes))


def dropped_mean(s: CumulantSolver, lam: float, eps: float) -> float:
    """∫_0^ε u ν_λ(du), the mean W^λ loses per unit time when jumps <= ε are dropped"""
    return max(levy_tail_integral(s, lam, eps) - eps * levy_tail(s, lam, eps), 0.0)


def truncation_level(s: CumulantSolver, lam: float, target: float = None) -> float:
    """Largest ε = LIMIT_EPS·2^{-k} whose dropped mean is below target"""
    target = target or config.TRUNCATION_BIAS
    eps = config.LIMIT_EPS
    for _ in range(40):
        if dropped_mean(s, lam, eps) <= target:
            return eps
        eps /= 2.0
    logger.warning("truncation bias of ν_%g stays above %g down to ε=%g", lam, target, eps)
    return eps


@lru_cache(maxsize=64)
def jump_sampler(s: CumulantSolver, lam: float, eps: Optional[float] = None) -> JumpSampler:
    """
    Jump rate and law of W^λ.

    Finite ν_λ: rate ν_λ((0,∞)) and jumps ν_λ/rate; eps is ignored.
    Infinite ν_λ: rate ν̄_λ(ε) and jumps ν_λ restricted to (ε,∞).
    Jumps come from an inverse-CDF table of CDF_TABLE_SIZE points on a log grid.
    """
    m = s.mechanism
    mass = levy_total_mass(s, lam)
    if not is_infinite(mass):
        if eps:
            logger.debug("ν_%g is finite for %s; truncation level %g ignored", lam, m.label, eps)
        eps, norm, bias = 0.0, mass, 0.0
        if m.is_feller_type:
            return JumpSampler(rate=mass, exp_rate=m.gamma / m.half_sigma2)
    else:
        eps = eps or truncation_level(s, lam)
        norm = levy_tail(s, lam, eps)
        bias = dropped_mean(s, lam, eps)

    exact = m.is_feller_type or m.is_neveu
    floor = config.JUMP_TABLE_MAX_TAIL if exact else config.INVERSION_TOL_FLOAT
    hi = max(1.0, 2.0 * eps)
    for _ in range(64):
        if levy_tail(s, lam, hi) <= floor * norm:
            break
        hi *= 2.0
    else:
        logger.warning("jump table for ν_%g stops at %g with tail mass left", lam, hi)
    lo = eps if eps > 0 else hi * 1e-9

    grid = np.geomspace(lo, hi, config.CDF_TABLE_SIZE)
    survival = np.minimum.accumulate(np.clip(tail_interpolant(s, lam, lo, hi)(grid) / norm, 0.0, 1.0))
    if eps > 0:
        survival[0] = 1.0
    logger.debug(
        "jump table ν_%g[%s]: rate=%.6g eps=%g bias=%.3g range=[%g, %g]",
        lam, m.label, norm, eps, bias, lo, hi,
    )
    return JumpSampler(
        rate=norm, eps=eps, truncation_bias=bias,
        survival=survival[::-1].copy(), log_sizes=np.log(grid)[::-1].copy(),
    )


# ============= PATHS =============

def simulate_W(
    s: CumulantSolver,
    lam: float,
    horizon: float,
    eps: Optional[float] = None,
    rng: Optional[np.random.Generator] = None,
) -> SubordinatorPath:
    """
    One path of W^λ on [0, horizon].

    Raises:
        GreyConditionError: λ = INF without Grey's condition
    """
    if not horizon > 0:
        raise ValueError(f"horizon must be > 0, got {horizon}")
    rng = rng if rng is not None else RngStream(seed=0).generator()
    js = jump_sampler(s, lam, eps)
    n = rng.poisson(js.rate * horizon)
    times = np.sort(rng.uniform(0.0, horizon, n))
    return SubordinatorPath(
        jump_times=times,
        jump_sizes=js.draw(rng, n),
        horizon=horizon,
        eps=js.eps,
        lam=lam,
        truncation_bias=js.truncation_bias,
    )


def simulate_W_until(
    s: CumulantSolver,
    lam: float,
    x_max: float,
    eps: Optional[float] = None,
    rng: Optional[np.random.Generator] = None,
) -> SubordinatorPath:
    """W^λ extended segment by segment until it passes x_max"""
    if not x_max > 0:
        raise ValueError(f"x_max must be > 0, got {x_max}")
    rng = rng if rng is not None else RngStream(seed=0).generator()
    p = simulate_W(s, lam, 1.0, eps, rng)
    while p.total < x_max:
        more = simulate_W(s, lam, p.horizon, eps, rng)
        p = SubordinatorPath(
            jump_times=np.concatenate([p.jump_times, p.horizon + more.jump_times]),
            jump_sizes=np.concatenate([p.jump_sizes, more.jump_sizes]),
            horizon=2.0 * p.horizon,
            eps=p.eps,
            lam=lam,
            truncation_bias=p.truncation_bias,
        )
    return p


def invert_W(p: SubordinatorPath, x):
    """
    Ŵ(x) = inf{y : W(y) >= x}, left-continuous and non-decreasing.

    Raises:
        HorizonError: W does not reach x within the path's horizon
    """
    xs = np.asarray(x, dtype=float)
    if np.any(xs > p.total):
        raise HorizonError(f"W reaches only {p.total:g} by y={p.horizon:g}; need {float(np.max(xs)):g}")
    idx = np.searchsorted(p.levels, xs, side="left")
    epochs = np.append(p.jump_times, p.horizon)
    out = np.where(xs > 0, epochs[idx], 0.0)
    return float(out) if out.ndim == 0 else out


def ancestral_partition(p: SubordinatorPath, x_max: float) -> InversePartition:
    """
    Families of [0, x_max]: the intervals (W(τ-), W(τ)] on which Ŵ equals τ.

    Ages are the increments of Ŵ across consecutive families.
    """
    if p.total < x_max:
        raise HorizonError(f"W reaches only {p.total:g}; the partition needs {x_max:g}")
    right = p.levels
    left = np.concatenate([[0.0], right[:-1]])
    keep = left < x_max
    times = p.jump_times[keep]
    return InversePartition(
        left=left[keep],
        right=right[keep],
        ages=np.diff(times, prepend=0.0),
        grey=p.eps == 0.0,
        lam=p.lam,
    )


def family_speed(part: InversePartition, i: int, s: CumulantSolver, t: float) -> float:
    """Ŵ^∞(x_i)/v_t(∞), the rate at which family i (1-based) leaves towards ∞"""
    if not part.grey:
        raise GreyConditionError("family speeds need Grey's condition")
    if not is_infinite(part.lam):
        raise ValueError(f"family speeds are defined for λ = ∞, got {part.lam}")
    if not 1 <= i <= part.ages.size:
        raise ValueError(f"family index must be in [1, {part.ages.size}], got {i}")
    if not t > 0:
        raise ValueError(f"t must be > 0, got {t}")
    return float(part.ancestor_times[i - 1] / v_inf(s, t))


# ============= DIMENSION =============

def hausdorff_index(m: BranchingMechanism) -> float:
    """γ/Ψ'(∞), the Hausdorff dimension of the support of the partition"""
    slope = psi_prime_inf(m)
    return 0.0 if is_infinite(slope) else m.gamma / slope


def box_count_estimate(p: SubordinatorPath, x_max: float, scales: Optional[Sequence[float]] = None) -> float:
    """
    Slope of log N(δ) against log(1/δ) for the range of W in [0, x_max].

    Diagnostic only: finite-size effects at the truncation level are large.
    """
    points = np.concatenate([[0.0], p.levels[p.levels <= x_max]])
    if scales is None:
        scales = x_max * 2.0 ** -np.arange(2, 15)
        scales = scales[scales >= max(10.0 * p.eps, x_max * 2.0 ** -14)]
    scales = np.asarray(scales, dtype=float)
    if scales.size < 2:
        raise ValueError("box counting needs at least two scales")
    counts = np.array([np.unique(np.floor(points / d)).size for d in scales])
    slope = float(np.polyfit(np.log(1.0 / scales), np.log(counts), 1)[0])
    logger.debug("box counts %s over %d scales: slope %.3f", counts.tolist(), scales.size, slope)
    return slope


def boundary_hits(p: SubordinatorPath, x_max: float, probes: int, rng: np.random.Generator) -> float:
    """Fraction of uniform probe points in (0, x_max) that fall exactly on a family boundary"""
    points = rng.uniform(0.0, x_max, probes)
    return float(np.isin(points, p.levels).mean())


# ============= MARGINALS =============

def sample_W_marginal(
    s: CumulantSolver,
    lam: float,
    u: float,
    n: int,
    rng: np.random.Generator,
    eps: Optional[float] = None,
) -> np.ndarray:
    """n independent draws of W^λ(u)"""
    if u < 0:
        raise ValueError(f"u must be >= 0, got {u}")
    js = jump_sampler(s, lam, eps)
    counts = rng.poisson(js.rate * u, n)
    if js.exp_rate > 0:
        return rng.gamma(counts, 1.0 / js.exp_rate)
    sizes = js.draw(rng, int(counts.sum()))
    return np.bincount(np.repeat(np.arange(n), counts), weights=sizes, minlength=n)


def sample_inverse_marginal(
    s: CumulantSolver,
    lam: float,
    x: float,
    n: int,
    rng: np.random.Generator,
    eps: Optional[float] = None,
) -> np.ndarray:
    """
    n independent draws of Ŵ^λ(x).

    Ŵ(x) is the epoch of the K-th jump, K the first index with S_K >= x, so it
    is Gamma(K, rate) given K.
    """
    if not x > 0:
        raise ValueError(f"x must be > 0, got {x}")
    js = jump_sampler(s, lam, eps)
    if js.exp_rate > 0:
        k = 1 + rng.poisson(js.exp_rate * x, n)
        return rng.gamma(k, 1.0 / js.rate)
    level = np.zeros(n)
    k = np.zeros(n, dtype=int)
    active = np.arange(n)
    while active.size:
        level[active] += js.draw(rng, active.size)
        k[active] += 1
        active = active[level[active] < x]
    return rng.gamma(k, 1.0 / js.rate)


def w_laplace_test(
    s: CumulantSolver,
    lam: float,
    theta: float,
    y: float,
    n: int,
    rng: np.random.Generator,
    eps: Optional[float] = None,
) -> MonteCarloEstimate:
    """
    Mean of e^{-θW^λ(y)} against e^{-yκ_λ(θ)}.

    With truncation the target is corrected to first order in the dropped mean.
    """
    js = jump_sampler(s, lam, eps)
    w = sample_W_marginal(s, lam, y, n, rng, eps)
    exponent = kappa_lambda(s, lam, theta) - theta * js.truncation_bias
    return MonteCarloEstimate.from_samples(np.exp(-theta * w), math.exp(-y * exponent))


def ratio_rescale_test(
    s: CumulantSolver,
    lam: float,
    lam2: float,
    x: float,
    n: int,
    rng: np.random.Generator,
    eps: Optional[float] = None,
) -> Dict[str, float]:
    """Two-sample KS of Ŵ^{λ'}(x) against c_{λ',λ}·Ŵ^λ(x)"""
    constant = c_ratio(s, lam2, lam)
    a = sample_inverse_marginal(s, lam2, x, n, rng, eps)
    b = constant * sample_inverse_marginal(s, lam, x, n, rng, eps)
    res = stats.ks_2samp(a, b)
    return {'statistic': float(res.statistic), 'pvalue': float(res.pvalue), 'constant': constant}


# ============= EXPORTS =============

def partition_frame(part: InversePartition) -> pd.DataFrame:
    """(family, left, right, age) rows"""
    return pd.DataFrame({
        'family': np.arange(1, part.ages.size + 1),
        'left': part.left,
        'right': part.right,
        'age': part.ages,
    })


def path_frame(p: SubordinatorPath) -> pd.DataFrame:
    """(jump_time, jump_size) rows"""
    return pd.DataFrame({'jump_time': p.jump_times, 'jump_size': p.jump_sizes})
