"""
Random-variate generation for CSBP marginals and subordinator primitives

Three marginal methods share one contract: E[e^{-λX_t(x)}] = e^{-x·v_t(λ)}.
All randomness flows through RngStream-derived numpy Generators.
"""
import logging
import math
from enum import Enum
from functools import lru_cache
from typing import Callable, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import interpolate

from .config import config
from .cumulant import CumulantSolver, extinction_probability, v, v_inf, v_second_zero
from .errors import SamplerUnavailableError
from .laplace import InversionKind, TransformFn, invert_to_function
from .models import MonotonePath, TemperedStable

logger = logging.getLogger(__name__)


# ============= RNG STREAMS =============

class RngStream(BaseModel):
    """
    Counter-based stream: Philox keyed by (seed, stream, path).

    The same key always yields the same variates, whatever thread draws them.
    """
    model_config = ConfigDict(frozen=True)

    seed: int = Field(ge=0, lt=2 ** 64)
    stream: int = Field(default=0, ge=0, lt=2 ** 64)
    path: Tuple[int, ...] = ()

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(self.seed, spawn_key=(self.stream,) + self.path)
        return np.random.Generator(np.random.Philox(seq))

    def child(self, index: int) -> "RngStream":
        """Independent sub-stream, e.g. one per replica or per grid cell"""
        return self.model_copy(update={'path': self.path + (int(index),)})


# ============= PRIMITIVES =============

def sample_stable(alpha: float, scale: Union[float, np.ndarray], rng: np.random.Generator, size=None):
    """
    One-sided α-stable draws with E[e^{-λS}] = e^{-scale·λ^α}.

    Chambers–Mallows–Stuck in log space, so tiny α does not overflow early.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"one-sided stable needs alpha in (0, 1), got {alpha}")
    scale = np.asarray(scale, dtype=float)
    if np.any(scale < 0):
        raise ValueError(f"scale must be >= 0, got {scale}")
    u = rng.uniform(0.0, math.pi, size)
    w = rng.exponential(1.0, size)
    log_s1 = (
        np.log(np.sin(alpha * u))
        - np.log(np.sin(u)) / alpha
        + (1.0 - alpha) / alpha * (np.log(np.sin((1.0 - alpha) * u)) - np.log(w))
    )
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        out = np.exp(log_s1 + np.log(scale) / alpha)
    return float(out) if np.ndim(out) == 0 else out


def sample_compound_poisson(
    rate: float,
    jump_sampler: Callable[[np.random.Generator, int], np.ndarray],
    rng: np.random.Generator,
) -> float:
    """Sum of a Poisson(rate) number of i.i.d. jumps"""
    if rate < 0:
        raise ValueError(f"rate must be >= 0, got {rate}")
    n = rng.poisson(rate) if rate > 0 else 0
    return float(np.sum(jump_sampler(rng, n))) if n else 0.0


def _log_kanter_ratio(beta: float, u: np.ndarray) -> np.ndarray:
    """log B(u)/B(0) for Kanter's B(u) = sin(βu)^β sin((1-β)u)^{1-β}/sin u; at least β(1-β)u²/2"""
    with np.errstate(divide="ignore"):
        return (
            beta * np.log(np.sinc(beta * u / math.pi))
            + (1.0 - beta) * np.log(np.sinc((1.0 - beta) * u / math.pi))
            - np.log(np.sinc(u / math.pi))
        )


def _tilt_excess(r: float, v: np.ndarray) -> np.ndarray:
    """ψ(v) = v - 1 + (v^{-r} - 1)/r, convex with ψ(1) = 0"""
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        return (v - 1.0) + np.expm1(-r * np.log(v)) / r


def _sample_kanter_angle(beta: float, m: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """U on (0, π) with density ∝ L(u)e^{-m(L(u)-1)}, L = B(u)/B(0), for m >= 1"""
    c = beta * (1.0 - beta) / 2.0
    out = np.empty_like(m)
    pending = np.arange(m.size)
    while pending.size:
        mm = m[pending]
        # half-normal proposal e^{-(m-1)cu²} where it is narrower than (0, π), uniform otherwise
        rate = (mm - 1.0) * c
        normal = rate > 0.5 / math.pi ** 2
        sd = 1.0 / np.sqrt(2.0 * np.where(normal, rate, 1.0))
        u = np.where(normal, np.abs(rng.standard_normal(mm.size)) * sd, rng.uniform(0.0, math.pi, mm.size))
        inside = u < math.pi
        u = np.where(inside, u, 0.0)
        with np.errstate(over="ignore", invalid="ignore"):
            d = np.expm1(_log_kanter_ratio(beta, u))
            log_ratio = np.log1p(d) - mm * d + np.where(normal, rate * u ** 2, 0.0)
        keep = inside & (np.log(rng.uniform(size=mm.size)) < log_ratio)
        out[pending[keep]] = u[keep]
        pending = pending[~keep]
    return out


def _sample_tilt_ratio(beta: float, m: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """
    V > 0 with density ∝ e^{-kψ(V)}, k = m(1-β).

    The density is log-concave with mode 1; the envelope is flat on [lo, hi]
    and follows the chords through (lo, 1) and (1, hi) outside it.
    """
    r = (1.0 - beta) / beta
    k = m * (1.0 - beta)
    spread = np.sqrt(beta / k)
    lo = np.maximum(1.0 - spread, 0.5)
    hi = 1.0 + spread
    psi_lo, psi_hi = k * _tilt_excess(r, lo), k * _tilt_excess(r, hi)
    a = psi_lo / (1.0 - lo)
    b = psi_hi / (hi - 1.0)
    steep = a * lo > 1e-12
    a_safe = np.where(steep, a, 1.0)
    w_left = np.exp(-psi_lo) * np.where(steep, -np.expm1(-a * lo) / a_safe, lo)
    w_mid = hi - lo
    w_right = np.exp(-psi_hi) / b

    out = np.empty_like(m)
    pending = np.arange(m.size)
    while pending.size:
        i = pending
        pick = rng.uniform(size=i.size) * (w_left[i] + w_mid[i] + w_right[i])
        e = rng.uniform(size=i.size)
        left = pick < w_left[i]
        right = pick >= w_left[i] + w_mid[i]
        with np.errstate(divide="ignore"):
            v_left = np.where(steep[i], lo[i] + np.log1p(e * np.expm1(-a[i] * lo[i])) / a_safe[i], lo[i] * e)
            v_right = hi[i] - np.log1p(-e) / b[i]
        v = np.where(left, v_left, np.where(right, v_right, lo[i] + e * w_mid[i]))
        log_env = np.where(
            left, -psi_lo[i] + a[i] * (v - lo[i]),
            np.where(right, -psi_hi[i] - b[i] * (v - hi[i]), 0.0),
        )
        with np.errstate(invalid="ignore"):
            keep = (v > 0) & (np.log(rng.uniform(size=i.size)) < -k[i] * _tilt_excess(r, v) - log_env)
        out[i[keep]] = v[keep]
        pending = i[~keep]
    return out


def sample_tilted_stable(beta: float, masses: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """
    Draws with E[e^{-λX}] = e^{-m((1+λ)^β - 1)} for masses m >= 1, exact in law.

    Kanter's representation S = (A(U)/W)^r, r = (1-β)/β, carries the tilt e^{-S}
    onto (U, W). Writing W = w*(U)·V around the minimizer w* of the tilted
    exponent gives X = mβ·L(U)·V^{-r}, where (U, V) has density proportional to
    L·exp(-mL(1 + (1-β)ψ(V))). U and V are drawn from the factors at L = 1 and
    the pair is thinned by e^{-m(1-β)(L-1)ψ(V)}; the acceptance rate does not
    degrade as m grows.
    """
    if not 0.0 < beta < 1.0:
        raise ValueError(f"tilted stable needs beta in (0, 1), got {beta}")
    masses = np.asarray(masses, dtype=float)
    if np.any(masses < 1.0):
        raise ValueError("direct tilted sampling needs masses >= 1")
    r = (1.0 - beta) / beta
    out = np.empty_like(masses)
    pending = np.arange(masses.size)
    while pending.size:
        m = masses[pending]
        log_l = _log_kanter_ratio(beta, _sample_kanter_angle(beta, m, rng))
        v = _sample_tilt_ratio(beta, m, rng)
        thin = m * (1.0 - beta) * np.expm1(log_l) * _tilt_excess(r, v)
        keep = rng.uniform(size=m.size) < np.exp(-thin)
        out[pending[keep]] = np.exp(np.log(m[keep] * beta) + log_l[keep] - r * np.log(v[keep]))
        pending = pending[~keep]
    return out


# ============= CSBP MARGINALS =============

class SamplerMethod(str, Enum):
    FELLER_EXACT = "feller_exact"
    NEVEU_TILTED_STABLE = "neveu_tilted_stable"
    GENERIC_CDF_INVERSION = "generic_cdf_inversion"


def default_method(s: CumulantSolver) -> SamplerMethod:
    m = s.mechanism
    if m.is_feller_type:
        return SamplerMethod.FELLER_EXACT
    if m.is_neveu:
        return SamplerMethod.NEVEU_TILTED_STABLE
    return SamplerMethod.GENERIC_CDF_INVERSION


class MarginalSampler:
    """Draws X_t(x) for one mechanism and one time t"""

    def __init__(self, s: CumulantSolver, t: float, method: Optional[SamplerMethod] = None):
        if not t > 0:
            raise ValueError(f"sampling time must be > 0, got {t}")
        self.solver = s
        self.t = float(t)
        self.method = SamplerMethod(method) if method is not None else default_method(s)
        m = s.mechanism

        if self.method == SamplerMethod.FELLER_EXACT and not m.is_feller_type:
            raise SamplerUnavailableError(f"feller_exact cannot sample {m.label}")
        if self.method == SamplerMethod.NEVEU_TILTED_STABLE and not m.is_neveu:
            raise SamplerUnavailableError(f"neveu_tilted_stable cannot sample {m.label}")
        if isinstance(m.levy, TemperedStable) and m.levy.tempering == 0.0:
            raise SamplerUnavailableError("untempered stable mechanisms are analytic-only")

        if self.method == SamplerMethod.FELLER_EXACT:
            g, A = m.gamma, m.half_sigma2
            self.v_inf = v_inf(s, self.t)
            self.jump_rate = g / (A * -math.expm1(-g * self.t))
        elif self.method == SamplerMethod.NEVEU_TILTED_STABLE:
            self.index = math.exp(-m.gamma * self.t)
        self._tables = {}

    @property
    def mechanism(self):
        return self.solver.mechanism

    def laplace(self, lam: float, x: float) -> float:
        """Analytic E[e^{-λX_t(x)}]"""
        return math.exp(-x * v(self.solver, self.t, lam))

    def mean(self, x: float) -> float:
        return x * math.exp(-self.mechanism.gamma * self.t)

    def variance(self, x: float) -> float:
        return -x * v_second_zero(self.solver, self.t)

    def sample(self, x: float, rng: np.random.Generator) -> float:
        """One draw of X_t(x)"""
        return float(self.sample_many(np.array([x]), rng)[0])

    def sample_many(self, masses: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Independent draws X_t(x_i), one per initial mass"""
        masses = np.asarray(masses, dtype=float)
        if np.any(masses < 0):
            raise ValueError("initial masses must be >= 0")
        if self.method == SamplerMethod.FELLER_EXACT:
            return self._feller(masses, rng)
        if self.method == SamplerMethod.NEVEU_TILTED_STABLE:
            return self._neveu(masses, rng)
        return self._generic(masses, rng)

    # Feller: compound Poisson(x·v_t(∞)) of Exp(b_t) jumps
    def _feller(self, masses, rng):
        n = rng.poisson(masses * self.v_inf)
        return rng.gamma(n, 1.0 / self.jump_rate)

    def _neveu(self, masses, rng):
        beta = self.index
        out = np.zeros_like(masses)
        direct = masses > config.NEVEU_DIRECT_MASS
        if direct.any():
            out[direct] = sample_tilted_stable(beta, masses[direct], rng)
        small = np.flatnonzero(~direct & (masses > 0))
        if small.size == 0:
            return out

        # split each mass into chunks of at most NEVEU_CHUNK_MASS; exact in law by branching
        chunks = np.ceil(masses[small] / config.NEVEU_CHUNK_MASS).astype(int)
        owner = np.repeat(small, chunks)
        chunk_mass = np.repeat(masses[small] / chunks, chunks)
        pending = np.arange(owner.size)
        while pending.size:
            s = sample_stable(beta, chunk_mass[pending], rng, pending.size)
            accept = rng.uniform(size=pending.size) < np.exp(-s)
            np.add.at(out, owner[pending[accept]], s[accept])
            pending = pending[~accept]
        return out

    def _generic(self, masses, rng):
        out = np.zeros_like(masses)
        values, inverse = np.unique(masses, return_inverse=True)
        if values.size > 32:
            logger.warning("generic sampler building %d inverse-CDF tables", values.size)
        u = rng.uniform(size=masses.size)
        for j, x in enumerate(values):
            if x == 0:
                continue
            sel = inverse == j
            p0, probs, ys = self._table(float(x))
            out[sel] = np.where(u[sel] <= p0, 0.0, np.interp(u[sel], probs, ys))
        return out

    def _table(self, x: float):
        if x not in self._tables:
            self._tables[x] = _inverse_cdf_table(self.solver, self.t, x)
        return self._tables[x]


def _inverse_cdf_table(s: CumulantSolver, t: float, x: float):
    """(atom at 0, probabilities, quantiles) for X_t(x)"""
    mu = x * math.exp(-s.gamma * t)
    sd = math.sqrt(max(-x * v_second_zero(s, t), 0.0))
    hi = mu + config.CDF_SPREAD_SIGMAS * sd
    lo = max(mu - config.CDF_SPREAD_SIGMAS * sd, hi * 1e-6)
    p0 = extinction_probability(s, t, x)

    def transform(q):
        return math.exp(-x * v(s, t, q)) / q

    T = TransformFn.from_float(transform, label=f"cdf[t={t:g},x={x:g}]")
    nodes = np.linspace(lo, hi, config.CDF_NODES)
    cdf = np.array([invert_to_function(T, y, InversionKind.DISTRIBUTION) for y in nodes])
    cdf = np.clip(np.maximum.accumulate(cdf), p0, 1.0)

    fine_y = np.linspace(lo, hi, config.CDF_TABLE_SIZE)
    fine_p = np.maximum.accumulate(np.clip(interpolate.PchipInterpolator(nodes, cdf)(fine_y), p0, 1.0))
    # linear from the atom up to the first node
    probs = np.concatenate([[p0], fine_p])
    ys = np.concatenate([[0.0], fine_y])
    logger.debug("inverse-CDF table t=%g x=%g: [%g, %g], p0=%.3g, top=%.6f", t, x, lo, hi, p0, fine_p[-1])
    return p0, probs, ys


def sample_csbp_marginal(ms: MarginalSampler, x: float, rng: np.random.Generator) -> float:
    """One draw of X_t(x)"""
    if not x > 0:
        raise ValueError(f"initial mass must be > 0, got {x}")
    return ms.sample(x, rng)


def sample_increment_grid(ms: MarginalSampler, x_grid: np.ndarray, rng: np.random.Generator) -> MonotonePath:
    """
    X_t on an ascending grid, built from independent increments.

    X_t(x_{i+1}) - X_t(x_i) is a fresh draw with initial mass x_{i+1} - x_i.
    """
    x_grid = np.asarray(x_grid, dtype=float)
    if x_grid.ndim != 1 or x_grid.size == 0:
        raise ValueError("grid must be a non-empty 1-d array")
    if x_grid[0] <= 0 or np.any(np.diff(x_grid) <= 0):
        raise ValueError("grid must be strictly ascending and start above 0")
    masses = np.diff(x_grid, prepend=0.0)
    values = np.cumsum(ms.sample_many(masses, rng))
    return MonotonePath(positions=x_grid, values=values, resolution=float(masses.max()))


def increment_additivity_samples(
    ms: MarginalSampler, split: float, total: float, replicas: int, rng: np.random.Generator,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    X_t(total) read off grids (split, total) and (total,), independent replicas of each.

    Both samples share one law when increments over adjacent cells add up.
    """
    if not 0 < split < total:
        raise ValueError(f"need 0 < split < total, got split={split}, total={total}")
    two_cells = np.array([split, total])
    one_cell = np.array([total])
    two = np.array([sample_increment_grid(ms, two_cells, rng).values[-1] for _ in range(replicas)])
    one = np.array([sample_increment_grid(ms, one_cell, rng).values[-1] for _ in range(replicas)])
    return two, one


@lru_cache(maxsize=256)
def marginal_sampler(s: CumulantSolver, t: float) -> MarginalSampler:
    """Shared sampler per (solver, t) so inverse-CDF tables are built once"""
    return MarginalSampler(s, t)
