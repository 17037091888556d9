"""
Flow engine: forward subordinator segments and the inverse (ancestral-lineage) flow

Lineages move backward by repeated generalized inversion of independent
Δ-segments, X̂_{0,(k+1)Δ} = X̂_{kΔ,(k+1)Δ} ∘ X̂_{0,kΔ}. Segments are sampled on
windows around the current states and continued outward, never redrawn;
replicas are advanced in vectorized blocks.
"""
import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from .config import config
from .cumulant import CumulantSolver, v, v_second_zero
from .errors import GridCoverageError, SamplerUnavailableError
from .laplace import InvariantFunction, c_theta
from .models import (
    LineageBatch,
    LineageEnsemble,
    LineageTrajectory,
    MonotonePath,
    MonteCarloEstimate,
)
from .sampler import MarginalSampler, RngStream, SamplerMethod, marginal_sampler

logger = logging.getLogger(__name__)


# ============= PATH INVERSION =============

def invert_path(p: MonotonePath, x: float) -> float:
    """
    Generalized inverse inf{y : X(y) > x} on the grid.

    Returns the smallest grid position whose value exceeds x.
    """
    if x < 0:
        raise ValueError(f"x must be >= 0, got {x}")
    idx = int(np.searchsorted(p.values, x, side="right"))
    if idx >= p.values.size:
        raise GridCoverageError(f"x={x:g} is beyond the path maximum {p.max_value:g}")
    return float(p.positions[idx])


def invert_path_array(p: MonotonePath, xs: np.ndarray) -> np.ndarray:
    xs = np.asarray(xs, dtype=float)
    idx = np.searchsorted(p.values, xs, side="right")
    if np.any(idx >= p.values.size):
        raise GridCoverageError(f"states up to {xs.max():g} exceed the path maximum {p.max_value:g}")
    return p.positions[idx]


def step_lineages(ens: LineageEnsemble, seg: MonotonePath, dt: float = 0.0) -> LineageEnsemble:
    """
    One backward step: every state z is replaced by the inverse of seg at z.

    Lineages landing on the same grid position coalesce; hitting times of the
    ensemble's levels are stamped with the step's left endpoint.
    """
    new_states = invert_path_array(seg, ens.states)
    hits = ens.hitting_times.copy()
    newly = np.isnan(hits) & (new_states[:, None] >= ens.levels[None, :])
    hits[newly] = ens.t
    out = LineageEnsemble(
        x=ens.x, states=new_states, t=ens.t + dt, coalescences=list(ens.coalescences),
        levels=ens.levels, hitting_times=hits,
    )
    before = set(ens.blocks())
    for block in out.blocks():
        if len(block) > 1 and block not in before:
            out.coalescences.append((out.t, block))
    return out


# ============= SEGMENT WINDOWS =============

@dataclass(frozen=True)
class SegmentModel:
    """What one Δ-segment needs: the marginal sampler and its first two moments per unit mass"""
    sampler: MarginalSampler
    mean_factor: float      # e^{-γΔ}
    var_per_mass: float     # Var X_Δ(1)
    resolution: float

    @classmethod
    def build(cls, s: CumulantSolver, step: float, resolution: Optional[float] = None) -> "SegmentModel":
        sampler = marginal_sampler(s, step)
        if sampler.method == SamplerMethod.GENERIC_CDF_INVERSION:
            raise SamplerUnavailableError(
                f"lineage flows need a closed-form marginal sampler; {s.mechanism.label} has none"
            )
        return cls(
            sampler=sampler,
            mean_factor=math.exp(-s.gamma * step),
            var_per_mass=-v_second_zero(s, step),
            resolution=resolution or config.SEGMENT_RESOLUTION,
        )


def _ragged_index(counts: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(position within group, group) for groups of the given sizes laid end to end"""
    counts = counts.ravel()
    owner = np.repeat(np.arange(counts.size), counts)
    return np.arange(owner.size) - np.repeat(np.cumsum(counts) - counts, counts), owner


def _window_grid(model: SegmentModel, states: np.ndarray) -> np.ndarray:
    """
    Grid positions per replica, shape (replicas, columns), ascending from 0.

    Every target ancestor c = z/μ gets its own window of uniform cells of width
    about resolution·c over ±WINDOW_SIGMAS sd. The gap between consecutive
    windows is crossed by geometric cells of relative width about resolution,
    so no cell is coarse at the scale of the positions it covers. Rows are
    padded by repeating their last position, which adds cells of zero mass.
    """
    R, n = states.shape
    c = states / model.mean_factor
    sd = np.sqrt(model.var_per_mass * c) / model.mean_factor
    lo = np.maximum(c - config.WINDOW_SIGMAS * sd, 0.0)
    hi = c + config.WINDOW_SIGMAS * sd
    cells = np.ceil((hi - lo) / (model.resolution * c))
    cells = np.clip(cells, config.MIN_WINDOW_CELLS, config.MAX_WINDOW_CELLS).astype(int)

    j, owner = _ragged_index(cells + 1)
    points = [lo.ravel()[owner] + j * ((hi - lo) / cells).ravel()[owner]]
    rows = [owner // n]
    if n > 1:
        left, right = hi[:, :-1], lo[:, 1:]
        span = np.log(np.maximum(right, left) / left)
        bridge = np.clip(np.ceil(span / math.log1p(model.resolution)), 1, config.MAX_WINDOW_CELLS).astype(int)
        j, owner = _ragged_index(bridge - 1)
        points.append(left.ravel()[owner] * np.exp((j + 1) * (span / bridge).ravel()[owner]))
        rows.append(owner // (n - 1))

    points, rows = np.concatenate(points), np.concatenate(rows)
    order = np.lexsort((points, rows))
    points, rows = points[order], rows[order]
    per_row = np.bincount(rows, minlength=R)
    col = np.arange(points.size) - np.repeat(np.cumsum(per_row) - per_row, per_row)
    grid = np.empty((R, per_row.max() + 1))
    grid[:, 0] = 0.0
    grid[:, 1:] = hi.max(axis=1)[:, None]
    grid[rows, col + 1] = points
    return grid


def _advance(model: SegmentModel, states: np.ndarray, rng: np.random.Generator) -> Tuple[np.ndarray, int]:
    """
    Invert one fresh segment per replica at all of its states.

    states has shape (replicas, n) and is sorted along axis 1. The segment is
    drawn on the window grid; where it has not yet exceeded a state by the last
    grid position the same realization continues with fresh independent cells,
    each round doubling the covered length. A state moves to the midpoint of the
    cell in which the segment first exceeds it, so states sharing a cell
    coalesce and the cell rounding carries no first-order drift. Returns the new
    states and the number of lineages that needed an extension.
    """
    grid = _window_grid(model, states)
    masses = np.diff(grid, axis=1)
    values = np.zeros_like(grid)
    values[:, 1:] = np.cumsum(model.sampler.sample_many(masses.ravel(), rng).reshape(masses.shape), axis=1)

    # first position whose value exceeds z; values[:, 0] = 0 < z
    idx = (values[:, None, :] <= states[:, :, None]).sum(axis=2)
    short = idx == grid.shape[1]
    idx = np.minimum(idx, grid.shape[1] - 1)
    out = 0.5 * (np.take_along_axis(grid, idx - 1, axis=1) + np.take_along_axis(grid, idx, axis=1))
    extended = int(short.sum())
    if not extended:
        return out, 0

    rows = np.flatnonzero(short.any(axis=1))
    start, base = grid[rows, -1], values[rows, -1]
    per_doubling = max(int(math.ceil(math.log(2.0) / math.log1p(model.resolution))), 1)
    ratios = 2.0 ** (np.arange(1, per_doubling + 1) / per_doubling)
    for _ in range(config.MAX_GRID_DOUBLINGS):
        edges = np.concatenate([start[:, None], start[:, None] * ratios[None, :]], axis=1)
        ext, ext_masses = edges[:, 1:], np.diff(edges, axis=1)
        ext_values = base[:, None] + np.cumsum(
            model.sampler.sample_many(ext_masses.ravel(), rng).reshape(ext_masses.shape), axis=1,
        )
        pending = short[rows]
        k = (ext_values[:, None, :] <= states[rows][:, :, None]).sum(axis=2)
        found = pending & (k < per_doubling)
        r_idx, l_idx = np.nonzero(found)
        cell = k[r_idx, l_idx]
        out[rows[r_idx], l_idx] = 0.5 * (edges[r_idx, cell] + edges[r_idx, cell + 1])
        short[rows[r_idx], l_idx] = False
        still = short[rows].any(axis=1)
        if not still.any():
            logger.debug("%d lineages continued past their segment windows", extended)
            return out, extended
        rows, start, base = rows[still], ext[still, -1], ext_values[still, -1]
    raise GridCoverageError(
        f"segment path stayed below {short.sum()} states after {config.MAX_GRID_DOUBLINGS} doublings"
    )


# ============= BATCHED LINEAGES =============

def _simulate_block(
    model: SegmentModel,
    initial: np.ndarray,
    steps: int,
    step: float,
    levels: np.ndarray,
    record_every: int,
    rng: np.random.Generator,
):
    states = np.sort(initial, axis=1)
    R, n = states.shape
    hits = np.full((R, n, levels.size), np.nan)
    hits[states[:, :, None] >= levels[None, None, :]] = 0.0
    merges = np.full((R, max(n - 1, 0)), np.nan)
    merges[states[:, 1:] == states[:, :-1]] = 0.0
    record = [states.copy()]
    extensions = 0

    for k in range(steps):
        states, ext = _advance(model, states, rng)
        extensions += ext
        fresh = np.isnan(hits) & (states[:, :, None] >= levels[None, None, :])
        hits[fresh] = k * step
        joined = np.isnan(merges) & (states[:, 1:] == states[:, :-1])
        merges[joined] = (k + 1) * step
        if (k + 1) % record_every == 0 or k + 1 == steps:
            record.append(states.copy())
    return np.stack(record), hits, merges, extensions


def simulate_lineage_batch(
    s: CumulantSolver,
    x: Sequence[float],
    horizon: float,
    step: float = None,
    resolution: Optional[float] = None,
    levels: Sequence[float] = (),
    replicas: int = 1,
    stream: RngStream = None,
    record_every: int = 1,
    threads: int = 1,
    initial: Optional[np.ndarray] = None,
) -> LineageBatch:
    """
    Independent replicas of the ancestral lineages started from x.

    initial, shape (replicas, n), overrides x with per-replica starting points.
    Replicas are advanced in blocks of REPLICA_BLOCK, each block on its own
    sub-stream, so results do not depend on threads.
    """
    step = step or config.DEFAULT_STEP
    stream = stream or RngStream(seed=0)
    if horizon < 0:
        raise ValueError(f"horizon must be >= 0, got {horizon}")
    steps = int(round(horizon / step))
    if abs(steps * step - horizon) > 1e-9 * max(1.0, horizon):
        logger.warning("horizon %g is not a multiple of Δ=%g; using %d steps", horizon, step, steps)
    x = np.asarray(x, dtype=float)
    if initial is None:
        if x.ndim != 1 or x.size == 0 or np.any(x <= 0) or np.any(np.diff(x) <= 0):
            raise ValueError("lineage starting points must be positive and strictly ascending")
        initial = np.broadcast_to(x, (replicas, x.size)).copy()
    else:
        initial = np.asarray(initial, dtype=float)
        if initial.shape[0] != replicas or np.any(initial <= 0):
            raise ValueError("initial states must be positive with one row per replica")
        x = initial[0]
    levels = np.asarray(levels, dtype=float)
    model = SegmentModel.build(s, step, resolution)

    blocks = range(0, replicas, config.REPLICA_BLOCK)
    jobs = (
        delayed(_simulate_block)(
            model, initial[b:b + config.REPLICA_BLOCK], steps, step, levels, record_every,
            stream.child(i).generator(),
        )
        for i, b in enumerate(blocks)
    )
    parts = Parallel(n_jobs=threads, prefer="threads")(jobs)

    states = np.concatenate([p[0] for p in parts], axis=1)
    extensions = sum(p[3] for p in parts)
    if extensions:
        logger.debug("%d lineage steps continued past their segment windows", extensions)
    rec = list(range(0, steps + 1, record_every))
    if rec[-1] != steps:
        rec.append(steps)
    return LineageBatch(
        x=x,
        times=np.array(rec, dtype=float) * step,
        states=states,
        hitting_times=np.concatenate([p[1] for p in parts], axis=0),
        merge_times=np.concatenate([p[2] for p in parts], axis=0),
        levels=levels,
        extensions=extensions,
    )


def _coalescence_log(merge_times: np.ndarray) -> List[Tuple[float, Tuple[int, ...]]]:
    """(time, block) records from first-meeting times of neighbouring lineages"""
    n = merge_times.size + 1
    log = []
    for tau in np.unique(merge_times[~np.isnan(merge_times)]):
        joined = ~np.isnan(merge_times) & (merge_times <= tau)
        block = [0]
        blocks = []
        for i in range(1, n):
            if joined[i - 1]:
                block.append(i)
            else:
                blocks.append(block)
                block = [i]
        blocks.append(block)
        for b in blocks:
            if len(b) > 1 and any(merge_times[i] == tau for i in b[:-1]):
                log.append((float(tau), tuple(b)))
    return log


def simulate_lineages(
    s: CumulantSolver,
    x: Sequence[float],
    horizon: float,
    step: float = None,
    resolution: Optional[float] = None,
    levels: Sequence[float] = (),
    stream: RngStream = None,
) -> LineageTrajectory:
    """Full backward trajectory of one ensemble, with coalescence log and hitting times"""
    batch = simulate_lineage_batch(s, x, horizon, step, resolution, levels, replicas=1, stream=stream)
    final = LineageEnsemble(
        x=batch.x,
        states=batch.final_states[0],
        t=float(batch.times[-1]),
        coalescences=_coalescence_log(batch.merge_times[0]),
        levels=batch.levels,
        hitting_times=batch.hitting_times[0],
    )
    return LineageTrajectory(times=batch.times, states=batch.states[:, 0, :], final=final)


def trajectory_frame(batch: LineageBatch) -> pd.DataFrame:
    """Long table (replica, t, x_index, state, coalesced_with)"""
    steps, R, n = batch.states.shape
    st = batch.states
    # lowest index sharing the state; states are sorted along the lineage axis
    leader = np.broadcast_to(np.arange(n), st.shape).copy()
    for i in range(1, n):
        same = st[:, :, i] == st[:, :, i - 1]
        leader[:, :, i] = np.where(same, leader[:, :, i - 1], i)
    return pd.DataFrame({
        'replica': np.broadcast_to(np.arange(R)[None, :, None], st.shape).ravel(),
        't': np.broadcast_to(batch.times[:, None, None], st.shape).ravel(),
        'x_index': np.broadcast_to(np.arange(n)[None, None, :], st.shape).ravel(),
        'state': st.ravel(),
        'coalesced_with': leader.ravel(),
    })


# ============= FLOW IDENTITIES =============

PROBES: Dict[str, Tuple[Callable[[np.ndarray], np.ndarray], Callable[[float], float]]] = {
    # name: (f, r ↦ E f(𝕖_r))
    'exp': (lambda u: np.exp(-u), lambda r: r / (1.0 + r)),
    'min1': (lambda u: np.minimum(1.0, u), lambda r: -math.expm1(-r) / r),
}


def exp_init_semigroup_test(
    s: CumulantSolver,
    q: float,
    t: float,
    probe: str = 'exp',
    replicas: int = 10000,
    stream: RngStream = None,
    step: float = None,
    threads: int = 1,
) -> MonteCarloEstimate:
    """E[f(X̂_t(𝕖_q))] against E[f(𝕖_{v_t(q)})]"""
    if probe not in PROBES:
        raise ValueError(f"unknown probe {probe!r}")
    f, expectation = PROBES[probe]
    stream = stream or RngStream(seed=0)
    start = stream.child(0).generator().exponential(1.0 / q, size=(replicas, 1))
    target = expectation(v(s, t, q) if t > 0 else q)
    if t == 0:
        return MonteCarloEstimate.from_samples(f(start[:, 0]), target)
    batch = simulate_lineage_batch(
        s, start[0], t, step=step, replicas=replicas, stream=stream.child(1), threads=threads, initial=start,
    )
    return MonteCarloEstimate.from_samples(f(batch.final_states[:, 0]), target)


def martingale_test(
    s: CumulantSolver,
    theta: float,
    x: float,
    times: Sequence[float],
    replicas: int = 10000,
    stream: RngStream = None,
    step: float = None,
    threads: int = 1,
) -> List[MonteCarloEstimate]:
    """E[e^{-θt}f_θ(X̂_t(x))] = f_θ(x) at each requested time"""
    f = InvariantFunction(s, theta)
    target = float(f(x))
    stream = stream or RngStream(seed=0)
    step = step or config.DEFAULT_STEP
    times = sorted(times)
    out = []
    for i, t in enumerate(times):
        if t == 0:
            out.append(MonteCarloEstimate(mean=target, stderr=0.0, target=target, replicas=replicas))
            continue
        batch = simulate_lineage_batch(
            s, [x], t, step=step, replicas=replicas, stream=stream.child(i), threads=threads,
        )
        out.append(MonteCarloEstimate.from_samples(math.exp(-theta * t) * f(batch.final_states[:, 0]), target))
    return out


def hitting_time_test(
    s: CumulantSolver,
    theta: float,
    x: float,
    y: float,
    horizon: float,
    replicas: int = 10000,
    stream: RngStream = None,
    step: float = None,
    threads: int = 1,
    resolution: Optional[float] = None,
) -> MonteCarloEstimate:
    """MC mean of e^{-θT̂_y} from x against f_θ(x)/f_θ(y); unreached levels contribute 0"""
    f = InvariantFunction(s, theta)
    batch = simulate_lineage_batch(
        s, [x], horizon, step=step, resolution=resolution, levels=[y], replicas=replicas,
        stream=stream, threads=threads,
    )
    hit = batch.hitting_times[:, 0, 0]
    samples = np.where(np.isnan(hit), 0.0, np.exp(-theta * np.nan_to_num(hit)))
    return MonteCarloEstimate.from_samples(samples, float(f(x) / f(y)))


def galton_ratio_test(
    s: CumulantSolver,
    x: float,
    y: float,
    horizon: float,
    replicas: int = 2000,
    stream: RngStream = None,
    step: float = None,
    threads: int = 1,
) -> MonteCarloEstimate:
    """
    X̂_t(x)/X̂_t(y) against e^{-γT̂^x_y} on the same replicas.

    Returns the paired difference, whose target is 0.
    """
    batch = simulate_lineage_batch(
        s, [x, y], horizon, step=step, levels=[y], replicas=replicas, stream=stream, threads=threads,
    )
    final = batch.final_states
    ratio = final[:, 0] / final[:, 1]
    hit = batch.hitting_times[:, 0, 0]
    decay = np.where(np.isnan(hit), 0.0, np.exp(-s.gamma * np.nan_to_num(hit)))
    return MonteCarloEstimate.from_samples(ratio - decay, 0.0)


def step_convergence_test(
    s: CumulantSolver,
    theta: float,
    x: float,
    y: float,
    horizon: float,
    steps: Sequence[float],
    replicas: int = 2000,
    stream: RngStream = None,
    resolution: Optional[float] = None,
    threads: int = 1,
) -> List[MonteCarloEstimate]:
    """
    hitting_time_test repeated for each Δ in steps, one sub-stream each.

    Hits are stamped at the left endpoint of their step, so e^{-θT̂_y} is biased
    upward by a factor of about e^{θΔ/2}; the bias vanishes as Δ shrinks.
    """
    stream = stream or RngStream(seed=0)
    return [
        hitting_time_test(
            s, theta, x, y, horizon, replicas=replicas, stream=stream.child(i), step=dt,
            threads=threads, resolution=resolution,
        )
        for i, dt in enumerate(steps)
    ]


def cocycle_samples(
    s: CumulantSolver,
    x: float,
    step: float,
    replicas: int = 2000,
    stream: RngStream = None,
    resolution: Optional[float] = None,
    threads: int = 1,
) -> Tuple[np.ndarray, np.ndarray]:
    """X̂_{2Δ}(x) composed from two Δ-segments and from one 2Δ-segment, independent replicas"""
    stream = stream or RngStream(seed=0)
    two = simulate_lineage_batch(
        s, [x], 2.0 * step, step=step, resolution=resolution, replicas=replicas,
        stream=stream.child(0), threads=threads,
    )
    one = simulate_lineage_batch(
        s, [x], 2.0 * step, step=2.0 * step, resolution=resolution, replicas=replicas,
        stream=stream.child(1), threads=threads,
    )
    return two.final_states[:, 0], one.final_states[:, 0]


def transience_fraction(
    s: CumulantSolver,
    x: float = 1.0,
    t: float = 15.0,
    level: float = 100.0,
    replicas: int = 1000,
    stream: RngStream = None,
    step: float = None,
    threads: int = 1,
) -> float:
    """Share of replicas with X̂_t(x) > level"""
    batch = simulate_lineage_batch(s, [x], t, step=step, replicas=replicas, stream=stream, threads=threads)
    return float(np.mean(batch.final_states[:, 0] > level))


def hitting_fraction(
    s: CumulantSolver,
    x: float = 1.0,
    y: float = 2.0,
    horizon: float = 10.0,
    replicas: int = 1000,
    stream: RngStream = None,
    step: float = None,
    threads: int = 1,
) -> float:
    """Share of replicas whose lineage from x reaches y before horizon"""
    batch = simulate_lineage_batch(
        s, [x], horizon, step=step, levels=[y], replicas=replicas, stream=stream, threads=threads,
    )
    return float(np.mean(~np.isnan(batch.hitting_times[:, 0, 0])))


def coincidence_test(batch: LineageBatch) -> Dict[str, float]:
    """
    Coalescence bookkeeping against the recorded trajectories.

    Merged neighbours must stay equal from their merge time on, separate ones
    must stay strictly ordered, and the first recorded meeting of a merged pair
    must fall within one recording interval of its logged merge time.
    Returns the fraction of pairs satisfying each property.
    """
    st = batch.states
    equal = st[:, :, 1:] == st[:, :, :-1]
    merged = ~np.isnan(batch.merge_times)
    tau = np.where(merged, batch.merge_times, np.inf)
    spacing = float(np.max(np.diff(batch.times))) if batch.times.size > 1 else 0.0
    tol = 1e-9 * max(1.0, float(batch.times[-1]))

    after = batch.times[:, None, None] >= tau[None] - tol
    stay = np.all(equal | ~after, axis=0)
    ordered = np.all(st[:, :, 1:] > st[:, :, :-1], axis=0)
    first = batch.times[np.argmax(equal, axis=0)]
    met = equal.any(axis=0) & (first >= tau - tol) & (first <= tau + spacing + tol)
    return {
        'merged_stay_equal': float(stay[merged].mean()) if merged.any() else 1.0,
        'separate_ordered': float(ordered[~merged].mean()) if (~merged).any() else 1.0,
        'merge_times_match': float(met[merged].mean()) if merged.any() else 1.0,
        'merged_pairs': float(merged.sum()),
    }


def entrance_probe(
    s: CumulantSolver,
    small: Tuple[float, float] = (1e-6, 1e-3),
    t: float = 1.0,
    replicas: int = 1000,
    gap: float = 0.05,
    stream: RngStream = None,
    step: float = None,
    threads: int = 1,
) -> float:
    """Fraction of coupled replicas whose lineages from two tiny starts are within gap at time t"""
    batch = simulate_lineage_batch(
        s, sorted(small), t, step=step, replicas=replicas, stream=stream, threads=threads,
    )
    final = batch.final_states
    return float(np.mean(np.abs(final[:, 1] - final[:, 0]) < gap))


def lineage_limit_constant(s: CumulantSolver, lam: float, y0: float) -> float:
    """c(λ, y₀) = (f_1(y₀)/β(1,λ))^γ with β(1,λ) = c_1(λ)/Γ(1+1/γ)"""
    f1 = InvariantFunction(s, 1.0)
    beta = c_theta(s, 1.0, lam) / math.gamma(1.0 + 1.0 / s.gamma)
    return (float(f1(y0)) / beta) ** s.gamma


def lineage_limit_samples(
    s: CumulantSolver,
    lam: float,
    x: float,
    y0: float,
    horizon: float,
    replicas: int = 2000,
    stream: RngStream = None,
    step: float = None,
    threads: int = 1,
) -> np.ndarray:
    """c(λ, y₀)·e^{-γT̂^x_{y₀}}, distributed approximately as Ŵ^λ(x) for large y₀"""
    batch = simulate_lineage_batch(
        s, [x], horizon, step=step, levels=[y0], replicas=replicas, stream=stream, threads=threads,
    )
    hit = batch.hitting_times[:, 0, 0]
    if np.isnan(hit).any():
        logger.warning("%d lineages never reached %g within %g", int(np.isnan(hit).sum()), y0, horizon)
    return lineage_limit_constant(s, lam, y0) * np.exp(-s.gamma * hit[~np.isnan(hit)])


def duality_probabilities(
    s: CumulantSolver,
    t: float,
    x: float,
    y: float,
    replicas: int = 100000,
    stream: RngStream = None,
    step: float = None,
    threads: int = 1,
) -> Dict[str, Tuple[MonteCarloEstimate, MonteCarloEstimate]]:
    """
    Both sides of P(X̂_t(x) > y) = P(x > X_t(y)), estimated independently.

    'strict' compares the events as written, 'weak' their non-strict versions
    P(X̂_t(x) >= y) and P(x >= X_t(y)). Each pair is (lineage side, forward side),
    each estimate targeting the other side's mean.
    """
    stream = stream or RngStream(seed=0)
    batch = simulate_lineage_batch(s, [x], t, step=step, replicas=replicas, stream=stream.child(0), threads=threads)
    lineage = batch.final_states[:, 0]
    forward = marginal_sampler(s, t).sample_many(np.full(replicas, y), stream.child(1).generator())
    out = {}
    for name, back, fwd in (
        ('strict', lineage > y, x > forward),
        ('weak', lineage >= y, x >= forward),
    ):
        back, fwd = back.astype(float), fwd.astype(float)
        out[name] = (
            MonteCarloEstimate.from_samples(back, float(fwd.mean())),
            MonteCarloEstimate.from_samples(fwd, float(back.mean())),
        )
    return out


def pathwise_duality(p: MonotonePath, x: float, y: float) -> bool:
    """{inverse at x > y} ⇔ {X(y) <= x} on one realization"""
    pos = np.searchsorted(p.positions, y, side="right") - 1
    value_at_y = float(p.values[pos]) if pos >= 0 else 0.0
    return (invert_path(p, x) > y) == (value_at_y <= x)
