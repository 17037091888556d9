"""
Test suite for samplers - streams, stable variates and CSBP marginals
Run with: pytest csbp/tests/test_sampler.py -v
"""

import math

import numpy as np
import pytest
from scipy import stats

from csbp.cumulant import solver_for, v
from csbp.errors import SamplerUnavailableError
from csbp.models import BranchingMechanism, MonteCarloEstimate, TemperedStable
from csbp.sampler import (
    MarginalSampler,
    RngStream,
    SamplerMethod,
    increment_additivity_samples,
    sample_compound_poisson,
    sample_csbp_marginal,
    sample_increment_grid,
    sample_stable,
    sample_tilted_stable,
)


# ============= STREAMS =============

def test_same_key_same_draws():
    a = RngStream(seed=7, stream=3).generator().uniform(size=5)
    b = RngStream(seed=7, stream=3).generator().uniform(size=5)
    assert np.array_equal(a, b)


def test_children_are_distinct():
    root = RngStream(seed=7)
    a = root.child(0).generator().uniform(size=5)
    b = root.child(1).generator().uniform(size=5)
    assert not np.array_equal(a, b)
    assert root.child(2).child(5).path == (2, 5)


def test_stream_rejects_negative_seed():
    with pytest.raises(ValueError):
        RngStream(seed=-1)


# ============= PRIMITIVES =============

def test_stable_laplace_transform(stream):
    """E e^{-S} = e^{-scale} for α = 1/2"""
    s = sample_stable(0.5, 0.8, stream.generator(), size=40000)
    est = MonteCarloEstimate.from_samples(np.exp(-s), math.exp(-0.8))
    assert est.z <= 4.0


def test_stable_rejects_bad_index(stream):
    with pytest.raises(ValueError):
        sample_stable(1.0, 1.0, stream.generator())
    with pytest.raises(ValueError):
        sample_stable(0.5, -1.0, stream.generator())


def test_compound_poisson_mean(stream):
    rng = stream.generator()
    draws = [sample_compound_poisson(3.0, lambda g, n: g.exponential(2.0, n), rng) for _ in range(20000)]
    assert MonteCarloEstimate.from_samples(np.array(draws), 6.0).z <= 4.0


# ============= MARGINALS =============

def test_feller_marginal_mean_and_transform(feller_solver, stream):
    """E X_1(1) = e^{-1}; E e^{-X_1(1)} = e^{-v_1(1)}"""
    ms = MarginalSampler(feller_solver, 1.0)
    assert ms.method == SamplerMethod.FELLER_EXACT
    draws = ms.sample_many(np.ones(40000), stream.generator())
    assert MonteCarloEstimate.from_samples(draws, ms.mean(1.0)).z <= 4.0
    assert MonteCarloEstimate.from_samples(np.exp(-draws), ms.laplace(1.0, 1.0)).z <= 4.0


@pytest.mark.parametrize("lam", [0.5, 1.0, 2.0])
def test_feller_marginal_transform_grid(feller_solver, stream, lam):
    ms = MarginalSampler(feller_solver, 0.3)
    draws = ms.sample_many(np.full(40000, 2.0), stream.generator())
    assert MonteCarloEstimate.from_samples(np.exp(-lam * draws), ms.laplace(lam, 2.0)).z <= 4.0


def test_feller_atom_at_zero(feller_solver, stream):
    """P(X_t(x) = 0) = e^{-x·v_t(∞)}"""
    ms = MarginalSampler(feller_solver, math.log(2.0))
    draws = ms.sample_many(np.ones(40000), stream.generator())
    zero = (draws == 0).astype(float)
    assert MonteCarloEstimate.from_samples(zero, math.exp(-1.0)).z <= 4.0


def test_neveu_exact_path_transform(neveu_solver, stream):
    """Chunked tilted-stable rejection at mass 1"""
    ms = MarginalSampler(neveu_solver, 0.5)
    draws = ms.sample_many(np.ones(20000), stream.generator())
    assert MonteCarloEstimate.from_samples(np.exp(-draws), math.exp(-v(neveu_solver, 0.5, 1.0))).z <= 4.0


NEVEU_TIMES = [0.05, 0.5, 3.0]     # index e^{-t} from 0.95 down below 0.05


@pytest.mark.parametrize("t", NEVEU_TIMES)
@pytest.mark.parametrize("x", [0.5, 3.0, 50.0])
def test_neveu_transform_every_mass_and_index(neveu_solver, stream, t, x):
    """E e^{-λX_t(x)} = e^{-x·v_t(λ)} on both the chunked and the direct path"""
    ms = MarginalSampler(neveu_solver, t)
    draws = ms.sample_many(np.full(20000, x), stream.child(int(10 * x)).generator())
    assert np.all(np.isfinite(draws)) and np.all(draws >= 0)
    for lam in (0.5, 1.0, 2.0):
        lam = lam / max(x, 1.0)
        target = math.exp(-x * v(neveu_solver, t, lam))
        assert MonteCarloEstimate.from_samples(np.exp(-lam * draws), target).z <= 4.0


def test_neveu_large_mass_mean(neveu_solver, stream):
    ms = MarginalSampler(neveu_solver, 0.5)
    draws = ms.sample_many(np.full(20000, 5.0), stream.generator())
    assert MonteCarloEstimate.from_samples(draws, ms.mean(5.0)).z <= 4.0


@pytest.mark.parametrize("beta", [0.02, 0.5, 0.97])
def test_tilted_stable_transform(stream, beta):
    draws = sample_tilted_stable(beta, np.full(20000, 4.0), stream.generator())
    for lam in (0.5, 1.0, 2.0):
        target = math.exp(-4.0 * ((1.0 + lam / 4.0) ** beta - 1.0))
        assert MonteCarloEstimate.from_samples(np.exp(-lam / 4.0 * draws), target).z <= 4.0


def test_tilted_stable_validates_arguments(stream):
    with pytest.raises(ValueError):
        sample_tilted_stable(0.5, np.array([0.5, 2.0]), stream.generator())
    for beta in (0.0, 1.0, 1.5):
        with pytest.raises(ValueError):
            sample_tilted_stable(beta, np.array([2.0]), stream.generator())


def test_generic_marginal_mean(tempered_solver, stream):
    """Inverse-CDF table for the tempered-stable mechanism"""
    ms = MarginalSampler(tempered_solver, 0.5)
    assert ms.method == SamplerMethod.GENERIC_CDF_INVERSION
    draws = ms.sample_many(np.ones(4000), stream.generator())
    assert np.all(draws >= 0)
    assert MonteCarloEstimate.from_samples(draws, ms.mean(1.0)).z <= 4.0


def test_method_must_fit_mechanism(neveu_solver, feller_solver):
    with pytest.raises(SamplerUnavailableError):
        MarginalSampler(neveu_solver, 1.0, method=SamplerMethod.FELLER_EXACT)
    with pytest.raises(SamplerUnavailableError):
        MarginalSampler(feller_solver, 1.0, method=SamplerMethod.NEVEU_TILTED_STABLE)


def test_untempered_stable_is_analytic_only():
    m = BranchingMechanism(sigma2=0.0, gamma=1.0, levy=TemperedStable(alpha=1.5, c=1.0))
    with pytest.raises(SamplerUnavailableError):
        MarginalSampler(solver_for(m), 1.0)


def test_sampling_arguments_validated(feller_solver, stream):
    with pytest.raises(ValueError):
        MarginalSampler(feller_solver, 0.0)
    ms = MarginalSampler(feller_solver, 1.0)
    with pytest.raises(ValueError):
        sample_csbp_marginal(ms, 0.0, stream.generator())
    with pytest.raises(ValueError):
        ms.sample_many(np.array([-1.0]), stream.generator())


# ============= INCREMENT GRIDS =============

def test_increment_grid_is_monotone(feller_solver, stream):
    ms = MarginalSampler(feller_solver, 0.1)
    grid = np.linspace(0.05, 5.0, 100)
    path = sample_increment_grid(ms, grid, stream.generator())
    assert np.all(np.diff(path.values) >= 0)
    assert path.resolution == pytest.approx(0.05)


def test_increment_grid_rejects_bad_grid(feller_solver, stream):
    ms = MarginalSampler(feller_solver, 0.1)
    with pytest.raises(ValueError):
        sample_increment_grid(ms, np.array([0.0, 1.0]), stream.generator())
    with pytest.raises(ValueError):
        sample_increment_grid(ms, np.array([1.0, 0.5]), stream.generator())


def test_increment_grid_cells_add_up(neveu_solver, stream):
    """Two cells (0, 0.7], (0.7, 2] and one cell (0, 2] give the same law of X_t(2)"""
    ms = MarginalSampler(neveu_solver, 0.5)
    two, one = increment_additivity_samples(ms, 0.7, 2.0, 2000, stream.generator())
    assert stats.ks_2samp(two, one).pvalue > 0.01
    with pytest.raises(ValueError):
        increment_additivity_samples(ms, 2.0, 2.0, 10, stream.generator())


if __name__ == "__main__":
    pytest.main([__file__, "-v", "--tb=short"])
