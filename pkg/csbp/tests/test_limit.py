"""
Test suite for limit objects - W^λ paths, the inverse Ŵ^λ and the ancestral partition
Run with: pytest csbp/tests/test_limit.py -v
"""

import math

import numpy as np
import pytest
from scipy import stats

from csbp.errors import GreyConditionError, HorizonError
from csbp.limit import (
    ancestral_partition,
    box_count_estimate,
    boundary_hits,
    dropped_mean,
    family_speed,
    hausdorff_index,
    invert_W,
    jump_sampler,
    partition_frame,
    path_frame,
    ratio_rescale_test,
    sample_inverse_marginal,
    simulate_W,
    simulate_W_until,
    truncation_level,
    w_laplace_test,
)
from csbp.mechanism import builtin_mechanism
from csbp.models import INF, InversePartition, SubordinatorPath


@pytest.fixture
def two_jumps():
    """Jumps of size 1 at 0.2 and size 2 at 0.6: W(1) = 3"""
    return SubordinatorPath(jump_times=[0.2, 0.6], jump_sizes=[1.0, 2.0], horizon=1.0)


# ============= INVERSE PATH =============

def test_single_jump_inverse():
    p = SubordinatorPath(jump_times=[0.7], jump_sizes=[5.0], horizon=1.0)
    assert invert_W(p, 0.0) == 0.0
    assert invert_W(p, 1e-9) == 0.7
    assert invert_W(p, 5.0) == 0.7
    assert list(invert_W(p, np.array([0.5, 2.5]))) == [0.7, 0.7]
    with pytest.raises(HorizonError):
        invert_W(p, 5.0001)


def test_inverse_is_left_continuous(two_jumps):
    """Ŵ(1) = 0.2 since W(0.2) = 1 already reaches 1"""
    assert invert_W(two_jumps, 1.0) == 0.2
    assert invert_W(two_jumps, 1.0 + 1e-12) == 0.6
    values = invert_W(two_jumps, np.linspace(0.0, 3.0, 50))
    assert np.all(np.diff(values) >= 0)


# ============= PARTITION =============

def test_partition_of_two_jumps(two_jumps):
    part = ancestral_partition(two_jumps, 2.0)
    assert list(part.left) == [0.0, 1.0]
    assert list(part.right) == [1.0, 3.0]
    assert part.ages == pytest.approx([0.2, 0.4])
    assert part.ancestor_times == pytest.approx([0.2, 0.6])
    assert part.grey
    assert len(ancestral_partition(two_jumps, 1.0).left) == 1


def test_partition_needs_coverage(two_jumps):
    with pytest.raises(HorizonError):
        ancestral_partition(two_jumps, 4.0)


def test_partition_frame(two_jumps):
    frame = partition_frame(ancestral_partition(two_jumps, 3.0))
    assert list(frame.columns) == ['family', 'left', 'right', 'age']
    assert list(frame['family']) == [1, 2]
    assert list(path_frame(two_jumps).columns) == ['jump_time', 'jump_size']


def test_family_speed(feller_solver):
    """v_{ln 2}(∞) = 1, so speeds equal ancestor times"""
    part = InversePartition(left=np.array([0.0, 1.0]), right=np.array([1.0, 3.0]),
                            ages=np.array([1.0, 0.5]), grey=True)
    assert family_speed(part, 1, feller_solver, math.log(2.0)) == pytest.approx(1.0)
    assert family_speed(part, 2, feller_solver, math.log(2.0)) == pytest.approx(1.5)


def test_family_speed_errors(feller_solver):
    part = InversePartition(left=np.array([0.0]), right=np.array([1.0]), ages=np.array([1.0]), grey=True)
    with pytest.raises(ValueError):
        family_speed(part, 2, feller_solver, 1.0)
    with pytest.raises(ValueError):
        family_speed(part, 1, feller_solver, 0.0)
    finite = InversePartition(left=part.left, right=part.right, ages=part.ages, grey=True, lam=1.0)
    with pytest.raises(ValueError):
        family_speed(finite, 1, feller_solver, 1.0)
    dust = InversePartition(left=part.left, right=part.right, ages=part.ages, grey=False)
    with pytest.raises(GreyConditionError):
        family_speed(dust, 1, feller_solver, 1.0)


# ============= DIMENSION =============

def test_hausdorff_index_of_builtins():
    assert hausdorff_index(builtin_mechanism('feller')) == 0.0
    assert hausdorff_index(builtin_mechanism('neveu')) == 0.0
    assert hausdorff_index(builtin_mechanism('compound')) == pytest.approx(0.6)
    assert hausdorff_index(builtin_mechanism('tempered-stable')) == pytest.approx(1.0 / (1.0 + math.sqrt(math.pi)))


def test_box_count_of_dense_range():
    """Evenly spaced levels fill [0, 1]: slope close to 1"""
    p = SubordinatorPath(jump_times=np.linspace(0.0, 1.0, 10000), jump_sizes=np.full(10000, 1e-4), horizon=1.0)
    scales = 2.0 ** -np.arange(2, 11)
    assert box_count_estimate(p, 1.0, scales) == pytest.approx(1.0, abs=0.05)
    with pytest.raises(ValueError):
        box_count_estimate(p, 1.0, [0.1])


def test_boundary_hits_vanish(feller_solver, stream):
    p = simulate_W_until(feller_solver, INF, 5.0, rng=stream.generator())
    assert boundary_hits(p, 5.0, 1000, stream.child(1).generator()) == 0.0


# ============= JUMP LAWS AND PATHS =============

def test_feller_jump_law(feller_solver, stream):
    """ν_∞ = Exp(1) at rate 1; ν_1 has rate 2 and the same jumps"""
    assert jump_sampler(feller_solver, INF).rate == pytest.approx(1.0)
    assert jump_sampler(feller_solver, 1.0).rate == pytest.approx(2.0)
    p = simulate_W(feller_solver, INF, 2000.0, rng=stream.generator())
    assert np.all(np.diff(p.jump_times) >= 0)
    assert stats.kstest(p.jump_sizes, 'expon').pvalue > 1e-3
    assert p.eps == 0.0 and p.truncation_bias == 0.0


def test_simulate_until_covers_target(feller_solver, stream):
    p = simulate_W_until(feller_solver, INF, 10.0, rng=stream.generator())
    assert p.total >= 10.0
    assert math.log2(p.horizon) == int(math.log2(p.horizon))


def test_neveu_limit_needs_truncation(neveu_solver):
    with pytest.raises(GreyConditionError):
        simulate_W(neveu_solver, INF, 1.0)
    assert truncation_level(neveu_solver, 1.0) == pytest.approx(5e-4)
    assert truncation_level(neveu_solver, 1.0, target=1e-4) == pytest.approx(5e-4 / 8)


def test_neveu_dropped_mean(neveu_solver):
    """∫_0^ε e^{-u}/ln 2 du"""
    assert dropped_mean(neveu_solver, 1.0, 1e-3) == pytest.approx(-math.expm1(-1e-3) / math.log(2.0), rel=1e-6)


def test_bad_horizons(feller_solver):
    with pytest.raises(ValueError):
        simulate_W(feller_solver, INF, 0.0)
    with pytest.raises(ValueError):
        simulate_W_until(feller_solver, INF, -1.0)


# ============= MARGINALS =============

def test_w_laplace_feller(feller_solver, stream):
    """E e^{-W^∞(2)} = e^{-2κ_∞(1)} = e^{-1}"""
    est = w_laplace_test(feller_solver, INF, 1.0, 2.0, 20000, stream.generator())
    assert est.target == pytest.approx(math.exp(-1.0))
    assert est.z <= 4.0


def test_w_laplace_neveu_truncated(neveu_solver, stream):
    est = w_laplace_test(neveu_solver, 1.0, 1.0, 1.0, 20000, stream.generator())
    assert est.z <= 4.0


def test_inverse_marginal_mean(feller_solver, stream):
    """Ŵ^∞(1) is Gamma(1 + Poisson(1), 1): mean 2"""
    draws = sample_inverse_marginal(feller_solver, INF, 1.0, 20000, stream.generator())
    se = draws.std(ddof=1) / math.sqrt(draws.size)
    assert abs(draws.mean() - 2.0) <= 4.0 * se
    with pytest.raises(ValueError):
        sample_inverse_marginal(feller_solver, INF, 0.0, 10, stream.generator())


def test_ratio_rescale_feller(feller_solver, stream):
    """Ŵ^3(x) = c_{3,1}Ŵ^1(x) in law with c_{3,1} = 3/2"""
    result = ratio_rescale_test(feller_solver, 1.0, 3.0, 1.0, 2000, stream.generator())
    assert result['constant'] == pytest.approx(1.5)
    assert result['pvalue'] > 1e-3


if __name__ == "__main__":
    pytest.main([__file__, "-v", "--tb=short"])
