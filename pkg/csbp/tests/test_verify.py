"""
Test suite for the verification harness - statistics, registry and suite reports
Run with: pytest csbp/tests/test_verify.py -v
"""

import json
import math

import numpy as np
import pytest

from csbp.models import CheckKind, CheckResult, MonteCarloEstimate, VerifyConfig
from csbp.sampler import RngStream
from csbp.verify import (
    REGISTRY,
    CheckContext,
    Outcome,
    pooled_z,
    register,
    report_json,
    report_table,
    run_suite,
    suite_passed,
    two_sample_ks,
    z_test,
)

CHEAP_CHECKS = ['flow_identity', 'hausdorff_index', 'lambda_ratio', 'qsd_transform']


def make_result(name: str, kind: CheckKind, passed: bool) -> CheckResult:
    return CheckResult(
        name=name, mechanism='feller', anchor='', kind=kind,
        statistic=0.0, threshold=1.0, passed=passed, seed=1,
    )


@pytest.fixture
def cheap_settings():
    return VerifyConfig(mechanisms=['feller', 'neveu'], checks=CHEAP_CHECKS)


# ============= STATISTICS =============

def test_z_test():
    assert z_test(1.2, 0.1, 1.0) == pytest.approx(2.0)
    assert z_test(1.0, 0.0, 1.0) == 0.0
    assert z_test(1.1, 0.0, 1.0) == math.inf
    with pytest.raises(ValueError):
        z_test(1.0, -0.1, 1.0)


def test_pooled_z():
    a = MonteCarloEstimate(mean=1.0, stderr=0.3, target=0.0, replicas=10)
    b = MonteCarloEstimate(mean=0.0, stderr=0.4, target=0.0, replicas=10)
    assert pooled_z(a, b) == pytest.approx(2.0)


def test_ks_identical_samples():
    x = np.random.default_rng(1).exponential(size=500)
    assert two_sample_ks(x, x) == pytest.approx(1.0)


def test_ks_separates_laws():
    rng = np.random.default_rng(2)
    same = two_sample_ks(rng.exponential(size=2000), rng.exponential(size=2000))
    different = two_sample_ks(rng.exponential(1.0, 2000), rng.exponential(2.0, 2000))
    assert same > 0.01
    assert different < 1e-6


def test_ks_against_cdf():
    x = np.random.default_rng(3).exponential(size=2000)
    assert two_sample_ks(x, lambda u: -np.expm1(-u)) > 0.01


def test_ks_rejects_bad_samples():
    with pytest.raises(ValueError):
        two_sample_ks(np.arange(10.0), np.arange(500.0))
    with pytest.raises(ValueError):
        two_sample_ks(np.ones(500), np.arange(500.0))
    with pytest.raises(ValueError):
        two_sample_ks(np.append(np.arange(499.0), np.nan), np.arange(500.0))


# ============= REGISTRY =============

def test_registry_covers_the_library():
    for name in ('cumulant_closed_form', 'flow_identity', 'duality', 'semigroup', 'martingale',
                 'hitting_time', 'w_laplace', 'partition_renewal', 'density_series', 'hausdorff_index',
                 'transience', 'regularity', 'cocycle', 'step_convergence', 'increment_additivity',
                 'grey_condition', 'entrance_boundary'):
        assert name in REGISTRY
    assert REGISTRY['grey_condition'].mechanisms is None
    assert REGISTRY['increment_additivity'].mechanisms is None
    assert REGISTRY['entrance_boundary'].kind == CheckKind.DIAGNOSTIC
    assert REGISTRY['qsd_transform'].mechanisms == ('feller',)


def test_duplicate_registration_rejected():
    name = 'scratch_check'

    @register(name, CheckKind.EXACT, "scratch")
    def first(ctx: CheckContext) -> Outcome:
        return Outcome(statistic=0.0, threshold=1.0, passed=True)

    try:
        with pytest.raises(ValueError):
            register(name, CheckKind.EXACT, "scratch")(first)
    finally:
        REGISTRY.pop(name)


# ============= SUITE =============

def test_empty_suite():
    settings = VerifyConfig(mechanisms=['feller'], checks=[])
    results = run_suite(settings, RngStream(seed=1))
    assert results == []
    assert suite_passed(results)
    assert report_table(results) == "no checks run"


def test_cheap_exact_suite_passes(cheap_settings):
    results = run_suite(cheap_settings, RngStream(seed=5))
    keys = [(r.name, r.mechanism) for r in results]
    assert keys == sorted(keys)
    assert len(results) == 7
    assert all(r.passed for r in results)
    assert suite_passed(results)


def test_grey_condition_on_every_builtin():
    settings = VerifyConfig(mechanisms=['feller', 'neveu', 'tempered-stable', 'compound'], checks=['grey_condition'])
    results = run_suite(settings, RngStream(seed=3))
    assert [r.mechanism for r in results] == ['compound', 'feller', 'neveu', 'tempered-stable']
    assert all(r.passed for r in results)
    assert [r.detail['analytic'] for r in results] == [0.0, 1.0, 0.0, 0.0]


def test_suite_is_deterministic(cheap_settings):
    """Identical settings and seed give identical reports apart from runtimes"""
    def stripped(seed):
        payload = json.loads(report_json(run_suite(cheap_settings, RngStream(seed=seed), threads=2), {'run': 'x'}))
        for check in payload['checks']:
            check.pop('runtime')
        return payload

    assert stripped(9) == stripped(9)


def test_suite_pass_rules():
    stat = [make_result(f"s{i}", CheckKind.STATISTICAL, True) for i in range(19)]
    assert suite_passed(stat + [make_result('s19', CheckKind.STATISTICAL, False)])
    assert not suite_passed(stat[:9] + [make_result('s9', CheckKind.STATISTICAL, False)])
    assert not suite_passed(stat + [make_result('e', CheckKind.EXACT, False)])
    assert suite_passed(stat + [make_result('d', CheckKind.DIAGNOSTIC, False)])


def test_report_outputs():
    results = [make_result('a', CheckKind.EXACT, True), make_result('b', CheckKind.DIAGNOSTIC, False)]
    payload = json.loads(report_json(results, {'seed': '1'}))
    assert payload['passed'] is True
    assert [c['name'] for c in payload['checks']] == ['a', 'b']
    table = report_table(results)
    assert 'pass' in table and 'FAIL' in table


if __name__ == "__main__":
    pytest.main([__file__, "-v", "--tb=short"])
