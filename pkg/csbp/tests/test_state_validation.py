"""
Test suite for run identity and configuration validation
Run with: pytest csbp/tests/test_state_validation.py -v
"""

import pytest

from csbp.mechanism import builtin_mechanism
from csbp.models import (
    INF,
    DensityConfig,
    ExperimentConfig,
    LimitConfig,
    LineagesConfig,
    LevyConfig,
    MechanismConfig,
    VerifyConfig,
)
from csbp.state import hash_key, run_metadata, version_token
from csbp.validation import ConfigValidator


# ============= RUN IDENTITY =============

def test_hash_key_is_stable():
    assert hash_key({'a': 1, 'b': 2}) == hash_key({'b': 2, 'a': 1})
    assert hash_key({'a': 1}) != hash_key({'a': 2})
    assert len(hash_key('x')) == 32


def test_hash_key_accepts_models():
    assert hash_key(ExperimentConfig()) == hash_key(ExperimentConfig())
    assert hash_key(ExperimentConfig(seed=1)) != hash_key(ExperimentConfig(seed=2))


def test_version_token():
    token = version_token('verify', 1, 2)
    assert token.startswith('verify_')
    assert len(token) == len('verify_') + 8


def test_run_metadata_fields():
    meta = run_metadata('density', ExperimentConfig(), 42)
    assert list(meta) == ['command', 'config_hash', 'seed', 'run']
    assert meta['seed'] == '42'
    assert meta['run'].startswith('density_')


# ============= MECHANISMS =============

def test_builtin_mechanisms_validate():
    for name in ('feller', 'neveu', 'tempered-stable', 'compound'):
        errors, _, m = ConfigValidator.validate_mechanism(MechanismConfig(builtin=name))
        assert errors == []
        assert m is not None


def test_unknown_builtin():
    errors, _, m = ConfigValidator.validate_mechanism(MechanismConfig(builtin='galton'))
    assert m is None
    assert errors[0].startswith("mechanism.builtin")


def test_untempered_stable_warns():
    mc = MechanismConfig(sigma2=0.0, gamma=1.0, levy=LevyConfig(variant='tempered_stable', params={'alpha': 1.5, 'c': 1.0}))
    errors, warnings, m = ConfigValidator.validate_mechanism(mc)
    assert errors == []
    assert any("analytic" in w for w in warnings)


def test_invalid_explicit_mechanism():
    errors, _, m = ConfigValidator.validate_mechanism(MechanismConfig(sigma2=1.0, gamma=0.0))
    assert m is None
    assert errors[0].startswith("mechanism:")


def test_non_grey_warns():
    _, warnings, _ = ConfigValidator.validate_mechanism(MechanismConfig(builtin='neveu'))
    assert any("Grey" in w for w in warnings)


# ============= SECTIONS =============

def test_lineage_section():
    feller = builtin_mechanism('feller')
    assert ConfigValidator.validate_lineages(LineagesConfig(x=[1.0, 2.0]), feller)[0] == []
    errors, _ = ConfigValidator.validate_lineages(LineagesConfig(x=[2.0, 1.0], levels=[-1.0]), feller)
    assert len(errors) == 2
    errors, _ = ConfigValidator.validate_lineages(LineagesConfig(), builtin_mechanism('compound'))
    assert errors


def test_lineage_horizon_warning():
    _, warnings = ConfigValidator.validate_lineages(LineagesConfig(horizon=0.015, step=0.01), builtin_mechanism('feller'))
    assert any("multiple" in w for w in warnings)


def test_limit_section():
    neveu = builtin_mechanism('neveu')
    assert ConfigValidator.validate_limit(LimitConfig(lam=INF), neveu)[0]
    assert ConfigValidator.validate_limit(LimitConfig(lam=1.0), neveu)[0] == []
    _, warnings = ConfigValidator.validate_limit(LimitConfig(eps=1e-3), builtin_mechanism('feller'))
    assert any("ignored" in w for w in warnings)


def test_density_section():
    feller = builtin_mechanism('feller')
    assert ConfigValidator.validate_density(DensityConfig(), feller)[0] == []
    assert ConfigValidator.validate_density(DensityConfig(u=[0.0]), feller)[0]
    assert ConfigValidator.validate_density(DensityConfig(), builtin_mechanism('neveu'))[0]


def test_verify_section():
    assert ConfigValidator.validate_verify(VerifyConfig())[0] == []
    errors, _ = ConfigValidator.validate_verify(VerifyConfig(mechanisms=['galton'], checks=['nope']))
    assert len(errors) == 2
    assert ConfigValidator.validate_verify(VerifyConfig(replicas=50))[0]


def test_experiment_routes_by_command():
    exp = ExperimentConfig(mechanism=MechanismConfig(builtin='neveu'))
    assert ConfigValidator.validate_experiment(exp, 'v-table')[0] == []
    assert ConfigValidator.validate_experiment(exp, 'simulate-limit')[0]
    assert ConfigValidator.validate_experiment(exp, 'simulate-lineages')[0] == []


if __name__ == "__main__":
    pytest.main([__file__, "-v", "--tb=short"])
