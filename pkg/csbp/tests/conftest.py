"""
Shared fixtures: the built-in mechanisms, their solvers and seeded streams
"""

import pytest

from csbp.cumulant import solver_for
from csbp.mechanism import builtin_mechanism
from csbp.models import BranchingMechanism
from csbp.sampler import RngStream


@pytest.fixture
def feller():
    """Feller diffusion σ² = 2, γ = 1: A = 1, ν_∞ = Exp(1)"""
    return BranchingMechanism.feller(sigma2=2.0, gamma=1.0)


@pytest.fixture
def neveu():
    """Neveu mechanism Ψ(u) = (1+u)log(1+u)"""
    return BranchingMechanism.neveu(gamma=1.0)


@pytest.fixture
def feller_solver(feller):
    return solver_for(feller)


@pytest.fixture
def neveu_solver(neveu):
    return solver_for(neveu)


@pytest.fixture
def compound_solver():
    """γ = 3, jumps at rate 2 with Exp(1) sizes"""
    return solver_for(builtin_mechanism('compound'))


@pytest.fixture
def tempered_solver():
    """γ = 1, tempered stable α = 1/2, c = 1, tempering 1"""
    return solver_for(builtin_mechanism('tempered-stable'))


@pytest.fixture
def stream():
    return RngStream(seed=20240601)
