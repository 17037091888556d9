"""
Configuration module - Centralizes numerical defaults and constants
"""
from typing import Dict, Any


class NumericsConfig:
    """Solver, sampler and test-harness defaults"""

    # Cumulant solver
    ODE_TOL: float = 1e-10        # relative tolerance of the cumulant ODE
    QUAD_TOL: float = 1e-10       # tolerance of every ∫du/Ψ quadrature
    NEWTON_MAXITER: int = 50
    GREY_CHECK_UPPER: float = 1e8  # upper limit of the Grey cross-check quadrature
    GREY_CHECK_RATIO: float = 0.1  # tail/body ratio below which ∫du/Ψ looks bounded
    LLOGL_LOWER_DECADES: float = 60.0  # ∫_0^θ starts at θ·e^{-60}

    # Laplace inversion
    STEHFEST_ORDER: int = 16        # transforms evaluated at working precision
    STEHFEST_ORDER_FLOAT: int = 12  # transforms evaluated in double precision
    STEHFEST_MIN_ORDER: int = 8
    STEHFEST_MAX_ORDER: int = 16
    INVERSION_TOL_EXACT: float = 1e-10
    INVERSION_TOL_FLOAT: float = 1e-5
    INVERSION_LOOSE_TOL: float = 1e-2
    ASYMPTOTIC_SWITCH: float = 1e4   # f_θ switches to R(1/y)^θ/Γ(1+θ/γ) beyond this
    F_THETA_TABLE_POINTS: int = 160
    TAIL_TABLE_POINTS: int = 240
    CONVOLUTION_POINTS: int = 2048   # grid for QSD convolutions
    GREY_SERIES_TERMS: int = 64

    # Samplers
    CDF_TABLE_SIZE: int = 4096   # inverse-CDF table length
    CDF_NODES: int = 96          # inversion nodes behind one table
    CDF_SPREAD_SIGMAS: float = 12.0
    NEVEU_CHUNK_MASS: float = 0.1   # δ_mass for tilted-stable rejection
    NEVEU_DIRECT_MASS: float = 1.0  # above this the direct tilted rejection replaces chunking

    # Inverse flow
    DEFAULT_STEP: float = 0.01
    SEGMENT_RESOLUTION: float = 2e-3  # cell width relative to the target ancestor
    WINDOW_SIGMAS: float = 6.0
    MIN_WINDOW_CELLS: int = 16
    MAX_WINDOW_CELLS: int = 4096     # per target ancestor
    MAX_GRID_DOUBLINGS: int = 64     # extensions past the windows before giving up
    REPLICA_BLOCK: int = 1024

    # Limit objects
    LIMIT_EPS: float = 5e-4          # first truncation level tried for infinite ν_λ
    TRUNCATION_BIAS: float = 1e-3    # dropped mean ∫_0^ε uν(du) allowed per unit time
    JUMP_TABLE_MAX_TAIL: float = 1e-12  # relative tail mass ignored by jump tables

    # Statistical thresholds
    Z_THRESHOLD: float = 3.0
    KS_PVALUE: float = 0.01
    SUITE_PASS_FRACTION: float = 0.95
    MIN_SAMPLE_SIZE: int = 100

    def __init__(self):
        # Built-in mechanisms, keyed by their CLI name
        self.BUILTIN_MECHANISMS: Dict[str, Dict[str, Any]] = {
            'feller': {'named': 'feller', 'sigma2': 2.0, 'gamma': 1.0},
            'neveu': {'named': 'neveu', 'gamma': 1.0},
            'tempered-stable': {
                'sigma2': 0.0, 'gamma': 1.0,
                'levy': {'variant': 'tempered_stable', 'alpha': 0.5, 'c': 1.0, 'tempering': 1.0},
            },
            'compound': {
                'sigma2': 0.0, 'gamma': 3.0,
                'levy': {'variant': 'finite_compound', 'rate': 2.0,
                         'jump_law': {'name': 'exponential', 'rate': 1.0}},
            },
        }

        # Reference Hausdorff indices of the built-ins
        self.REFERENCE_HAUSDORFF: Dict[str, float] = {
            'feller': 0.0,
            'neveu': 0.0,
            'tempered-stable': 1.0 / (1.0 + 1.7724538509055159),  # 1/(1+√π)
            'compound': 3.0 / 5.0,
        }

    @property
    def builtin_names(self) -> list:
        """Sorted CLI names of the built-in mechanisms"""
        return sorted(self.BUILTIN_MECHANISMS)

    def stehfest_order(self, exact: bool) -> int:
        """Default Stehfest order for a transform of the given precision"""
        return self.STEHFEST_ORDER if exact else self.STEHFEST_ORDER_FLOAT

    def inversion_tolerance(self, exact: bool) -> float:
        """Agreement required between two Stehfest orders"""
        return self.INVERSION_TOL_EXACT if exact else self.INVERSION_TOL_FLOAT


# Singleton instance
config = NumericsConfig()
