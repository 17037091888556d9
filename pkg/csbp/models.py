"""
Domain models for branching mechanisms, flows and limit objects
Single source of truth for all data structures
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Annotated, Any, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

# Extended reals: +∞ is always this explicit marker, never an overflowed float
INF = math.inf


def is_infinite(value: float) -> bool:
    """True for the +∞ marker"""
    return value == INF


# ============= BRANCHING MECHANISMS =============

class JumpLawName(str, Enum):
    """Named positive jump laws for finite-activity Lévy measures"""
    EXPONENTIAL = "exponential"
    GAMMA = "gamma"


class JumpLaw(BaseModel):
    """Jump-size law of a compound Poisson Lévy measure"""
    model_config = ConfigDict(frozen=True)

    name: JumpLawName = JumpLawName.EXPONENTIAL
    rate: float = Field(gt=0, description="Inverse scale")
    shape: float = Field(default=1.0, gt=0, description="Gamma shape (1 for exponential)")

    @model_validator(mode="after")
    def exponential_has_unit_shape(self):
        if self.name == JumpLawName.EXPONENTIAL and self.shape != 1.0:
            raise ValueError("exponential jump law takes no shape")
        return self

    @property
    def mean(self) -> float:
        return self.shape / self.rate

    @property
    def second_moment(self) -> float:
        return self.shape * (self.shape + 1.0) / self.rate ** 2


class NoLevy(BaseModel):
    """π = 0"""
    model_config = ConfigDict(frozen=True)
    variant: Literal["none"] = "none"


class TemperedStable(BaseModel):
    """π(dx) = c·x^{-α-1}e^{-tempering·x}dx"""
    model_config = ConfigDict(frozen=True)

    variant: Literal["tempered_stable"] = "tempered_stable"
    alpha: float = Field(gt=0, lt=2, description="Stability index")
    c: float = Field(gt=0, description="Scale")
    tempering: float = Field(default=0.0, ge=0, description="Exponential tempering rate")

    @model_validator(mode="after")
    def untempered_needs_alpha_above_one(self):
        # ∫_1^∞ x π(dx) must be finite
        if self.tempering == 0.0 and self.alpha <= 1.0:
            raise ValueError("untempered stable Lévy measure needs alpha in (1, 2)")
        return self


class FiniteCompound(BaseModel):
    """π = rate × jump law"""
    model_config = ConfigDict(frozen=True)

    variant: Literal["finite_compound"] = "finite_compound"
    rate: float = Field(gt=0, description="Total jump intensity")
    jump_law: JumpLaw


LevyMeasureSpec = Annotated[Union[NoLevy, TemperedStable, FiniteCompound], Field(discriminator="variant")]


class NamedMechanism(str, Enum):
    """Mechanisms with closed-form cumulants"""
    FELLER = "feller"
    NEVEU = "neveu"


class BranchingMechanism(BaseModel):
    """Ψ(u) = σ²/2·u² + γu + ∫(e^{-ux} - 1 + ux)π(dx), subcritical"""
    model_config = ConfigDict(frozen=True)

    sigma2: float = Field(default=0.0, ge=0, description="Diffusion coefficient σ²")
    gamma: float = Field(gt=0, description="Drift γ = Ψ'(0+)")
    levy: LevyMeasureSpec = NoLevy()
    named: Optional[NamedMechanism] = None

    @model_validator(mode="after")
    def check_shape(self):
        if self.sigma2 == 0.0 and isinstance(self.levy, NoLevy):
            raise ValueError("mechanism is linear: need sigma2 > 0 or a Lévy measure")
        if self.named == NamedMechanism.FELLER and not isinstance(self.levy, NoLevy):
            raise ValueError("feller mechanism carries no Lévy measure")
        if self.named == NamedMechanism.NEVEU and (
            self.sigma2 != 0.0 or self.levy != TemperedStable(alpha=1.0, c=self.gamma, tempering=1.0)
        ):
            raise ValueError("neveu mechanism is fixed by gamma alone")
        return self

    @classmethod
    def feller(cls, sigma2: float = 2.0, gamma: float = 1.0) -> "BranchingMechanism":
        return cls(sigma2=sigma2, gamma=gamma, named=NamedMechanism.FELLER)

    @classmethod
    def neveu(cls, gamma: float = 1.0) -> "BranchingMechanism":
        # γ(u+1)log(u+1) = γu + γ[(1+u)log(1+u) - u]
        return cls(
            sigma2=0.0,
            gamma=gamma,
            levy=TemperedStable(alpha=1.0, c=gamma, tempering=1.0),
            named=NamedMechanism.NEVEU,
        )

    @property
    def is_feller_type(self) -> bool:
        """Quadratic Ψ: closed forms everywhere"""
        return isinstance(self.levy, NoLevy)

    @property
    def is_neveu(self) -> bool:
        return self.named == NamedMechanism.NEVEU

    @property
    def half_sigma2(self) -> float:
        return 0.5 * self.sigma2

    @property
    def label(self) -> str:
        if self.named is not None:
            return f"{self.named.value}(gamma={self.gamma:g})"
        return f"sigma2={self.sigma2:g},gamma={self.gamma:g},levy={self.levy.variant}"


# ============= PATHS AND LINEAGES =============

@dataclass
class MonotonePath:
    """Non-decreasing step function y ↦ X(y) known at grid positions.

    Right-continuous: X(y) = values[i] for the largest i with positions[i] <= y,
    and X(y) = 0 left of the first position.
    """
    positions: np.ndarray
    values: np.ndarray
    resolution: float

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.positions.shape != self.values.shape or self.positions.ndim != 1:
            raise ValueError("positions and values must be 1-d arrays of equal length")
        if np.any(np.diff(self.positions) <= 0):
            raise ValueError("positions must be strictly ascending")
        if np.any(np.diff(self.values) < 0):
            raise ValueError("values must be non-decreasing")

    @property
    def max_value(self) -> float:
        return float(self.values[-1]) if self.values.size else 0.0


@dataclass
class LineageEnsemble:
    """Ancestral lineages X̂_t(x_i) of one flow realization"""
    x: np.ndarray
    states: np.ndarray
    t: float = 0.0
    coalescences: List[Tuple[float, Tuple[int, ...]]] = field(default_factory=list)
    levels: np.ndarray = field(default_factory=lambda: np.zeros(0))
    hitting_times: Optional[np.ndarray] = None  # (n, n_levels), nan until hit

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.states = np.asarray(self.states, dtype=float)
        self.levels = np.asarray(self.levels, dtype=float)
        if self.hitting_times is None:
            self.hitting_times = np.full((self.x.size, self.levels.size), np.nan)
            self.hitting_times[self.x[:, None] >= self.levels[None, :]] = 0.0

    def blocks(self) -> List[Tuple[int, ...]]:
        """Index sets of lineages sharing a state"""
        out: List[List[int]] = []
        for i, z in enumerate(self.states):
            if out and self.states[out[-1][-1]] == z:
                out[-1].append(i)
            else:
                out.append([i])
        return [tuple(b) for b in out]


@dataclass
class LineageTrajectory:
    """Per-step record of one ensemble"""
    times: np.ndarray
    states: np.ndarray  # (steps + 1, n)
    final: LineageEnsemble


@dataclass
class LineageBatch:
    """Independent replicas of an ensemble, advanced together"""
    x: np.ndarray
    times: np.ndarray
    states: np.ndarray          # (recorded steps, replicas, n)
    hitting_times: np.ndarray   # (replicas, n, n_levels)
    merge_times: np.ndarray     # (replicas, n - 1): first time lineage i and i+1 share a state
    levels: np.ndarray
    extensions: int = 0        # lineages whose segment continued past its window

    @property
    def final_states(self) -> np.ndarray:
        return self.states[-1]


# ============= LIMIT OBJECTS =============

@dataclass
class SubordinatorPath:
    """Drift-free pure-jump path of W^λ on [0, horizon]"""
    jump_times: np.ndarray
    jump_sizes: np.ndarray
    horizon: float
    eps: float = 0.0
    lam: float = INF
    truncation_bias: float = 0.0  # dropped mean ∫_0^ε uν(du) per unit time

    def __post_init__(self):
        self.jump_times = np.asarray(self.jump_times, dtype=float)
        self.jump_sizes = np.asarray(self.jump_sizes, dtype=float)
        self.levels = np.cumsum(self.jump_sizes)

    @property
    def total(self) -> float:
        return float(self.levels[-1]) if self.levels.size else 0.0


@dataclass
class InversePartition:
    """Families (left_i, right_i] of constancy of Ŵ with their ages"""
    left: np.ndarray
    right: np.ndarray
    ages: np.ndarray
    grey: bool
    lam: float = INF

    @property
    def lengths(self) -> np.ndarray:
        return self.right - self.left

    @property
    def ancestor_times(self) -> np.ndarray:
        """Ŵ(x_i) = e_1 + ... + e_i"""
        return np.cumsum(self.ages)


# ============= VERIFICATION =============

class CheckKind(str, Enum):
    """Gating semantics of a check"""
    EXACT = "exact"
    STATISTICAL = "statistical"
    DIAGNOSTIC = "diagnostic"


class MonteCarloEstimate(BaseModel):
    """Sample mean against an analytic target"""
    mean: float
    stderr: float
    target: float
    replicas: int

    @property
    def z(self) -> float:
        if self.stderr == 0:
            return 0.0 if self.mean == self.target else math.inf
        return abs(self.mean - self.target) / self.stderr

    @classmethod
    def from_samples(cls, samples: np.ndarray, target: float) -> "MonteCarloEstimate":
        samples = np.asarray(samples, dtype=float)
        n = samples.size
        se = float(samples.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        return cls(mean=float(samples.mean()), stderr=se, target=float(target), replicas=n)


class CheckResult(BaseModel):
    """One named, seeded check"""
    name: str
    mechanism: str
    anchor: str
    kind: CheckKind
    statistic: float
    threshold: float
    passed: bool
    replicas: int = 0
    seed: int
    runtime: float = 0.0
    detail: Dict[str, float] = Field(default_factory=dict)


# ============= EXPERIMENT CONFIG =============

class LevyConfig(BaseModel):
    """[mechanism.levy] table"""
    variant: str
    params: Dict[str, Any] = Field(default_factory=dict)


class MechanismConfig(BaseModel):
    """[mechanism] table: a built-in name, a named family, or explicit parameters"""
    builtin: Optional[str] = None
    named: Optional[NamedMechanism] = None
    sigma2: float = 0.0
    gamma: float = 1.0
    levy: Optional[LevyConfig] = None

    def build(self) -> BranchingMechanism:
        if self.builtin is not None:
            from .config import config
            if self.builtin not in config.BUILTIN_MECHANISMS:
                raise KeyError(self.builtin)
            return BranchingMechanism.model_validate(_builtin_payload(config.BUILTIN_MECHANISMS[self.builtin]))
        if self.named == NamedMechanism.NEVEU:
            return BranchingMechanism.neveu(self.gamma)
        payload: Dict[str, Any] = {'sigma2': self.sigma2, 'gamma': self.gamma}
        if self.named is not None:
            payload['named'] = self.named
        if self.levy is not None:
            payload['levy'] = {'variant': self.levy.variant, **self.levy.params}
        return BranchingMechanism.model_validate(payload)

    @property
    def label(self) -> str:
        if self.builtin is not None:
            return self.builtin
        if self.named is not None:
            return self.named.value
        return "custom"


def _builtin_payload(entry: Dict[str, Any]) -> Dict[str, Any]:
    if entry.get('named') == 'neveu':
        return BranchingMechanism.neveu(entry['gamma']).model_dump()
    return entry


class VTableConfig(BaseModel):
    """[v_table]"""
    times: List[float] = Field(default_factory=lambda: [0.0, math.log(2.0), 1.0, 2.0])
    lambdas: List[float] = Field(default_factory=lambda: [0.1, 1.0, 10.0])
    thetas: List[float] = Field(default_factory=lambda: [1.0])

    @field_validator('times')
    @classmethod
    def times_nonnegative(cls, v):
        if any(t < 0 for t in v):
            raise ValueError("times must be >= 0")
        return v

    @field_validator('lambdas', 'thetas')
    @classmethod
    def rates_positive(cls, v):
        if any(x <= 0 for x in v):
            raise ValueError("values must be > 0")
        return v


class LineagesConfig(BaseModel):
    """[lineages]"""
    x: List[float] = Field(default_factory=lambda: [1.0])
    horizon: float = Field(default=1.0, gt=0)
    step: float = Field(default=0.01, gt=0)
    resolution: Optional[float] = Field(default=None, gt=0, lt=1)
    levels: List[float] = Field(default_factory=list)
    replicas: int = Field(default=100, ge=1)
    record_every: int = Field(default=1, ge=1)


class LimitConfig(BaseModel):
    """[limit]"""
    model_config = ConfigDict(ser_json_inf_nan='constants')

    lam: float = Field(default=INF, gt=0)
    x_max: float = Field(default=10.0, gt=0)
    eps: Optional[float] = Field(default=None, gt=0)
    replicas: int = Field(default=1, ge=1)


class DensityConfig(BaseModel):
    """[density]"""
    model_config = ConfigDict(ser_json_inf_nan='constants')

    lam: float = Field(default=INF, gt=0)
    x: float = Field(default=1.0, gt=0)
    u: List[float] = Field(default_factory=lambda: [0.1, 0.5, 1.0, 2.0, 3.0, 4.0, 5.0])
    mc_paths: int = Field(default=20000, ge=100)
    n_max: int = Field(default=64, ge=1)
    eps: Optional[float] = Field(default=None, gt=0)


class VerifyConfig(BaseModel):
    """[verify]"""
    mechanisms: List[str] = Field(default_factory=lambda: ['feller', 'neveu'])
    checks: Optional[List[str]] = None
    replicas: int = Field(default=10000, ge=1)
    replicas_large: int = Field(default=100000, ge=1)
    horizon: float = Field(default=15.0, gt=0)
    step: float = Field(default=0.01, gt=0)
    resolution: Optional[float] = Field(default=None, gt=0, lt=1)
    z_threshold: float = Field(default=3.0, gt=0)
    ks_pvalue: float = Field(default=0.01, gt=0, lt=1)


class ExperimentConfig(BaseModel):
    """Everything one CLI invocation needs; round-trips through JSON losslessly"""
    model_config = ConfigDict(ser_json_inf_nan='constants')

    mechanism: MechanismConfig = Field(default_factory=lambda: MechanismConfig(builtin='feller'))
    seed: int = Field(default=42, ge=0)
    threads: int = Field(default=1, ge=1)
    out_dir: str = "out"
    v_table: VTableConfig = Field(default_factory=VTableConfig)
    lineages: LineagesConfig = Field(default_factory=LineagesConfig)
    limit: LimitConfig = Field(default_factory=LimitConfig)
    density: DensityConfig = Field(default_factory=DensityConfig)
    verify: VerifyConfig = Field(default_factory=VerifyConfig)
