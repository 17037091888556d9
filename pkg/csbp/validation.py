"""
Validation module - Configuration checks run before any computation
"""
from typing import List, Optional, Tuple

import numpy as np
from pydantic import ValidationError

from .config import config
from .mechanism import grey_holds
from .models import (
    BranchingMechanism,
    DensityConfig,
    ExperimentConfig,
    LimitConfig,
    LineagesConfig,
    MechanismConfig,
    TemperedStable,
    VerifyConfig,
    is_infinite,
)

Findings = Tuple[List[str], List[str]]


class ConfigValidator:
    """Validates experiment sections; every message names the offending key"""

    @staticmethod
    def validate_mechanism(mc: MechanismConfig) -> Tuple[List[str], List[str], Optional[BranchingMechanism]]:
        """Build the mechanism, collecting problems instead of raising"""
        errors, warnings = [], []
        if mc.builtin is not None and mc.builtin not in config.BUILTIN_MECHANISMS:
            errors.append(
                f"mechanism.builtin: unknown mechanism '{mc.builtin}' "
                f"(choose from {', '.join(config.builtin_names)})"
            )
            return errors, warnings, None
        try:
            m = mc.build()
        except (ValidationError, ValueError) as e:
            errors.append(f"mechanism: {e}")
            return errors, warnings, None

        if isinstance(m.levy, TemperedStable) and m.levy.tempering == 0.0:
            warnings.append("mechanism.levy: untempered stable mechanisms support analytic commands only")
        if not grey_holds(m):
            warnings.append(f"mechanism: {m.label} fails Grey's condition; λ = inf is unavailable")
        return errors, warnings, m

    @staticmethod
    def validate_lineages(cfg: LineagesConfig, m: BranchingMechanism) -> Findings:
        errors, warnings = [], []
        x = np.asarray(cfg.x, dtype=float)
        if x.size == 0:
            errors.append("lineages.x: at least one starting point is needed")
        elif np.any(x <= 0) or np.any(np.diff(x) <= 0):
            errors.append("lineages.x: starting points must be positive and strictly ascending")
        if not (m.is_feller_type or m.is_neveu):
            errors.append(f"lineages: no exact segment sampler for {m.label}; use feller or neveu")

        steps = cfg.horizon / cfg.step
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            warnings.append(f"lineages.horizon: {cfg.horizon} is not a multiple of step {cfg.step}")
        if any(level <= 0 for level in cfg.levels):
            errors.append("lineages.levels: hitting levels must be > 0")
        if cfg.replicas * x.size * round(steps) > 5e9:
            warnings.append("lineages.replicas: this run will take a long time")
        return errors, warnings

    @staticmethod
    def validate_limit(cfg: LimitConfig, m: BranchingMechanism) -> Findings:
        errors, warnings = [], []
        if is_infinite(cfg.lam) and not grey_holds(m):
            errors.append(f"limit.lam: λ = inf needs Grey's condition, which {m.label} fails")
        if cfg.eps is not None and grey_holds(m):
            warnings.append("limit.eps: ν_λ is finite under Grey's condition; eps is ignored")
        if cfg.eps is not None and cfg.eps > 0.1 * cfg.x_max:
            warnings.append(f"limit.eps: truncation {cfg.eps} is coarse against x_max {cfg.x_max}")
        return errors, warnings

    @staticmethod
    def validate_density(cfg: DensityConfig, m: BranchingMechanism) -> Findings:
        errors, warnings = [], []
        if is_infinite(cfg.lam) and not grey_holds(m):
            errors.append(f"density.lam: λ = inf needs Grey's condition, which {m.label} fails")
        if any(u <= 0 for u in cfg.u):
            errors.append("density.u: evaluation points must be > 0")
        if cfg.mc_paths < 1000:
            warnings.append(f"density.mc_paths: {cfg.mc_paths} paths give wide error bars")
        return errors, warnings

    @staticmethod
    def validate_verify(cfg: VerifyConfig) -> Findings:
        from .verify import REGISTRY

        errors, warnings = [], []
        unknown = [name for name in cfg.mechanisms if name not in config.BUILTIN_MECHANISMS]
        if unknown:
            errors.append(f"verify.mechanisms: unknown mechanism(s) {', '.join(unknown)}")
        if cfg.checks is not None:
            missing = [name for name in cfg.checks if name not in REGISTRY]
            if missing:
                errors.append(f"verify.checks: unknown check(s) {', '.join(missing)}")
        if cfg.replicas < config.MIN_SAMPLE_SIZE:
            errors.append(f"verify.replicas: KS checks need at least {config.MIN_SAMPLE_SIZE} samples, got {cfg.replicas}")
        return errors, warnings

    @staticmethod
    def validate_experiment(exp: ExperimentConfig, command: str) -> Findings:
        """All checks relevant to one CLI command"""
        errors, warnings, m = ConfigValidator.validate_mechanism(exp.mechanism)
        if command == 'verify':
            e, w = ConfigValidator.validate_verify(exp.verify)
            return errors + e, warnings + w
        if m is None:
            return errors, warnings
        section = {
            'simulate-lineages': lambda: ConfigValidator.validate_lineages(exp.lineages, m),
            'simulate-limit': lambda: ConfigValidator.validate_limit(exp.limit, m),
            'density': lambda: ConfigValidator.validate_density(exp.density, m),
        }.get(command)
        if section is not None:
            e, w = section()
            errors, warnings = errors + e, warnings + w
        return errors, warnings
