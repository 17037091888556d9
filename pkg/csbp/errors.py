"""
Exception hierarchy for domain failures.

Value objects reject bad input through pydantic's ValidationError; everything
below is raised by the numerical layers once the inputs are valid.
"""
from typing import Any, Dict, Optional


class CsbpError(Exception):
    """Base class for all library errors"""


class GreyConditionError(CsbpError):
    """Operation needs Grey's condition and the mechanism does not satisfy it"""


class LLogLConditionError(CsbpError):
    """Operation needs the L log L moment condition"""


class SamplerUnavailableError(CsbpError):
    """No marginal sampler exists for the requested mechanism/method pairing"""


class GridCoverageError(CsbpError):
    """A monotone path does not reach the level being inverted"""


class HorizonError(CsbpError):
    """A subordinator path was not simulated far enough"""


class InversionError(CsbpError):
    """Numerical Laplace inversion did not converge"""

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}

    def __str__(self) -> str:
        base = super().__str__()
        if not self.diagnostics:
            return base
        details = ", ".join(f"{k}={v}" for k, v in sorted(self.diagnostics.items()))
        return f"{base} ({details})"
