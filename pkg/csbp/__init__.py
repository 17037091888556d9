# Package initialization file
"""
Subcritical continuous-state branching processes

This package provides:
- Branching mechanisms and their Lévy-Khintchine evaluation
- The cumulant v_t(λ) and the limit Laplace exponents
- Numerical Laplace inversion for invariant functions, tails and densities
- Exact and table-based marginal samplers on reproducible streams
- The inverse (ancestral-lineage) flow and its identities
- The limit subordinator W^λ, its inverse and the ancestral partition
- A seeded verification suite and a command-line front end
"""

__version__ = "1.0.0"

__all__ = [
    "models",
    "mechanism",
    "cumulant",
    "laplace",
    "sampler",
    "flow",
    "limit",
    "verify",
    "validation",
    "state",
    "cli",
]
