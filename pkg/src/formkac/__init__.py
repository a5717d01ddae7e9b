"""Feynman-Kac Monte Carlo for differential forms and spinors on model
Riemannian manifolds with boundary, under absolute boundary conditions."""

from .errors import ConfigError, DomainError, PreconditionError, StepFailure
from .geometry import catalog, make_model

__version__ = "0.1.0"

__all__ = ["ConfigError", "DomainError", "PreconditionError", "StepFailure", "catalog", "make_model", "__version__"]
