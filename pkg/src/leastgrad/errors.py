"""Exception hierarchy shared by all modules.

ValidationError subclasses map to CLI exit code 1, NumericalError to exit
code 2. Non-convergence is not an exception (solvers return their best
iterate with converged=False); the CLI turns that into exit code 3.
"""
from __future__ import annotations


class LeastGradError(Exception):
    """Base class for all package errors."""


class ValidationError(LeastGradError):
    """Bad input: shapes, metrics, configs, mismatched grids."""


class InvalidShapeError(ValidationError):
    """Shape spec cannot be parsed or rasterizes to an empty interior."""


class InvalidMetricError(ValidationError):
    """Metric field violates its contract (non-SPD tensor, unknown kind, ...)."""


class DimensionMismatchError(ValidationError):
    """Grid-shaped arguments disagree on nx/ny/h/origin."""


class StateMismatchError(ValidationError):
    """Resume state does not match the problem it is applied to."""


class ConfigError(ValidationError):
    """Config file missing, unreadable, or inconsistent with flags."""


class NumericalError(LeastGradError):
    """NaN/Inf in iterates, linear solver breakdown, root-finder failure."""
