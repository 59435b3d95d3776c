"""Exception types shared across the package.

The CLI maps these onto process exit codes; library users can catch the
base class to handle anything raised by miezesim itself.
"""

from __future__ import annotations


class MiezesimError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(MiezesimError):
    """Malformed or inconsistent configuration or input data (exit code 2)."""


class PhysicsError(MiezesimError):
    """Physically infeasible geometry or settings (exit code 3)."""


class ResolutionError(MiezesimError):
    """k-space grid cannot resolve the integrand phase (quadrature would alias)."""


class FitError(MiezesimError):
    """Least-squares fit failed or was given insufficient data (exit code 4)."""


class DegenerateDataError(FitError):
    """Input data carries no usable signal (for example all-zero counts)."""


class DiagnosticError(MiezesimError):
    """A self-check failed, e.g. too many bootstrap refits did not converge."""
