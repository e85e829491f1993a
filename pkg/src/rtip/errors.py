"""Exception hierarchy with CLI exit-code classes.

Exit-code classes: 1 configuration, 2 convergence/computation,
3 geometry, 4 class starvation.
"""
from __future__ import annotations


class RtipError(Exception):
    """Base class for all package errors."""

    exit_code = 2


class ConfigError(RtipError):
    """Invalid or inconsistent configuration; message names the offending key."""

    exit_code = 1


class ConvergenceFailure(RtipError):
    """Root finding failed to converge from every seed."""

    exit_code = 2


class ClassificationFailure(RtipError):
    """Equilibria found, but not the expected stable/saddle structure."""

    exit_code = 2


class NonFiniteState(RtipError):
    """Integration produced a non-finite state component (blow-up)."""

    exit_code = 2


class Unresolved(RtipError):
    """Trajectory endpoint reached neither attractor ball within the horizon."""

    exit_code = 2


class SingleClass(RtipError):
    """ROC analysis needs both tipped and non-tipped members present."""

    exit_code = 2


class DegenerateManifold(RtipError):
    """A seeded manifold branch left the window before reaching minimum arc length."""

    exit_code = 3


class CurveCollapse(RtipError):
    """Backward-evolved threshold polyline degenerated below three points."""

    exit_code = 3


class DegenerateIntersection(RtipError):
    """Parity ray grazes a polyline vertex or overlaps an edge; retries exhausted."""

    exit_code = 3


class ClassStarvation(RtipError):
    """Draw cap reached before both outcome classes were filled."""

    exit_code = 4

    def __init__(self, message: str, n_tipped: int = 0, n_not_tipped: int = 0):
        super().__init__(message)
        self.n_tipped = n_tipped
        self.n_not_tipped = n_not_tipped
