"""Exception types shared across the package."""


class ColdPlasmaError(Exception):
    """Base class for all package errors."""


class ParameterError(ColdPlasmaError, ValueError):
    """An argument violates a documented precondition."""


class DomainError(ColdPlasmaError, ValueError):
    """A geometric operation received inadmissible input."""


class DomainBuildError(DomainError):
    """Domain assembly failed a structural check.

    ``failed_check`` names the check ("c2_monotone", "simple", "rect_margin",
    "condition4", ...); ``report`` carries the full validation report when one
    was produced.
    """

    def __init__(self, failed_check: str, message: str, report=None):
        super().__init__(message)
        self.failed_check = failed_check
        self.report = report


class DegeneracyError(ColdPlasmaError, ArithmeticError):
    """The degenerate weight sigma'(y) vanished at a quadrature node."""


class GridMismatchError(ColdPlasmaError, ValueError):
    """Two fields live on different grids."""


class TraceError(ColdPlasmaError, ValueError):
    """A boundary-trace constraint is violated beyond tolerance."""


class ResidualError(ColdPlasmaError, RuntimeError):
    """A computed solution failed its residual check."""


class ConfigError(ColdPlasmaError, ValueError):
    """A run configuration is malformed or inconsistent."""
