"""Exception hierarchy shared by all kgeft modules."""


class KGEFTError(Exception):
    """Base class for every error raised by the package."""


class GridMismatch(KGEFTError):
    """Two fields that must share a grid do not."""


class UnsupportedWeight(KGEFTError):
    """A weighted norm was requested for a field that reaches the box boundary."""


class CausalityBudgetExceeded(KGEFTError):
    """The box is too small for the requested final time: L < 2(R + T)."""


class StepRejected(KGEFTError):
    """A time step produced non-finite values."""


class QuadratureFailure(KGEFTError):
    """Adaptive quadrature did not reach the requested tolerance."""


class MinimizationFailed(KGEFTError):
    """Constrained descent did not converge from any seed."""


class SupportSamplingEmpty(KGEFTError):
    """No sample fell inside the support being probed."""


class StencilOutOfRange(KGEFTError):
    """A finite-difference stencil leaves the admissible region."""


class GridTooLarge(KGEFTError):
    """The direct bilinear sum would be too expensive on this grid."""


class InvalidHolderTriple(KGEFTError):
    """Exponents violate 1/r = 1/p + 1/q."""


class InsufficientJetDepth(KGEFTError):
    """A jet is too short for the requested number of time derivatives."""


class BudgetExceeded(KGEFTError):
    """Initial data exceed the declared size budget E."""


class NonConvergence(KGEFTError):
    """A fixed-point iteration failed to contract."""


class TailFitInconclusive(KGEFTError):
    """A power-law tail fit could not certify integrability."""


class NotConverged(KGEFTError):
    """A scattered state has not settled within the run."""


class ConventionMismatch(KGEFTError):
    """Two profiles use incompatible half-wave conventions."""


class CertificationMissing(KGEFTError):
    """A run lacks the residual certification required by the caller."""


class ParseError(KGEFTError):
    """A configuration file could not be parsed."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f" (line {line}" + (f", column {column})" if column is not None else ")")
        super().__init__(message + where)


class ValidationError(KGEFTError):
    """A configuration violates a named rule."""

    def __init__(self, rule, message):
        self.rule = rule
        super().__init__(f"{rule}: {message}")


class MissingArtifact(KGEFTError):
    """A file listed in a manifest is absent."""


class SweepFailed(KGEFTError):
    """Fewer runs than a slope fit needs completed successfully."""
