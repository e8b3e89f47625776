"""
Error hierarchy for qmldesk.

Every error carries a stable ``code`` that the CLI puts in its
machine-readable error report.
"""


class QmlDeskError(Exception):
    """Base class for all qmldesk errors."""

    code = "qmldesk_error"

    def to_dict(self) -> dict:
        """Convert to dict for error reports."""
        return {"code": self.code, "message": str(self)}


# -------------------------------------------------------------------------
# Input validation
# -------------------------------------------------------------------------


class ZeroVector(QmlDeskError, ValueError):
    """A vector that must be nonzero has zero norm."""

    code = "zero_vector"

    def __init__(self, message: str = "vector has zero norm", row: int | None = None):
        if row is not None:
            message = f"{message} (row {row})"
        super().__init__(message)
        self.row = row


class DimensionOverflow(QmlDeskError, ValueError):
    """A register would exceed the configured qubit cap."""

    code = "dimension_overflow"


class DimensionMismatch(QmlDeskError, ValueError):
    """Operands do not share the required dimension."""

    code = "dimension_mismatch"


class TargetOutOfRange(QmlDeskError, ValueError):
    """A qubit index is outside the register or repeated."""

    code = "target_out_of_range"


class NonUnitaryGate(QmlDeskError, ValueError):
    """A gate matrix fails the unitarity check."""

    code = "non_unitary_gate"


class EmptyKeepSet(QmlDeskError, ValueError):
    """A partial trace was asked to keep no qubits."""

    code = "empty_keep_set"


class InvalidDensityMatrix(QmlDeskError, ValueError):
    """A matrix is not Hermitian, trace-one and positive semidefinite."""

    code = "invalid_density_matrix"


class InvalidPlan(QmlDeskError, ValueError):
    """An exponentiation plan cannot reach the requested accuracy."""

    code = "invalid_plan"


class SizeCapExceeded(QmlDeskError, ValueError):
    """A Boltzmann machine is too large for exact enumeration."""

    code = "size_cap_exceeded"


class EmptyTrainingSet(QmlDeskError, ValueError):
    """A perceptron training set has no instances."""

    code = "empty_training_set"


class ZeroTarget(QmlDeskError, ValueError):
    """The perceptron target vector y - b is identically zero."""

    code = "zero_target"


class NotPositiveDefinite(QmlDeskError, ValueError):
    """A quadratic form has no unique minimum."""

    code = "not_positive_definite"


class ParseError(QmlDeskError, ValueError):
    """A dataset file could not be parsed."""

    code = "parse_error"

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ConfigError(QmlDeskError, ValueError):
    """A setting or experiment parameter is invalid."""

    code = "config_error"


class UnknownAlgorithm(QmlDeskError, ValueError):
    """An experiment names an algorithm that does not exist."""

    code = "unknown_algorithm"


class InsufficientRuns(QmlDeskError, ValueError):
    """Too few runs to fit a scaling exponent."""

    code = "insufficient_runs"


# -------------------------------------------------------------------------
# Algorithm failures
# -------------------------------------------------------------------------


class EigenvalueOutOfRange(QmlDeskError):
    """Eigenvalue phases fall outside the clock register window."""

    code = "eigenvalue_out_of_range"


class SingularSystem(QmlDeskError):
    """No eigencomponent of the right-hand side survives the cutoff."""

    code = "singular_system"


class ZeroSolution(SingularSystem):
    """The stationary point is the zero vector, which has no state."""

    code = "zero_solution"


class InconsistentSystem(SingularSystem):
    """A linear system has no exact solution and least squares is off."""

    code = "inconsistent_system"


class PostSelectionFailed(QmlDeskError):
    """Every sampled post-selection attempt failed."""

    code = "post_selection_failed"


class NoMarkedItems(QmlDeskError):
    """Grover search in auto mode was given nothing to find."""

    code = "no_marked_items"


class BudgetExhausted(QmlDeskError):
    """Minimum finding ran out of oracle queries."""

    code = "budget_exhausted"


class NonConvergence(QmlDeskError):
    """An iterative classical baseline did not converge."""

    code = "non_convergence"


class MeanFieldNonConvergence(NonConvergence):
    """Mean-field magnetizations did not reach the tolerance."""

    code = "mean_field_non_convergence"

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual
