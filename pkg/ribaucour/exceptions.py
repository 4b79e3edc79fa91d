"""
Custom exceptions for the ribaucour transformation engine.

These exceptions give clear error semantics for the failure modes of the
numerical pipelines: malformed potentials, invalid run configurations and
numerical aborts (singular data, blow-up, inconsistent input).

Residuals that merely exceed a tolerance are not raised; they are recorded
as failed checks in a report. Only conditions that make the requested
computation meaningless abort with one of the exceptions below.
"""

from typing import Optional, Sequence


class RibaucourError(Exception):
    """Base exception for ribaucour errors."""


class ExpressionSyntaxError(RibaucourError):
    """
    Raised when a potential expression does not conform to the grammar.

    Attributes:
        message: Human-readable description of the error.
        offset: 1-based character column where parsing failed.
        __cause__: Optional underlying exception that triggered this error.
    """

    def __init__(
        self,
        message: str = "Invalid expression",
        *,
        offset: int,
        cause: Optional[Exception] = None,
    ):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset
        if cause is not None:
            self.__cause__ = cause


class UnknownIdentifierError(ExpressionSyntaxError):
    """Raised when an expression names a function or constant that does not exist."""

    def __init__(
        self,
        name: str,
        *,
        offset: int,
        cause: Optional[Exception] = None,
    ):
        super().__init__(f"Unknown identifier '{name}'", offset=offset, cause=cause)
        self.name = name


class VariableIndexError(RibaucourError):
    """
    Raised when an expression references a variable beyond the declared dimension.

    Attributes:
        index: The referenced variable index (1-based, as written).
        n_vars: Number of variables declared by the context.
    """

    def __init__(
        self,
        message: str = "Variable index out of range",
        *,
        index: int,
        n_vars: int,
        cause: Optional[Exception] = None,
    ):
        super().__init__(f"{message}: u{index} with n_vars={n_vars}")
        self.index = index
        self.n_vars = n_vars
        if cause is not None:
            self.__cause__ = cause


class ExpressionDomainError(RibaucourError):
    """
    Raised when an expression is evaluated outside its domain of definition.

    Typical causes are the logarithm of a non-positive value, a division by
    zero or a square root of a negative value.

    Attributes:
        point: The evaluation point (coordinates) where the failure happened.
        operation: Name of the failing operation.
    """

    def __init__(
        self,
        message: str = "Expression evaluated outside its domain",
        *,
        point: Sequence[float] | None = None,
        operation: str | None = None,
        cause: Optional[Exception] = None,
    ):
        detail = message
        if operation:
            detail += f" in {operation}"
        if point is not None:
            detail += f" at point {tuple(float(x) for x in point)}"
        super().__init__(detail)
        self.point = None if point is None else tuple(float(x) for x in point)
        self.operation = operation
        if cause is not None:
            self.__cause__ = cause


class ConfigError(RibaucourError):
    """
    Raised when a run configuration or initial-data file is invalid.

    Attributes:
        location: JSON line/column or dotted key path of the offending entry.
    """

    def __init__(
        self,
        message: str = "Invalid configuration",
        *,
        location: str | None = None,
        cause: Optional[Exception] = None,
    ):
        super().__init__(f"{message} [{location}]" if location else message)
        self.location = location
        if cause is not None:
            self.__cause__ = cause


class GridError(RibaucourError):
    """Raised when a sampling grid or field has an invalid shape."""

    def __init__(
        self,
        message: str = "Invalid grid",
        *,
        cause: Optional[Exception] = None,
    ):
        super().__init__(message)
        if cause is not None:
            self.__cause__ = cause


class NoRegularNodeError(RibaucourError):
    """Raised when a sampled map has no node with full-rank differential."""

    def __init__(
        self,
        message: str = "No regular node on the grid",
        *,
        cause: Optional[Exception] = None,
    ):
        super().__init__(message)
        if cause is not None:
            self.__cause__ = cause


class SingularOmegaError(RibaucourError):
    """
    Raised when Ω (or one of its blocks) is singular on the whole working mask.

    Attributes:
        location: Name of the matrix or block that failed.
    """

    def __init__(
        self,
        message: str = "Omega is singular on every node",
        *,
        location: str | None = None,
        cause: Optional[Exception] = None,
    ):
        super().__init__(f"{message} [{location}]" if location else message)
        self.location = location
        if cause is not None:
            self.__cause__ = cause


class CodazziResidualError(RibaucourError):
    """
    Raised when (φ, β) violates the normal compatibility condition.

    Attributes:
        residual: Measured max residual.
        tolerance: Tolerance the residual was compared against.
    """

    def __init__(
        self,
        message: str = "Data inconsistent with the normal compatibility condition",
        *,
        residual: float,
        tolerance: float,
        cause: Optional[Exception] = None,
    ):
        super().__init__(f"{message} (residual {residual:.3e} > {tolerance:.3e})")
        self.residual = residual
        self.tolerance = tolerance
        if cause is not None:
            self.__cause__ = cause


class CommutatorError(RibaucourError):
    """
    Raised when two Codazzi tensors or Hessians that must commute do not.

    Attributes:
        pair: Indices (0-based) of the failing pair.
        residual: Max Frobenius norm of the commutator.
        tolerance: Tolerance the residual was compared against.
    """

    def __init__(
        self,
        message: str = "Commutator condition violated",
        *,
        pair: tuple[int, int],
        residual: float,
        tolerance: float,
        cause: Optional[Exception] = None,
    ):
        super().__init__(
            f"{message} for pair {pair} (residual {residual:.3e} > {tolerance:.3e})"
        )
        self.pair = pair
        self.residual = residual
        self.tolerance = tolerance
        if cause is not None:
            self.__cause__ = cause


class GenericityError(RibaucourError):
    """
    Raised when a principal minor of an assembled Ω falls below the floor.

    Attributes:
        minor: Multi-index (0-based) of the violating principal minor.
        value: Smallest absolute determinant found on the mask.
    """

    def __init__(
        self,
        message: str = "Principal minor vanishes",
        *,
        minor: tuple[int, ...],
        value: float,
        cause: Optional[Exception] = None,
    ):
        super().__init__(f"{message}: minor {minor} reaches {value:.3e}")
        self.minor = minor
        self.value = value
        if cause is not None:
            self.__cause__ = cause


class IndependenceError(RibaucourError):
    """Raised when scalar transforms are not independent (φ rank, ℱ injectivity)."""

    def __init__(
        self,
        message: str = "Scalar transforms are not independent",
        *,
        cause: Optional[Exception] = None,
    ):
        super().__init__(message)
        if cause is not None:
            self.__cause__ = cause


class BlowUpError(RibaucourError):
    """
    Raised when a marched solution exceeds the blow-up cap.

    Attributes:
        location: Grid index where the cap was exceeded.
        value: Offending absolute value.
    """

    def __init__(
        self,
        message: str = "Solution blew up",
        *,
        location: tuple[int, ...],
        value: float,
        cause: Optional[Exception] = None,
    ):
        super().__init__(f"{message} at node {location} (|value| = {value:.3e})")
        self.location = location
        self.value = value
        if cause is not None:
            self.__cause__ = cause


class ConvergenceError(RibaucourError):
    """
    Raised when a fixed-point iteration does not settle.

    Attributes:
        sweeps: Number of sweeps performed.
        change: Max update of the last sweep.
    """

    def __init__(
        self,
        message: str = "Iteration did not settle",
        *,
        sweeps: int,
        change: float,
        cause: Optional[Exception] = None,
    ):
        super().__init__(f"{message} after {sweeps} sweeps (last change {change:.3e})")
        self.sweeps = sweeps
        self.change = change
        if cause is not None:
            self.__cause__ = cause


class OrthogonalityError(RibaucourError):
    """
    Raised when a frame is not orthogonal where it has to be.

    Attributes:
        drift: Max entry of |XᵗX − I|.
    """

    def __init__(
        self,
        message: str = "Frame lost orthogonality",
        *,
        drift: float,
        cause: Optional[Exception] = None,
    ):
        super().__init__(f"{message} (|XᵗX − I| = {drift:.3e})")
        self.drift = drift
        if cause is not None:
            self.__cause__ = cause


class DegenerateKernelError(RibaucourError):
    """
    Raised when the bilinear map controlling a Dupin family has a nontrivial kernel.

    Attributes:
        point: Parameter coordinates of the offending sample node.
    """

    def __init__(
        self,
        message: str = "Bilinear map has a nontrivial kernel",
        *,
        point: Sequence[float],
        cause: Optional[Exception] = None,
    ):
        coords = tuple(float(x) for x in point)
        super().__init__(f"{message} at point {coords}")
        self.point = coords
        if cause is not None:
            self.__cause__ = cause


class FrameMismatchError(RibaucourError):
    """Raised when two immersions compared node by node have different normal ranks."""

    def __init__(
        self,
        message: str = "Normal ranks differ",
        *,
        cause: Optional[Exception] = None,
    ):
        super().__init__(message)
        if cause is not None:
            self.__cause__ = cause


class ValidationError(RibaucourError):
    """
    Raised when assembled data fails one of the defining identities.

    Attributes:
        check: Name of the failing check.
        residual: Measured max residual.
        tolerance: Tolerance the residual was compared against.
    """

    def __init__(
        self,
        message: str = "Assembled data failed validation",
        *,
        check: str,
        residual: float,
        tolerance: float,
        cause: Optional[Exception] = None,
    ):
        super().__init__(
            f"{message}: {check} (residual {residual:.3e} > {tolerance:.3e})"
        )
        self.check = check
        self.residual = residual
        self.tolerance = tolerance
        if cause is not None:
            self.__cause__ = cause


class RunFailedError(RibaucourError):
    """Raised when a command fails for an unexpected reason (with `__cause__` set)."""

    def __init__(
        self,
        message: str = "Run failed",
        *,
        command: str | None = None,
        cause: Optional[Exception] = None,
    ):
        super().__init__(message)
        self.command = command
        if cause is not None:
            self.__cause__ = cause
