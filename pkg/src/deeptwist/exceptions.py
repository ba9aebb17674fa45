"""Exception hierarchy shared by every subpackage."""


class DeepTwistError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(DeepTwistError, ValueError):
    """Operand shapes are incompatible."""


class NonFiniteError(DeepTwistError, ValueError):
    """An array contains NaN or Inf."""


class DomainError(DeepTwistError, ValueError):
    """A scalar argument lies outside its admissible range."""


class RankError(DeepTwistError, ArithmeticError):
    """A least-squares system is numerically rank deficient."""


class ConvergenceError(DeepTwistError, ArithmeticError):
    """An iterative kernel hit its iteration cap without converging."""

    def __init__(self, message, iterations):
        super().__init__(message)
        self.iterations = iterations


class ConfigError(DeepTwistError, ValueError):
    """A distortion or experiment configuration is invalid."""


class IdxFormatError(DeepTwistError, ValueError):
    """An IDX file failed to parse.

    ``field`` names the header field or section that was wrong.
    """

    def __init__(self, message, field):
        super().__init__(message)
        self.field = field


class CheckpointError(DeepTwistError, ValueError):
    """A model checkpoint file is malformed."""


class CompressedFormError(DeepTwistError, AssertionError):
    """One or more layers are not in their assigned compressed form."""
