"""Exception hierarchy shared by every module."""


class BoostError(Exception):
    """Base class for all errors raised by parboost."""


class ParameterError(BoostError, ValueError):
    """An argument violates a documented precondition."""


class EvaluationError(BoostError, IndexError):
    """A hypothesis was evaluated outside its domain."""


class DegenerateClassifierError(BoostError):
    """A linear classifier has no voting weight (all alphas are zero)."""


class AbsoluteContinuityError(ParameterError):
    """P puts mass where Q has none, so a divergence is undefined."""


class ConstructionError(BoostError, RuntimeError):
    """A randomized construction exhausted its retry budget."""


class ResourceError(BoostError, MemoryError):
    """A requested computation exceeds the configured resource budget."""


class ProtocolViolation(BoostError):
    """A learner broke the query protocol (too many queries or rounds)."""


class NumericalError(BoostError, ArithmeticError):
    """Floating point broke an invariant (e.g. a weight underflowed to zero)."""


class DiagnosticFailure(BoostError, AssertionError):
    """An identity or inequality that must hold exactly was violated."""


class DataError(BoostError, ValueError):
    """A dataset file is malformed."""
