"""Exception types shared across the package.

Every failure mode raises a semantic exception naming the offending
quantity; nothing is silently clamped or NaN-propagated.
"""


class ModelSpecError(ValueError):
    """Raised when a model specification string cannot be parsed.

    Carries the character position of the first offending token in
    ``position`` when known.
    """

    def __init__(self, message, position=None):
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)
        self.position = position


class PreconditionError(ValueError):
    """An argument violates a documented domain constraint."""


class ConfigurationError(ValueError):
    """A config file or config object is malformed or inconsistent."""


class TailUnderflowError(ArithmeticError):
    """Smoothed density underflowed to zero at an evaluation point.

    The score is undefined there; callers must widen r or move x
    rather than divide by zero.
    """

    def __init__(self, x, r):
        super().__init__(
            f"smoothed density underflowed at x={x!r} with r={r}; "
            "score undefined this far into the tail"
        )
        self.x = x
        self.r = r


class EstimationError(RuntimeError):
    """An estimator could not produce a result at the given settings.

    The message names the smallest sufficient change (more samples,
    larger r, ...) when one is known.
    """
