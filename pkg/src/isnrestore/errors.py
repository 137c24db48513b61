"""Exception types shared across the package."""


class RestorationError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(RestorationError, ValueError):
    """A tensor extent does not conform to what an operation needs."""

    def __init__(self, message, axis=None):
        super().__init__(message if axis is None else f"{message} (axis: {axis})")
        self.axis = axis


class InvalidSpecError(RestorationError, ValueError):
    """A degradation or regularizer parameter lies outside its valid range."""


class InvalidChannelError(RestorationError, ValueError):
    pass


class SizeError(RestorationError, ValueError):
    pass


class ParseError(RestorationError):
    """Malformed binary input; ``offset`` is the byte position of the fault."""

    def __init__(self, message, offset):
        super().__init__(f"{message} at byte offset {offset}")
        self.offset = offset


class UnsupportedFormatError(RestorationError):
    pass


class NumericalError(RestorationError, ArithmeticError):
    def __init__(self, message, iteration=None, trace=None):
        if iteration is not None:
            message = f"{message} (iteration {iteration})"
        super().__init__(message)
        self.iteration = iteration
        self.trace = trace


class ContractError(RestorationError, RuntimeError):
    """A documented runtime contract was violated."""


class MissingParameterError(RestorationError, KeyError):
    def __init__(self, missing, unexpected=()):
        self.missing = sorted(missing)
        self.unexpected = sorted(unexpected)
        parts = []
        if self.missing:
            parts.append("missing: " + ", ".join(self.missing))
        if self.unexpected:
            parts.append("unexpected: " + ", ".join(self.unexpected))
        super().__init__("; ".join(parts) or "parameter set mismatch")

    def __str__(self):
        return self.args[0]
