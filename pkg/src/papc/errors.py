"""Exception types shared across the package."""


class DimensionError(ValueError):
    """An input has the wrong shape, size, or an inconsistent dimension."""


class ParameterError(ValueError):
    """A scalar parameter is outside its admissible domain."""


class TuningError(RuntimeError):
    """Step-size tuning failed to bracket the rate-optimal root."""


class DivergenceError(RuntimeError):
    """The iteration produced non-finite values.

    Attributes
    ----------
    iteration : int
        Index of the iteration at which divergence was detected.
    """

    def __init__(self, iteration, message=None):
        self.iteration = iteration
        super().__init__(message or f"non-finite iterate at iteration {iteration}")


class MetricError(RuntimeError):
    """The weighted primal-dual metric evaluated to a negative quadratic form."""


class ParseError(ValueError):
    """A data file could not be parsed.

    Attributes
    ----------
    line : int or None
        One-based line number of the offending record, when known.
    """

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class FormatError(ValueError):
    """A binary file does not carry a supported magic/format."""
