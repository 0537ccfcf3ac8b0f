"""Exception types raised across the package."""


class SrnError(Exception):
    """Base class for all library errors."""


class ZeroMatrix(SrnError, ValueError):
    pass


class NonConvergence(SrnError, RuntimeError):
    """Power iteration missed its tolerance; ``triplet`` holds the best iterate."""

    def __init__(self, message, triplet=None, n_iter=None, residual=None):
        super().__init__(message)
        self.triplet = triplet
        self.n_iter = n_iter
        self.residual = residual


class DimensionTooLarge(SrnError, ValueError):
    pass


class DimensionMismatch(SrnError, ValueError):
    pass


class Infeasible(SrnError):
    """The requested stable rank cannot be met while keeping the top-k spectrum."""

    def __init__(self, message, r=None, bound=None):
        super().__init__(message)
        self.r = r
        self.bound = bound


class InvalidTarget(SrnError, ValueError):
    """Target stable rank outside the operation's precondition."""


class DegeneratePair(SrnError, ValueError):
    """A Lipschitz ratio was requested for two identical inputs."""


class ZeroOutput(SrnError, ValueError):
    pass


class ZeroMargin(SrnError, ValueError):
    pass


class MalformedCsv(SrnError, ValueError):
    def __init__(self, message, line=None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


class ParseError(SrnError, ValueError):
    def __init__(self, message, line=None, column=None):
        where = ""
        if line is not None:
            where = f"parse error at line {line}"
            if column is not None:
                where += f", column {column}"
            where += ": "
        super().__init__(where + message)
        self.line = line
        self.column = column
