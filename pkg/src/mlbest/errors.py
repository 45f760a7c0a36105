"""Exception hierarchy shared by all mlbest modules."""


class MlbestError(Exception):
    """Base class for every error raised by mlbest."""


class NonSymmetric(MlbestError, ValueError):
    pass


class NonFinite(MlbestError, ValueError):
    pass


class NotApproxPSD(MlbestError, ValueError):
    """A matrix expected to be PSD has a clearly negative eigenvalue."""


class ShapeMismatch(MlbestError, ValueError):
    pass


class DisconnectedGraph(MlbestError, ValueError):
    pass


class GenerationFailed(MlbestError, RuntimeError):
    pass


class ParseError(MlbestError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class InvalidBranch(ParseError):
    pass


class DegenerateSignal(MlbestError, ValueError):
    pass


class NoConvergence(MlbestError, RuntimeError):
    """An iterative solver hit its iteration cap.

    ``result`` carries the best iterate found, ``residual`` the final
    stopping-criterion value.
    """

    def __init__(self, message, result=None, residual=None, iterations=None):
        super().__init__(message)
        self.result = result
        self.residual = residual
        self.iterations = iterations


class SingularW(MlbestError, ArithmeticError):
    pass


class NonPositiveDiagonal(MlbestError, ValueError):
    pass


class InsufficientSamples(MlbestError, ValueError):
    pass


class SingularCovariance(MlbestError, ArithmeticError):
    pass


class ConfigError(MlbestError, ValueError):
    pass
