"""Exception hierarchy. Every category carries the CLI exit code it maps to."""


class FracBesselError(Exception):
    exit_code = 2


class ParameterError(FracBesselError, ValueError):
    """A precondition on user-supplied parameters was violated."""

    exit_code = 1


class ConfigError(ParameterError):
    exit_code = 1


class NumericalError(FracBesselError):
    exit_code = 2


class ConvergenceError(NumericalError):
    """Iteration budget exhausted. ``best`` holds the best iterate seen."""

    def __init__(self, message, best=None, history=None):
        super().__init__(message)
        self.best = best
        self.history = history or []


class ThresholdError(FracBesselError):
    """Requested parameter lies beyond a computed threshold (e.g. lambda >= lambda_0)."""

    exit_code = 3


class FieldIOError(FracBesselError, OSError):
    exit_code = 4


EXIT_CODES = {
    "config": ConfigError.exit_code,
    "numeric": NumericalError.exit_code,
    "threshold": ThresholdError.exit_code,
    "io": FieldIOError.exit_code,
}


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, FracBesselError):
        return exc.exit_code
    if isinstance(exc, OSError):
        return FieldIOError.exit_code
    return NumericalError.exit_code
