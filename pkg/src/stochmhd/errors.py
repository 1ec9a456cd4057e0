"""Exception hierarchy shared by every module."""


class InvalidParameterError(ValueError):
    """A parameter is outside its admissible range."""


class AliasingError(InvalidParameterError):
    """Grid too coarse to represent the requested band-limited field."""


class HypothesisViolationError(ValueError):
    """A noise model breaks the growth/Lipschitz hypotheses (e.g. L >= 1)."""


class UnsupportedConfigurationError(ValueError):
    """The requested combination of options is not supported."""


class BlowUpError(RuntimeError):
    """Non-finite state encountered during time integration."""

    def __init__(self, time, message="non-finite state", paths=None):
        self.time = float(time)
        self.paths = list(paths) if paths is not None else []
        detail = f"{message} at t={self.time:.6g}"
        if self.paths:
            detail += f" (paths {self.paths[:8]})"
        super().__init__(detail)
