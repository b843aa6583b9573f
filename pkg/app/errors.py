from __future__ import annotations


class CasimirError(Exception):
    """Base class for every failure raised by the library."""

    exit_code = 2


class ConfigurationError(CasimirError):
    exit_code = 1


class PolicyError(ConfigurationError):
    """A truncation policy refuses the requested evaluation."""

    def __init__(self, message: str, required_lambda_max: float | None = None):
        super().__init__(message)
        self.required_lambda_max = required_lambda_max


class DomainError(CasimirError, ValueError):
    pass


class RootBracketError(CasimirError):
    pass


class SolverWindowError(CasimirError):
    def __init__(self, message: str, window: tuple[float, float] | None = None):
        super().__init__(message)
        self.window = window


class CertificationError(CasimirError):
    def __init__(
        self,
        message: str,
        suspects: list | None = None,
        windows: list[tuple[float, float]] | None = None,
    ):
        super().__init__(message)
        self.suspects = list(suspects or [])
        self.windows = list(windows or [])


class ContourError(CasimirError):
    pass
