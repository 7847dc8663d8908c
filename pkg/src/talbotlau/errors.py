"""Exception hierarchy shared by all subsystems.

The CLI maps these onto its exit-code contract: usage errors exit 1,
input/configuration problems exit 2, numerical failures exit 3.
"""


class DomainError(ValueError):
    """An argument violates a physical or mathematical precondition."""


class ConfigurationError(ValueError):
    """A simulation setup is unusable (grid too coarse, window too narrow, ...)."""


class InputError(ValueError):
    """A file or configuration could not be parsed."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NumericalError(RuntimeError):
    """An iterative numerical procedure failed to converge."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ViewSkip(Exception):
    """A single analysis view was dropped; carries the reason."""

    def __init__(self, reason: str):
        self.reason = reason
        super().__init__(reason)
