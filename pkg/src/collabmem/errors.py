"""Exception hierarchy shared by every module.

The CLI maps these onto process exit codes (see ``EXIT_CODES``).
"""


class CollabMemError(Exception):
    """Base class for all package errors."""


class ConfigError(CollabMemError, ValueError):
    """Invalid configuration value; the message names the offending field."""


class DataError(CollabMemError, ValueError):
    """Malformed or inconsistent data (episodes, reports, trajectories)."""


class ParseError(DataError):
    def __init__(self, path, line: int, reason: str):
        self.path = str(path)
        self.line = line
        super().__init__(f"{self.path}: line {line}: {reason}")


class ValidationError(DataError):
    def __init__(self, episode_id, field: str, reason: str):
        self.episode_id = episode_id
        self.field = field
        super().__init__(f"episode {episode_id}: field {field!r}: {reason}")


class PreconditionError(CollabMemError, ValueError):
    """Caller violated a documented precondition."""


class ParameterError(CollabMemError, ValueError):
    """Policy parameters do not fit the agent's feature map."""


class FeasibilityError(CollabMemError, ValueError):
    """An action is not feasible in the given state."""


class StepError(CollabMemError):
    """A failure inside one MDP step, annotated with the step index."""

    def __init__(self, step: int, cause: Exception):
        self.step = step
        self.cause = cause
        super().__init__(f"step {step}: {type(cause).__name__}: {cause}")


class StorageError(CollabMemError, OSError):
    def __init__(self, path, reason: str):
        self.path = str(path)
        super().__init__(f"{self.path}: {reason}")


EXIT_CODES = {
    ConfigError: 1,
    DataError: 2,
    FeasibilityError: 2,
    ParameterError: 2,
    StepError: 2,
    StorageError: 3,
}


def exit_code_for(exc: BaseException) -> int:
    for cls in type(exc).__mro__:
        if cls in EXIT_CODES:
            return EXIT_CODES[cls]
    if isinstance(exc, OSError):
        return 3
    return 2
