"""Exception hierarchy shared across the toolkit."""

from __future__ import annotations


class DerailcastError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(DerailcastError):
    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class ConfigError(DerailcastError, ValueError):
    pass


class CorpusParseError(DerailcastError):
    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}" if where else message)


class StructuralError(CorpusParseError):
    """A record parsed but has the wrong shape (e.g. wrong number of turns)."""


class TemplateError(DerailcastError):
    pass


class AnnotationParseError(DerailcastError):
    def __init__(self, message: str, turn: int | None = None, token: str | None = None):
        self.turn = turn
        self.token = token
        super().__init__(message)


class AnnotationError(DerailcastError):
    def __init__(self, message: str, last_error: Exception | None = None, attempts: int = 0):
        self.last_error = last_error
        self.attempts = attempts
        super().__init__(message)


class BackendError(DerailcastError):
    pass


class TransportError(BackendError):
    """Retriable failure talking to an external backend."""


class ContextOverflowError(BackendError):
    def __init__(self, length: int, capacity: int):
        self.length = length
        self.capacity = capacity
        super().__init__(f"input of {length} tokens exceeds capacity {capacity}")


class TrainingError(BackendError):
    pass


class NotTrainedError(BackendError):
    pass


class SerializationError(DerailcastError):
    pass


class GenerationError(BackendError):
    pass


class UndefinedStatisticError(DerailcastError, ValueError):
    pass


class ForecastError(DerailcastError):
    def __init__(self, conversation_id: str, cause: Exception):
        self.conversation_id = conversation_id
        self.cause = cause
        super().__init__(f"forecast for {conversation_id} failed: {type(cause).__name__}: {cause}")
