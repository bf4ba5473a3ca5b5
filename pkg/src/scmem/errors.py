"""Typed errors shared across the engine."""


class ScmError(Exception):
    """Base class for every error this package raises on purpose."""


class SchemaError(ScmError):
    """Structurally invalid data: wrong embedding dimension, broken record."""


class InputError(ScmError):
    """A caller-supplied value the operation cannot accept."""


class ContractError(ScmError):
    """A precondition was violated (e.g. the turn clock moving backwards)."""


class BackendError(ScmError):
    """A generation or embedding backend failed."""

    retryable = False


class BackendTimeoutError(BackendError):
    retryable = True


class BackendRateLimitError(BackendError):
    retryable = True


class BackendTransportError(BackendError):
    retryable = True


class PersistenceError(ScmError):
    """A memory log or checkpoint file could not be read or written."""


class PersistVersionError(PersistenceError):
    """The memory log header declares an unsupported format version."""


class PersistFormatError(PersistenceError):
    """Malformed record in a memory log file."""

    def __init__(self, message: str, line_number: int):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number
