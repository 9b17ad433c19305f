"""Exception hierarchy shared by every module and mapped to CLI exit codes."""


class DeviceRankError(Exception):
    """Base class for all package errors."""


class DataError(DeviceRankError, ValueError):
    """Malformed or inconsistent input data (corpus, targets, vector files)."""


class UnembeddableError(DataError):
    """A document produced no usable vector."""

    def __init__(self, doc_id, skipped=()):
        self.doc_id = doc_id
        self.skipped = tuple(skipped)
        msg = f"unembeddable document {doc_id!r}"
        if self.skipped:
            msg += f" (skipped tokens: {', '.join(self.skipped)})"
        super().__init__(msg)


class MissingIdError(DataError, LookupError):
    """An identifier could not be resolved."""


class ContractError(DeviceRankError):
    """A backend or caller broke an interface contract (dims, roles, backends)."""


class TransportError(DeviceRankError):
    """An embedding provider could not be reached or kept failing."""

    def __init__(self, message, status=None):
        self.status = status
        super().__init__(message)
