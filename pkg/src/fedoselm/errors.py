"""Exception hierarchy shared by every module of the package."""


class FedOselmError(Exception):
    """Base class for all errors raised by fedoselm."""


class DimensionError(FedOselmError, ValueError):
    """Operand shapes do not line up."""


class NotSymmetricError(FedOselmError, ValueError):
    """A matrix required to be symmetric is not, within tolerance."""


class SingularMatrixError(FedOselmError, ArithmeticError):
    """Factorization hit a non-positive (or numerically zero) pivot.

    ``pivot`` is the zero-based index of the failing pivot, or ``None`` when
    the failure is not tied to a single pivot (e.g. a scalar denominator).
    ``chunk_index`` is filled in by streaming helpers so callers can tell
    which chunk of a sequence broke the recursion.
    """

    def __init__(self, message, pivot=None, chunk_index=None):
        super().__init__(message)
        self.pivot = pivot
        self.chunk_index = chunk_index

    def __str__(self):
        msg = super().__str__()
        if self.chunk_index is not None:
            msg = f"{msg} (chunk {self.chunk_index})"
        return msg


class IncompatibleTopologyError(FedOselmError, ValueError):
    """Two models or intermediate results do not share topology and seed."""

    def __init__(self, message, seed_a=None, seed_b=None):
        super().__init__(message)
        self.seed_a = seed_a
        self.seed_b = seed_b


class ConfigurationError(FedOselmError, ValueError):
    """A required setting (threshold, pattern, ...) is missing or invalid."""


class FormatError(FedOselmError, ValueError):
    """Bytes or files do not follow the expected on-disk/wire layout."""


class TransportError(FedOselmError, ConnectionError):
    """A federation request could not be delivered. Retrying may succeed."""

    def __init__(self, message, peer_id=None):
        super().__init__(message)
        self.peer_id = peer_id
