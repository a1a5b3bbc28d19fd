"""Exception types shared across the toolkit.

Validation failures double as ValueError, lookup failures as LookupError,
and transport-level failures as ConnectionError, so callers that do not
care about the fine-grained class can catch the builtin instead.
"""


class FingerprintError(Exception):
    """Base class for every toolkit-specific failure."""


class LengthMismatch(FingerprintError, ValueError):
    """Vector operands of unequal length."""


class IndexOutOfRange(FingerprintError, ValueError):
    """A class index falls outside the label space."""


class DuplicateClass(FingerprintError, ValueError):
    """A response names the same class index twice."""


class EmptyInput(FingerprintError, ValueError):
    """An aggregate was asked for over zero elements."""


class InvalidConfig(FingerprintError, ValueError):
    """A configuration object violates its invariants."""


class UnknownProbe(FingerprintError, LookupError):
    """Probe id outside the profiled probe set."""


class UnknownArchitecture(FingerprintError, LookupError):
    """Architecture id outside the profiled architecture set."""


class EmptyTraces(FingerprintError, ValueError):
    """Timing aggregation over an empty trace list."""


class KTooSmall(FingerprintError, ValueError):
    """Not enough weight variants for a split-half baseline."""


class InconsistentDims(FingerprintError, ValueError):
    """Cube or template dimensions disagree."""


class OracleError(FingerprintError, RuntimeError):
    """A model query failed during cube collection; message carries the cell."""


class SchemaMismatch(FingerprintError, ValueError):
    """An ingested file does not match the documented schema."""


class MissingCell(FingerprintError, ValueError):
    """An ingested response log leaves a (probe, architecture, variant) cell empty."""


class ProbabilityOutOfRange(FingerprintError, ValueError):
    """A probability outside [0, 1] in an ingested or constructed record."""


class LoggingDisabled(FingerprintError, RuntimeError):
    """The service request log was read but logging is off."""


class ZooLoadFailure(FingerprintError, RuntimeError):
    """A zoo file could not be read or parsed."""


class BindFailure(FingerprintError, OSError):
    """The service could not bind its address."""


class TransportError(FingerprintError, ConnectionError):
    """The client could not complete an HTTP exchange."""


class ProtocolError(FingerprintError, RuntimeError):
    """The client received a payload it cannot interpret."""


class RemoteError(FingerprintError, RuntimeError):
    """The service answered with a protocol-level error payload."""

    def __init__(self, code: str):
        super().__init__(code)
        self.code = code
