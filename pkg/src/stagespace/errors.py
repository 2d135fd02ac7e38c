"""Exception taxonomy shared across the package.

Precondition violations on plain library calls (bad boxes, mismatched
dimensions, length mismatches) raise ValueError; these classes cover
conditions a caller may want to handle individually.
"""


class StagingError(Exception):
    """Base class for staging-system failures."""


class CapacityError(StagingError):
    """A tier cannot satisfy an allocation (arena or chunk table full)."""


class LifecycleError(StagingError):
    """A chunk handle is stale, freed, or was never written."""


class ConfigError(StagingError):
    """Invalid or inconsistent configuration."""


class ProtocolError(StagingError):
    """Malformed wire data: bad magic, truncated frame, or bogus payload."""


class ConnectionClosed(ProtocolError):
    """The peer closed the byte stream mid-conversation."""


class RemoteError(StagingError):
    """An ERR response from a server, carrying the wire error code."""

    def __init__(self, code: int, message: str = ""):
        super().__init__(f"remote error {code}: {message}" if message else f"remote error {code}")
        self.code = code
        self.message = message
