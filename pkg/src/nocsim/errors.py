"""Exception types shared across the simulator."""


class NocsimError(Exception):
    """Base class for all simulator errors."""


class ConfigError(NocsimError):
    """Invalid configuration, topology parameters, or workload description."""


class InvalidHeaderError(NocsimError):
    """Header field out of range (e.g. payload length above the 512-byte cap)."""


class HeaderCorruptError(NocsimError):
    """Header failed error correction (uncorrectable multi-bit error)."""


class PayloadCorruptError(NocsimError):
    """Payload checksum mismatch."""


class FramingError(NocsimError):
    """Flit sequence is not a well-formed packet (truncated / bad ordering)."""


class CreditProtocolError(NocsimError):
    """Credit counter driven out of [0, initial]; indicates a simulator bug."""


class UnroutableError(NocsimError):
    """The deterministic route requires a disabled or absent port."""


class InvalidRegisterError(NocsimError):
    """Unknown register id, or write to a read-only register."""


class InvariantViolation(NocsimError):
    """A runtime monitor detected inconsistent simulator state."""
