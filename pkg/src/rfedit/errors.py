"""Error taxonomy shared across the engine.

ConfigurationError maps to CLI exit code 2; assertion/validation failures in
experiment runs are reported as data (exit code 1), not exceptions.
"""


class RfeditError(Exception):
    """Base class for all engine errors."""


class ConfigurationError(RfeditError):
    """Invalid configuration: malformed config file, misaligned windows,
    non-divisible step counts, bad schedules."""


class DomainError(RfeditError):
    """Input outside an operation's domain: bad time range, unknown
    condition id, undefined parametrization point."""


class NumericalError(RfeditError):
    """Non-finite value produced during stepping; message carries the step
    index and time where it occurred."""
