"""Exception hierarchy shared across the library.

The CLI maps these onto its exit-code contract: InputError -> 2,
FormatError -> 3, TrainingError -> 4.
"""


class GenHashError(Exception):
    """Base class for all library errors."""


class InputError(GenHashError):
    """Caller passed inconsistent or out-of-range arguments."""


class FormatError(GenHashError):
    """A file on disk does not match its declared binary format."""


class TrainingError(GenHashError):
    """Training aborted (non-finite objective or gradients)."""

    def __init__(self, message, step=None, last_good_step=None, params=None):
        super().__init__(message)
        self.step = step
        self.last_good_step = last_good_step
        self.params = params


class CapabilityError(GenHashError):
    """Requested an exact/enumeration operation beyond its size guard."""
