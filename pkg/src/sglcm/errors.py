"""Exception types shared across the package."""


class InputError(ValueError):
    """Invalid argument values or inconsistent dimensions."""


class CapacityError(InputError):
    """A requested enumeration would exceed the configured size cap."""


class DataError(ValueError):
    """Malformed input data (bad CSV cell, out-of-range category, ...)."""


class NumericalError(RuntimeError):
    """A numerical routine produced non-finite values and aborted."""
