"""Exception types shared across the package.

UsageError and DataError drive exit codes in the CLI (1 and 2) and HTTP
status codes in the service (400 and 409).
"""


class WindstatesError(Exception):
    """Base class for all windstates errors."""


class UsageError(WindstatesError):
    """A caller supplied invalid parameters or called steps out of order."""


class DataError(WindstatesError):
    """The input data cannot support the requested computation."""
