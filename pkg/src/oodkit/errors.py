"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: usage problems exit 1, data problems
exit 2, numeric failures exit 3.
"""


class OodkitError(Exception):
    """Base class for all toolkit errors."""


class UsageError(OodkitError):
    """Bad invocation: unknown flag, unknown config key, type mismatch."""


class DataError(OodkitError):
    """Malformed or inconsistent input data (files, alignment, values)."""


class NumericError(OodkitError):
    """Numeric failure at runtime, e.g. divergence to non-finite loss."""
