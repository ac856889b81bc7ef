"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: I/O problems exit 1, validation and
format problems exit 2, partial scenario failures exit 3.
"""


class XlingError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(XlingError):
    """A file or payload exists but its content is malformed."""


class ValidationError(XlingError):
    """An argument, configuration value, or precondition is invalid."""


class TranslationError(XlingError):
    """An external translation request failed after retries."""


class ScenarioError(XlingError):
    """A single experiment scenario could not be assembled or run."""
