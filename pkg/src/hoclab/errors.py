"""Exception hierarchy. CLI exit codes are keyed on these classes."""


class HocError(Exception):
    """Base class for all package errors."""


class ConfigurationError(HocError, ValueError):
    """Invalid grid bounds, malformed config documents, bad parameters."""


class ModelError(HocError, ValueError):
    """Fitness or mutation data violating positivity/normalization."""


class NumericalError(HocError, RuntimeError):
    """Bracket failures, overflow, regime misclassification."""


class UnsupportedError(HocError, ValueError):
    """Operation requested in a regime where it is not defined."""


class DegenerateCriticalError(UnsupportedError):
    """Critical regime with 1/a not square integrable against Q: no normalizable h."""


class DomainError(HocError, ValueError):
    """Input outside the domain of an entropy function or norm (e.g. x log x of a negative value)."""
