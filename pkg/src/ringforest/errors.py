"""Shared exception taxonomy.

The service layer maps these onto HTTP status codes, so new error kinds
belong here rather than as bare ValueErrors in module code.
"""


class RingForestError(Exception):
    """Base class for every error raised by this package."""


class RangeError(RingForestError, ValueError):
    """A numeric argument is outside its documented range."""


class ConfigError(RingForestError, ValueError):
    """A configuration value or scenario field is invalid; names the key."""


class MembershipError(RingForestError, KeyError):
    """The referenced node is not a live member of the overlay or tree."""


class BootstrapError(RingForestError):
    """Join attempted through a seed node that is not alive."""


class AuthorityError(RingForestError):
    """Operation reserved for the tree master was called from another node."""


class AlreadyExistsError(RingForestError):
    """Attempt to create something that is already registered."""


class UnrecoverableStateError(RingForestError):
    """Replicated state is gone; the computation must restart from scratch."""


class ConditioningError(RingForestError, ArithmeticError):
    """A matrix is numerically singular or a policy entry fell below the floor."""


class OracleUnavailableError(RingForestError):
    """Regret evaluation was requested without a fully specified reward model."""


class UnsupportedSizeError(RingForestError, ValueError):
    """Problem size exceeds a documented hard limit (e.g. multicast hop count)."""


class InvariantViolation(RingForestError, AssertionError):
    """An internal invariant failed; indicates a bug, aborts the run."""
