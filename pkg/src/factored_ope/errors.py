"""Exception types shared across the toolkit."""


class FactoredOpeError(Exception):
    """Base class for all toolkit-specific errors."""


class CoverageViolationError(FactoredOpeError):
    """The evaluation policy puts mass where the behaviour policy has none."""


class DataPolicyMismatchError(FactoredOpeError):
    """An observed action has zero probability under the declared behaviour
    policy, so the dataset cannot have been generated by it."""


class DegenerateWeightsError(FactoredOpeError):
    """A self-normalised estimator's weight denominator is exactly zero."""


class InvalidAbstractionError(FactoredOpeError):
    """Transition marginals differ across states sharing an abstraction, so
    the declared abstraction does not support a factored sub-transition."""


class EnumerationLimitError(FactoredOpeError):
    """An exact-enumeration request exceeds the configured size guard."""


class SizingError(FactoredOpeError):
    """A sweep's replicate demand exceeds the master dataset size."""
