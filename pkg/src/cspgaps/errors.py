"""Exception types shared across the package."""


class BudgetExceededError(RuntimeError):
    """An enumeration/optimization budget was exceeded; carries the required budget."""

    def __init__(self, message, required=None):
        super().__init__(message)
        self.required = required


class LocalContradictionError(RuntimeError):
    """A product distribution normalized to zero mass: the covered constraints
    are locally contradictory, which signals that the expansion preconditions
    of the construction failed for this instance."""


class LocalityError(ValueError):
    """A requested set exceeds the family's locality radius."""


class UnsupportedFormError(ValueError):
    """Encoding form not defined for this alphabet size."""


class InternalInvariantError(AssertionError):
    """A postcondition that the algorithm itself guarantees was violated."""


class ConfigError(ValueError):
    """Invalid pipeline configuration (CLI exit code 2)."""
