"""Exception types shared across the package."""


class DomainError(ValueError):
    """A parameter lies outside the range an operation is defined on."""


class UndefinedAUCError(ValueError):
    """AUC requested for a population with only one outcome class."""


class InfeasibleConstraintError(ValueError):
    """No threshold rule satisfies the requested constraint."""

    def __init__(self, message, groups=()):
        super().__init__(message)
        self.groups = tuple(groups)


class SchemaError(ValueError):
    """Input table does not match the declared schema."""
