"""Exception types shared across the package."""


class InvalidConfiguration(ValueError):
    """Raised for inconsistent layouts, scenes or experiment configs."""


class DegenerateBisector(ValueError):
    """Source and focal directions cancel; no mirror normal exists."""


class ContractViolation(RuntimeError):
    """A call was made with state that does not satisfy its precondition."""


class IncompatibleCheckpoint(ValueError):
    """Checkpoint dimensions do not match the requested configuration."""


class DegenerateTileWarning(UserWarning):
    """A tile fell back to its rest normal."""
