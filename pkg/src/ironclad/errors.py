"""Exception types shared across the package."""


class InvalidParameterError(ValueError):
    """A parameter is outside its domain. ``field`` names the offending one."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class DomainError(ValueError):
    """An operation was called outside the range where its formula holds."""


class DegenerateParameterError(ValueError):
    """Parameters for which a model quantity is undefined (e.g. no honest blocks)."""


class NoRootError(RuntimeError):
    """A bracketing root search could not find a sign change."""


class BoundaryMaximizerError(RuntimeError):
    """A maximizer landed on the boundary of its interval."""
