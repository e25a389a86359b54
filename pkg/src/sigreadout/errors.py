"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """Raised when an operation receives data that violates its preconditions."""


class ConfigError(InvalidInputError):
    """A configuration document is malformed; ``field`` names the offending key."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class BundleError(InvalidInputError):
    """A trace bundle on disk is inconsistent with its manifest."""

    def __init__(self, field, message, path=None):
        self.field = field
        self.path = path
        where = f" ({path})" if path is not None else ""
        super().__init__(f"{field}: {message}{where}")
