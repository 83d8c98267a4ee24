"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Raised when a spec, config document or option is invalid.

    The message always names the offending parameter so CLI users can fix
    their config; the CLI maps this to exit status 2.
    """

    def __init__(self, parameter: str, message: str):
        self.parameter = parameter
        super().__init__(f"{parameter}: {message}")


class EmbeddingFormatError(ValueError):
    """Raised when an embedding file fails to parse or validate."""
