"""Exception types shared across the package."""


class DomainError(ValueError):
    """Raised for inputs outside an operation's numeric domain (NaN, inf)."""


class InvalidDigitError(ValueError):
    """Raised when a digit value falls outside its position's alphabet."""


class ContractError(RuntimeError):
    """Raised when a runtime contract is violated (dimension mismatch,
    empty candidate set, non-finite loss)."""


class ConfigError(ValueError):
    """Configuration error carrying a JSON-pointer-style field path."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")
