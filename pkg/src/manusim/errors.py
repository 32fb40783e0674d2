"""Shared exception types."""


class ManusimError(Exception):
    """Base class for all package errors."""


class DomainError(ManusimError):
    """An input lies outside the operation's documented domain."""


class ValidationError(ManusimError):
    """One or more inputs failed validation; carries an itemized list."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))
