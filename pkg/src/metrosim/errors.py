"""Exception types shared across the package."""


class MetrosimError(Exception):
    """Base class for all package errors."""


class ParseError(MetrosimError):
    """A file or config did not match its schema. Message names the offending key."""


class ValidationError(MetrosimError):
    """Structurally parseable input violated a domain invariant."""


class ConfigError(MetrosimError):
    """Scenario configuration is unusable (bad key, bad type, bad range)."""


class InvariantViolation(MetrosimError):
    """A simulation invariant failed mid-run.

    Carries the month and invariant name so batch reports can locate the failure.
    """

    def __init__(self, month: int, invariant: str, detail: str = ""):
        self.month = month
        self.invariant = invariant
        self.detail = detail
        msg = f"month {month}: invariant '{invariant}' violated"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)
