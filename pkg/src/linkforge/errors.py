"""Exception hierarchy shared by all linkforge modules."""


class LinkforgeError(Exception):
    """Base class for all linkforge errors."""


class ParseError(LinkforgeError):
    """Malformed input that could not be parsed.

    Carries ``line_no`` when the input is line-delimited.
    """

    def __init__(self, message: str, line_no: int | None = None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


class ValidationError(LinkforgeError):
    """Well-formed input that violates a data invariant."""


class DomainError(LinkforgeError):
    """Operation applied outside its mathematical domain (e.g. empty input)."""


class ConfigurationError(LinkforgeError):
    """Inconsistent or incomplete run configuration."""


class ContractError(LinkforgeError):
    """A caller broke an inter-module contract (e.g. decision coverage gap)."""


class IntegrityError(LinkforgeError):
    """External service returned internally inconsistent data."""


class TransportError(LinkforgeError):
    """External service unreachable or persistently failing."""


class AssemblyError(LinkforgeError):
    """Candidate bundle could not be assembled from the given rankings."""


class AuthError(LinkforgeError):
    """Unknown or missing annotator token."""
