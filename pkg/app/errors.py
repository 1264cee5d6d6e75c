"""Typed errors shared by the services, the CLI and the HTTP API.

Every error carries the process exit code used by ``atm`` and the HTTP status
returned by the API exception handler.
"""


class AtmError(Exception):
    """Base class of every error raised on purpose by the toolkit."""

    exit_code: int = 1
    status_code: int = 500

    def __init__(self, message: str, **details):
        super().__init__(message)
        self.message = message
        self.details = details


class PresentationSyntaxError(AtmError):
    exit_code = 2
    status_code = 422

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}", line=line, column=column)
        self.line = line
        self.column = column


class PresentationValueError(AtmError):
    """Well-formed input with an invalid value (conflict, ℓ < 2, unknown family)."""

    exit_code = 3
    status_code = 422


class WordTooLongError(AtmError):
    exit_code = 4
    status_code = 422


class NonConformingPresentationError(AtmError):
    """Lcm ambiguity or gcd non-uniqueness: the presentation breaks the semilattice axioms."""

    exit_code = 5
    status_code = 409


class GarsideSetTooLargeError(AtmError):
    exit_code = 6
    status_code = 409


class IrreducibilityRequiredError(AtmError):
    exit_code = 7
    status_code = 409


class NoPerronRootError(AtmError):
    exit_code = 8
    status_code = 409


class PerronConvergenceError(AtmError):
    exit_code = 9
    status_code = 500


class PerronStructureError(AtmError):
    """The dominant eigenvalue is not simple, or several eigenvalues share its modulus."""

    exit_code = 10
    status_code = 409


class CwgConditionError(AtmError):
    """w⁻·r = 0 or ℓ·w⁺ = 0."""

    exit_code = 11
    status_code = 409


class EmptyPathSpaceError(AtmError):
    exit_code = 12
    status_code = 422


class ConsistencyError(AtmError):
    """Two independent computations of the same quantity disagree."""

    exit_code = 13
    status_code = 500


class NotMobiusValuationError(AtmError):
    exit_code = 14
    status_code = 422


class StatisticNotDefinedError(AtmError):
    exit_code = 15
    status_code = 422


ERROR_TYPES: tuple[type[AtmError], ...] = (
    PresentationSyntaxError,
    PresentationValueError,
    WordTooLongError,
    NonConformingPresentationError,
    GarsideSetTooLargeError,
    IrreducibilityRequiredError,
    NoPerronRootError,
    PerronConvergenceError,
    PerronStructureError,
    CwgConditionError,
    EmptyPathSpaceError,
    ConsistencyError,
    NotMobiusValuationError,
    StatisticNotDefinedError,
)


USAGE_EXIT_CODE = 64


def exit_code_table() -> str:
    """Render the exit-code table printed by ``atm --help``."""
    rows = [f"  {err.exit_code:>3}  {err.__name__}" for err in ERROR_TYPES]
    return "exit codes:\n    0  success\n    1  unexpected error\n" + "\n".join(rows) + f"\n  {USAGE_EXIT_CODE:>3}  usage error"
