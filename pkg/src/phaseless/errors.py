"""Exception types; each maps to a CLI exit code."""


class PhaselessError(Exception):
    exit_code = 1


class ValidationError(PhaselessError, ValueError):
    """Invalid parameters or inconsistent inputs."""

    exit_code = 2


class FormatError(PhaselessError, OSError):
    """Unreadable, corrupted, or mismatched data file."""

    exit_code = 3

    def __init__(self, path, message):
        self.path = str(path)
        super().__init__(f"{self.path}: {message}")


class BudgetExceeded(PhaselessError):
    """The series model was asked for more samples than configured."""

    exit_code = 4
