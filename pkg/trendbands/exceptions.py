"""Error hierarchy shared by the library and the command-line front end."""


class TrendBandsError(Exception):
    """Base class; `exit_code` is what the CLI returns for it."""

    exit_code = 3


class UsageError(TrendBandsError):
    exit_code = 1


class InvalidInputError(TrendBandsError, ValueError):
    exit_code = 1


class InvalidConfigError(TrendBandsError, ValueError):
    exit_code = 1


class DataError(TrendBandsError):
    """Input file problems; carries the offending 1-based line when known."""

    exit_code = 2

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class InsufficientDataError(TrendBandsError):
    pass


class DegenerateFitError(TrendBandsError):
    pass


class NoSelectionError(TrendBandsError):
    pass


class NoBandError(TrendBandsError):
    pass


class FitError(TrendBandsError):
    pass


class CovarianceRepairError(TrendBandsError):
    pass
