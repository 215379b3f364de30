"""Exception types shared across the toolkit."""


class RelaydivError(Exception):
    """Base class for all toolkit errors."""


class InvalidParameterError(RelaydivError, ValueError):
    """An argument violates a documented precondition."""


class SchemeInvalidError(InvalidParameterError):
    """A relay scheme violates the unitary-scaling constraint G G^H = I/N."""

    def __init__(self, index: int, deviation: float):
        self.index = index
        self.deviation = deviation
        super().__init__(
            f"matrix {index}: max |G G^H - I/N| = {deviation:.3e} exceeds tolerance"
        )


class ResourceLimitError(RelaydivError):
    """A requested computation exceeds a configured size cap."""

    def __init__(self, message: str, required: int, allowed: int):
        self.required = required
        self.allowed = allowed
        super().__init__(f"{message}: required {required}, allowed {allowed}")


class InsufficientDataError(RelaydivError):
    """Not enough qualifying data points for a fit."""


class InternalConsistencyError(RelaydivError):
    """Two redundant computations disagree; indicates a bug, not bad input."""


class FileFormatError(RelaydivError):
    """A scheme/codebook/config file failed to parse."""

    def __init__(self, path: str, line: int, column: int, message: str):
        self.path = path
        self.line = line
        self.column = column
        super().__init__(f"{path}:{line}:{column}: {message}")


class ConfigError(RelaydivError):
    """An experiment configuration is missing keys or holds invalid values."""
