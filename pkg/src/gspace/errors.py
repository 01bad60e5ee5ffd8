"""Exception types raised across the package."""


class GSpaceError(Exception):
    """Base class for all errors raised by gspace."""


class ShapeError(GSpaceError, ValueError):
    pass


class LabelError(GSpaceError, ValueError):
    pass


class EmptyBatchError(GSpaceError, ValueError):
    pass


class DomainError(GSpaceError, ValueError):
    """An argument lies outside (R\\{0})^m or a scale is not positive."""


class EnumerationTooLarge(GSpaceError):
    pass


class DegeneratePathError(GSpaceError, ZeroDivisionError):
    """A basis-path value is zero, so the gradient transform is singular."""


class DegenerateUpdateError(GSpaceError, ZeroDivisionError):
    """A path ratio is zero and cannot be allocated onto weights."""


class StepRejected(GSpaceError):
    """A G-SGD step would drive a basis value or weight to exactly zero."""


class FormatError(GSpaceError, ValueError):
    pass


class TruncationError(FormatError):
    pass


class PairingError(GSpaceError, ValueError):
    pass


class MetricsParseError(GSpaceError, ValueError):
    def __init__(self, path, line_no, message):
        super().__init__(f"{path}, line {line_no}: {message}")
        self.path = path
        self.line_no = line_no


class ConfigError(GSpaceError, ValueError):
    """Config validation failure; ``problems`` lists every issue found."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
