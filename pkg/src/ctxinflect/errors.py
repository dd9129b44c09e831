"""Exception hierarchy shared by every module."""


class InflectError(Exception):
    """Base class for all errors raised by ctxinflect."""


class ShapeError(InflectError, ValueError):
    pass


class NumericError(InflectError, FloatingPointError):
    pass


class DomainError(InflectError, ValueError):
    pass


class StateError(InflectError, RuntimeError):
    pass


class ParseError(InflectError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class FormatError(ParseError):
    pass


class DataError(InflectError, ValueError):
    pass


class LabelError(InflectError, KeyError):
    pass


class AlignmentError(InflectError, ValueError):
    pass


class VersionError(InflectError):
    pass


class CorruptError(InflectError):
    pass
