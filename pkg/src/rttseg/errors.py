"""Exception types raised across the package."""


class RttsegError(Exception):
    """Base class for all package errors."""


class EmptyWindow(RttsegError, ValueError):
    pass


class InvalidTick(RttsegError, ValueError):
    pass


class ParseError(RttsegError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SchemaError(RttsegError, ValueError):
    pass


class NotFound(RttsegError, LookupError):
    def __init__(self, msm_id, prb_id):
        self.msm_id = msm_id
        self.prb_id = prb_id
        super().__init__(f"no measurement for msm_id={msm_id} prb_id={prb_id}")


class TransportError(RttsegError, IOError):
    pass


class DimensionError(RttsegError, ValueError):
    pass


class InconsistentState(RttsegError, AssertionError):
    pass


class EmptyData(RttsegError, ValueError):
    pass


class TooShort(RttsegError, ValueError):
    pass


class AllMissing(RttsegError, ValueError):
    pass


class DomainError(RttsegError, ValueError):
    pass


class DegenerateComponent(RttsegError, ArithmeticError):
    pass


class LengthMismatch(RttsegError, ValueError):
    pass


class TooFew(RttsegError, ValueError):
    pass
