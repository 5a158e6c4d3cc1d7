"""Exception hierarchy shared by all modules."""


class IsacError(Exception):
    """Base class for every error raised by this package."""


class NotPsdError(IsacError, ValueError):
    pass


class SingularError(IsacError, ArithmeticError):
    pass


class DimMismatchError(IsacError, ValueError):
    pass


class OutOfDomainError(IsacError, ValueError):
    pass


class PilotShortageError(IsacError, ValueError):
    pass


class InfeasibleError(IsacError):
    pass


class MaxIterError(IsacError):
    pass


class LineSearchFailed(IsacError):
    pass


class DegenerateChannelError(IsacError, ValueError):
    pass


class RankDeficientError(IsacError, ArithmeticError):
    pass


class ConfigError(IsacError, ValueError):
    pass
