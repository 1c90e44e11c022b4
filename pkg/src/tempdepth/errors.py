"""Exception hierarchy shared by all modules."""


class TempDepthError(Exception):
    pass


class SizeError(TempDepthError, ValueError):
    """Grid dimensions are missing, too small, or do not match."""


class PreconditionError(TempDepthError, ValueError):
    pass


class EmptyInputError(TempDepthError, ValueError):
    """No valid pixels left to compute a statistic over."""


class FormatError(TempDepthError, ValueError):
    pass


class TruncationError(FormatError):
    pass


class DegenerateGradientError(TempDepthError, ArithmeticError):
    pass


class NumericError(TempDepthError, ArithmeticError):
    pass
