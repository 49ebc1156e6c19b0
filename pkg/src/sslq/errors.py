"""Exception and warning types raised across the package."""


class SSLQError(Exception):
    """Base class for all package errors."""


class DimensionError(SSLQError, ValueError):
    pass


class NotRegular(SSLQError):
    pass


class IllConditioned(UserWarning):
    """A transform's condition number exceeded the configured cap (not fatal)."""


class CNotZero(SSLQError):
    pass


class CNotEqualA(SSLQError):
    pass


class SingularTransform(SSLQError):
    pass


class AssumptionViolated(SSLQError):
    def __init__(self, message, failed=()):
        super().__init__(message)
        self.failed = list(failed)


class KConditionsFailed(SSLQError):
    def __init__(self, message, failed=()):
        super().__init__(message)
        self.failed = list(failed)


class GainBlowup(SSLQError):
    pass


class FactorizationFailure(SSLQError):
    pass


class Divergence(SSLQError):
    pass


class NoConvergence(SSLQError):
    pass


class RankDeficient(SSLQError):
    pass


class Unstable(SSLQError):
    pass


class NotScalar(SSLQError):
    pass


class ProblemFileError(SSLQError, ValueError):
    pass
