"""Exception hierarchy shared by all modules."""


class NehariError(Exception):
    """Base class for errors raised by the package."""


class InvalidConfigError(NehariError, ValueError):
    pass


class DomainMismatchError(NehariError, ValueError):
    pass


class HypothesisViolation(NehariError):
    """A structural hypothesis on the problem data fails.

    ``hypothesis`` carries the label of the failing condition, e.g. ``"(A,lambda)"``.
    """

    def __init__(self, hypothesis, message=""):
        self.hypothesis = hypothesis
        super().__init__(f"hypothesis {hypothesis} violated: {message}" if message else
                         f"hypothesis {hypothesis} violated")


class ZeroFieldError(NehariError, ValueError):
    pass


class DegenerateFieldError(NehariError, ValueError):
    pass


class ProjectionFailure(NehariError):
    pass


class NotSignChangingError(NehariError, ValueError):
    pass


class SetupError(NehariError):
    pass
