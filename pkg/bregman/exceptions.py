""" Errors raised by the Bregman divergence solvers """


class BregmanError(Exception):
    """Base class for all errors raised by the bregman package"""


class DomainError(BregmanError, ValueError):
    """A point lies outside the domain of a potential"""


class InvalidArgumentError(BregmanError, ValueError):
    """
    An argument is malformed: bad shapes, singular matrices, infeasible levels.
    field names the offending input when the caller can tell
    """

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class ConvergenceError(BregmanError):
    """
    An iterative solve did not converge. The last residual and the number of
    iterations used are kept, and solvers attach whatever partial result they
    had when the failure happened
    """

    def __init__(self, message, residual=float("nan"), iterations=0, partial=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations
        self.partial = partial
