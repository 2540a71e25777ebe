"""Exception hierarchy for ccb.

Library code raises these; only the command line turns them into exit codes.
"""


class CcbError(Exception):
    """Base class for every error raised by ccb."""


class DomainError(CcbError, ValueError):
    """An argument lies outside the domain where the quantity is defined."""


class InfeasibleLevelError(CcbError):
    """The requested error level cannot be certified by the refined bound.

    Below tau_minus the only certifiable deviation of the sum is the trivial
    one, b_bar * N.
    """

    def __init__(self, tau, tau_minus):
        self.tau = tau
        self.tau_minus = tau_minus
        super().__init__(
            f"error level tau={tau:.6g} is not above tau_minus={tau_minus:.6g}; "
            "only the trivial bound b_bar*N can be certified"
        )


class UnboundedError(CcbError):
    """The linear relaxation has no finite optimum."""


class ConfigError(CcbError):
    """An experiment configuration cannot be used as given."""
