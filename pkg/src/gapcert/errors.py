"""Exception hierarchy shared across the package."""


class GapCertError(Exception):
    """Base class for every error raised by gapcert."""


class DimensionError(GapCertError, ValueError):
    pass


class HorizonError(GapCertError, ValueError):
    """A time query or measure window falls outside a signal's stored horizon."""


class NumericalError(GapCertError, ArithmeticError):
    pass


class ParameterError(GapCertError, ValueError):
    pass


class SpecError(GapCertError, ValueError):
    """Malformed robustness-measure tree."""


class DomainError(GapCertError, ValueError):
    pass


class BudgetError(GapCertError, ValueError):
    pass


class AdapterError(GapCertError, RuntimeError):
    """A system adapter failed to produce a rollout (crash, timeout, error reply)."""


class ProtocolError(AdapterError):
    """An external simulator replied with something that violates the wire protocol."""


class UnterminatedError(GapCertError, RuntimeError):
    """The BO loop hit ``max_iters`` before the regret bound fell below tolerance.

    The partial trace and dataset are attached so callers can report them.
    """

    def __init__(self, message, trace=None, dataset=None):
        super().__init__(message)
        self.trace = list(trace or [])
        self.dataset = dataset


class ConfigError(GapCertError, ValueError):
    """Invalid experiment config; the message names the file and line."""
