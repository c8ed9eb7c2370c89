"""Exception hierarchy shared by every module."""


class MirrorCtlError(Exception):
    """Base class for library errors."""


class DimensionError(MirrorCtlError, ValueError):
    """Input vector or matrix does not match the declared dimension."""


class NewtonDivergence(MirrorCtlError, ArithmeticError):
    """Damped Newton hit its iteration cap or met a non-SPD Hessian."""


class UnboundedConjugate(MirrorCtlError, ArithmeticError):
    """The sup defining a Fenchel conjugate appears to be infinite."""


class NonFiniteState(MirrorCtlError, ArithmeticError):
    """Integration produced inf or NaN (usually: step too large)."""


class NonSPDHessian(MirrorCtlError, ArithmeticError):
    """A Hessian that must be positive definite failed to factorize."""


class HorizonExceeded(MirrorCtlError):
    """The value function did not decay below threshold within the time cap."""


class ConfigError(MirrorCtlError, ValueError):
    """Experiment configuration failed to parse or validate."""


class NegativeDivergence(MirrorCtlError, ArithmeticError):
    """A Bregman divergence came out below the roundoff floor."""
