"""Exception types shared across the package."""


class AoLoopError(Exception):
    """Base class for all package errors."""


class ParameterError(AoLoopError, ValueError):
    """Invalid argument or precondition violation."""


class SingularityError(AoLoopError, ArithmeticError):
    """Closed loop evaluated on its stability boundary (1 + GK = 0)."""


class BandwidthUndefinedError(AoLoopError):
    """No 0 dB sensitivity crossing found; caller must supply a bandwidth."""


class DegenerateLinearizationError(AoLoopError):
    """Linearization point P_c vanishes at a grid frequency."""


class SynthesisInfeasibleError(AoLoopError):
    """The convexified program admits no solution."""


class ConfigError(AoLoopError, ValueError):
    """Run configuration failed to parse or validate."""
