"""Exception and warning types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid dimension, flag, or argument combination."""


class FeatureMapOverflowError(FloatingPointError):
    """Positive random feature exponent exceeded the safe range."""


class FlopOverflowError(OverflowError):
    """A FLOP count exceeded the unsigned 64-bit range."""


class TransferError(ValueError):
    """Up-training parameter transfer hit an incompatible shape."""


class DenominatorClampWarning(RuntimeWarning):
    """A kernelized attention row denominator was clamped away from zero."""
