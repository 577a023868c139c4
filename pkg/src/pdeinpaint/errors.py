"""Exception hierarchy shared across the package."""


class PdeInpaintError(Exception):
    pass


class ShapeMismatch(PdeInpaintError, ValueError):
    pass


class IndivisibleDims(ShapeMismatch):
    pass


class ZeroNormTruth(PdeInpaintError, ValueError):
    pass


class ContainerError(PdeInpaintError):
    pass


class BadMagic(ContainerError):
    pass


class VersionUnsupported(ContainerError):
    pass


class PayloadLengthMismatch(ContainerError):
    pass


class BadGridSize(PdeInpaintError, ValueError):
    pass


class CflViolation(PdeInpaintError, ValueError):
    pass


class NonFiniteState(PdeInpaintError, ArithmeticError):
    pass


class NonFiniteLoss(NonFiniteState):
    def __init__(self, message, sigma=None, index=None):
        super().__init__(message)
        self.sigma = sigma
        self.index = index


class ResonantAlpha(PdeInpaintError, ValueError):
    pass


class RateOutOfRange(PdeInpaintError, ValueError):
    pass


class FrameOutOfRange(PdeInpaintError, ValueError):
    pass


class ZeroSigma(PdeInpaintError, ValueError):
    pass


class ConfigMismatch(PdeInpaintError, ValueError):
    pass
