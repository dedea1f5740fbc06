"""Exception types raised by the numerical kernels."""


class EllipChainError(Exception):
    """Base class for all package errors."""


class PoleProximity(EllipChainError, ValueError):
    """Argument lies within the pole guard of a lattice point."""


class DivisionNearZero(EllipChainError, ValueError):
    pass


class InvalidSite(EllipChainError, ValueError):
    pass


class InvalidM(EllipChainError, ValueError):
    pass


class TooLarge(EllipChainError, ValueError):
    pass


class DimensionCap(EllipChainError, ValueError):
    pass


class ZeroVector(EllipChainError, ValueError):
    pass


class NonRealEnergy(EllipChainError, ArithmeticError):
    pass


class DegenerateT(EllipChainError, ValueError):
    """Two same-colour auxiliary parameters coincide."""


class BranchAmbiguity(EllipChainError, ArithmeticError):
    pass


class NoConvergence(EllipChainError, RuntimeError):
    """Newton iteration failed; ``iterate`` holds the last state for diagnosis."""

    def __init__(self, message, iterate=None, residual=None):
        super().__init__(message)
        self.iterate = iterate
        self.residual = residual
