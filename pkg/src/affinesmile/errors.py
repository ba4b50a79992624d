"""Exception and warning types raised across the package."""

from __future__ import annotations


class AffineSmileError(Exception):
    """Base class for all package errors."""


class RiccatiExplosionError(AffineSmileError):
    """The Riccati solution blew up while integrating backward in time."""

    def __init__(self, time: float, message: str | None = None):
        self.time = float(time)
        super().__init__(message or f"Riccati solution exploded at t={self.time:.6g}")


class DegenerateError(AffineSmileError):
    """A quantity required to be nonzero (denominator, variance) vanished."""


class DomainError(AffineSmileError):
    """A state lies outside the admissible domain of the model."""


class CapabilityError(AffineSmileError):
    """The requested engine or dimension is not supported for this model."""


class UnsupportedNuError(CapabilityError):
    """A closed form was requested for a transform argument it does not cover."""


class ConsistencyError(AffineSmileError):
    """An internal cross-check failed (e.g. an imaginary residue was too large)."""


class ConvergenceError(AffineSmileError):
    """An iterative or series evaluation did not converge."""


class PoleError(AffineSmileError):
    """A special function was evaluated at one of its poles."""


class DegenerateParameterError(PoleError):
    """A special-function parameter sits on a removable or essential degeneracy."""


class ArbitrageBoundsError(ValueError, AffineSmileError):
    """An option price violates the static no-arbitrage bounds."""

    def __init__(self, side: str, price: float, bound: float):
        self.side = side
        self.price = price
        self.bound = bound
        super().__init__(f"price {price!r} violates the {side} no-arbitrage bound {bound!r}")


class TruncationError(AffineSmileError):
    """Fourier inversion was sensitive to the truncation of the frequency axis."""


class SchemeError(AffineSmileError):
    """The chosen Monte Carlo scheme left the admissible domain."""


class OutOfRegimeWarning(UserWarning):
    """An approximate implied volatility is nonpositive (expansion out of regime)."""


class FellerWarning(UserWarning):
    """A square-root factor violates the Feller condition 2*kappa*theta > delta**2."""


class NearPoleWarning(UserWarning):
    """A special function parameter was close to a pole and was regularised."""
