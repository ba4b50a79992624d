"""Confluent hypergeometric functions of the first and second kind.

Only the small-argument regime needed for the Fong-Vasicek bond coefficient is
supported: Kummer's ``M`` is summed as a power series and Tricomi's ``U`` is
assembled from two ``M`` series through the reflection formula. There is no
large-``|z|`` asymptotic branch.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import ConvergenceError, DegenerateParameterError, NearPoleWarning, PoleError

# half-width of the window around an integer b in which U is interpolated
_INTEGER_B_WINDOW = 1e-5


@dataclass(frozen=True)
class CHFArgs:
    """Series controls shared by :func:`kummer_m` and :func:`tricomi_u`."""

    tol: float = 1e-14
    max_terms: int = 500

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_terms < 1:
            raise ValueError("max_terms must be >= 1")


DEFAULT_CHF = CHFArgs()


def _nonpositive_integer(z: complex) -> bool:
    z = complex(z)
    return z.imag == 0.0 and z.real <= 0 and z.real == round(z.real)


def gamma_euler(z):
    """Euler's Gamma function for real or complex arguments.

    Raises :class:`PoleError` at the nonpositive integers.
    """
    z_arr = np.asarray(z, dtype=complex)
    if any(_nonpositive_integer(v) for v in z_arr.ravel()):
        raise PoleError(f"Gamma has a pole at {z!r}")
    out = special.gamma(z_arr)
    return out[()] if out.ndim == 0 else out


def kummer_m(a, b, z, cfg: CHFArgs = DEFAULT_CHF):
    """Kummer's function ``M(a, b, z) = sum_n (a)_n / (b)_n z^n / n!``.

    ``a`` and ``b`` are scalars; ``z`` may be an array. The Pochhammer symbols
    follow the standard convention ``(a)_0 = 1`` so that ``M(a, b, 0) = 1``.
    """
    a = complex(a)
    b = complex(b)
    if _nonpositive_integer(b):
        raise PoleError(f"M(a, b, z) has a pole at b={b!r}")
    z_arr = np.asarray(z, dtype=complex)
    term = np.ones_like(z_arr)
    total = np.ones_like(z_arr)
    quiet = 0
    for n in range(cfg.max_terms):
        term = term * ((a + n) / (b + n)) * z_arr / (n + 1)
        total = total + term
        small = np.abs(term) <= cfg.tol * np.maximum(1.0, np.abs(total))
        if np.all(small):
            # two quiet terms in a row guard against an accidental tiny term
            quiet += 1
            if quiet >= 2 or not np.any(term):
                break
        else:
            quiet = 0
    else:
        raise ConvergenceError(f"M({a}, {b}, z) did not converge in {cfg.max_terms} terms")
    return total[()] if total.ndim == 0 else total


def _tricomi_reflection(a: complex, b: complex, z: np.ndarray, cfg: CHFArgs) -> np.ndarray:
    first = special.gamma(1 - b) * special.rgamma(a + 1 - b) * kummer_m(a, b, z, cfg)
    second = (
        special.gamma(b - 1)
        * special.rgamma(a)
        * np.power(z, 1 - b)
        * kummer_m(a + 1 - b, 2 - b, z, cfg)
    )
    return first + second


def tricomi_u(a, b, z, cfg: CHFArgs = DEFAULT_CHF, *, on_integer_b: str = "interpolate"):
    """Tricomi's function via ``U = G(1-b)/G(a+1-b) M(a,b,z) + G(b-1)/G(a) z^(1-b) M(a+1-b,2-b,z)``.

    The principal branch is used for ``z**(1-b)``. The formula has removable
    poles at integer ``b``; within ``1e-5`` of an integer ``b`` the value is
    linearly interpolated between ``b = n -/+ 1e-5`` (error O(1e-10)) and a
    :class:`NearPoleWarning` is emitted. Pass ``on_integer_b="raise"`` to get
    :class:`DegenerateParameterError` instead.
    """
    a = complex(a)
    b = complex(b)
    z_arr = np.asarray(z, dtype=complex)
    if np.any(z_arr == 0):
        raise PoleError("U(a, b, z) is singular at z = 0")
    n = round(b.real)
    near_integer = abs(b.imag) < _INTEGER_B_WINDOW and abs(b.real - n) < _INTEGER_B_WINDOW
    if near_integer:
        if on_integer_b == "raise":
            raise DegenerateParameterError(f"U reflection formula is degenerate at integer b={b!r}")
        warnings.warn(
            f"b={b!r} is within {_INTEGER_B_WINDOW:g} of an integer; interpolating U across the pole",
            NearPoleWarning,
            stacklevel=2,
        )
        lo = _tricomi_reflection(a, complex(n - _INTEGER_B_WINDOW, b.imag), z_arr, cfg)
        hi = _tricomi_reflection(a, complex(n + _INTEGER_B_WINDOW, b.imag), z_arr, cfg)
        weight = (b.real - (n - _INTEGER_B_WINDOW)) / (2 * _INTEGER_B_WINDOW)
        out = lo + weight * (hi - lo)
    else:
        out = _tricomi_reflection(a, b, z_arr, cfg)
    return out[()] if out.ndim == 0 else out
