"""Explicit implied-volatility expansion up to second order.

Given generator coefficients with Taylor data at ``(x, ytilde)``, the
approximation is ``Sigma_bar_n = Sigma_0 + ... + Sigma_n`` where ``Sigma_0``
is the root-mean integrated ``2 c_00`` and the corrections are polynomials in
scaled Hermite functions of

    xi = (x - k - Sigma_0^2 tau / 2) / (Sigma_0 sqrt(2 tau)).

Every correction is first assembled as a vector of weights on
``(1, H_1, ..., H_4)`` that does not depend on the strike, so a whole smile
costs one set of time integrals.

Time integrals use Chebyshev interpolation of each coefficient on ``[t, T]``
followed by exact integration of the interpolant. Cumulative integrals such as
``I_c(s) = int_t^s c_00`` and ordered double integrals over ``t < s1 < s2 < T``
are then products and antiderivatives of Chebyshev series.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numpy.polynomial import Chebyshev
from numpy.polynomial.hermite import hermval

from .errors import DegenerateError, OutOfRegimeWarning
from .lsv import GeneratorCoefficients

N_HERMITE = 5


@dataclass(frozen=True)
class QuadratureConfig:
    """Chebyshev interpolation degree for the time integrals."""

    degree: int = 64
    max_degree: int = 4096

    def __post_init__(self):
        if self.degree < 2:
            raise ValueError("degree must be >= 2")
        if self.degree > self.max_degree:
            raise ValueError(f"degree {self.degree} exceeds the cap {self.max_degree}")

    def refined(self) -> "QuadratureConfig":
        return QuadratureConfig(2 * self.degree, self.max_degree)


DEFAULT_QUADRATURE = QuadratureConfig()


class TimeIntegralTable:
    """Chebyshev representations of the Taylor coefficients on ``[t, T]``.

    Attributes ``Ic, If, Ih, Ig`` are the cumulative integrals from ``t`` of
    ``c_00, f_00, h_00, g_00``.
    """

    def __init__(self, coeffs: GeneratorCoefficients, t: float, T: float, cfg: QuadratureConfig = DEFAULT_QUADRATURE):
        if not T > t:
            raise ValueError("need T > t")
        self.t = float(t)
        self.T = float(T)
        self.cfg = cfg
        self.domain = [self.t, self.T]
        self.series: dict = {}
        for key, fn in coeffs.taylor.items():
            self.series[key] = Chebyshev.interpolate(
                lambda s, fn=fn: np.broadcast_to(np.asarray(fn(s), dtype=float), np.shape(s)),
                cfg.degree, domain=self.domain,
            )
        zero = Chebyshev([0.0], domain=self.domain)
        self._zero = zero
        self.Ic = self.cumulative("c00")
        self.If = self.cumulative("f00")
        self.Ih = self.cumulative("h00")
        self.Ig = self.cumulative("g00")

    def __getitem__(self, key) -> Chebyshev:
        return self.series.get(key, self._zero)

    def has(self, key) -> bool:
        return key in self.series

    def cumulative(self, key) -> Chebyshev:
        return self[key].integ(lbnd=self.t)

    def single(self, integrand: Chebyshev) -> float:
        """``int_t^T integrand(s) ds``."""
        return float(integrand.integ(lbnd=self.t)(self.T))

    def double(self, outer: Chebyshev, inner: Chebyshev) -> float:
        """``int_t^T ds1 outer(s1) int_{s1}^T ds2 inner(s2)``."""
        tail = -inner.integ(lbnd=self.T)
        return self.single(outer * tail)

    def triple(self, first: Chebyshev, second: Chebyshev, third: Chebyshev) -> float:
        """``int_{t<s1<s2<s3<T} first(s1) second(s2) third(s3)``."""
        tail = -third.integ(lbnd=self.T)
        return self.double(first, second * tail)


def nested_integrals(coeffs: GeneratorCoefficients, t: float, T: float, cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> TimeIntegralTable:
    """Build the integral table shared by every strike of one smile."""
    return TimeIntegralTable(coeffs, t, T, cfg)


@dataclass(frozen=True)
class HermiteContext:
    """Scaled Hermite functions ``H_n(xi) = (-1/(Sigma0 sqrt(2 tau)))^n Hphys_n(xi)``."""

    sigma0: float
    tau: float

    def __post_init__(self):
        if not (self.tau > 0 and self.sigma0 > 0):
            raise ValueError("HermiteContext requires tau > 0 and sigma0 > 0")

    def xi(self, x, k):
        return (np.asarray(x, dtype=float) - np.asarray(k, dtype=float) - 0.5 * self.sigma0**2 * self.tau) / (
            self.sigma0 * math.sqrt(2 * self.tau)
        )

    def basis(self, x, k) -> np.ndarray:
        """Array of shape ``(5, ...)`` with rows ``1, H_1, ..., H_4``."""
        xi = self.xi(x, k)
        scale = -1.0 / (self.sigma0 * math.sqrt(2 * self.tau))
        rows = []
        for n in range(N_HERMITE):
            unit = np.zeros(n + 1)
            unit[-1] = 1.0
            rows.append(scale**n * hermval(xi, unit))
        return np.stack(rows)

    def H(self, n: int, x, k):
        return self.basis(x, k)[n]


def _vec(*pairs) -> np.ndarray:
    """Hermite-weight vector from ``(order, weight)`` pairs."""
    out = np.zeros(N_HERMITE)
    for n, w in pairs:
        out[n] += w
    return out


def sigma0(coeffs: GeneratorCoefficients, t: float, T: float, table: Optional[TimeIntegralTable] = None, cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> float:
    """``Sigma_0 = sqrt((2/tau) int_t^T c_00(s) ds)``."""
    table = table or nested_integrals(coeffs, t, T, cfg)
    total = table.single(table["c00"])
    if not total > 0:
        raise DegenerateError(f"integrated variance must be positive, got {total!r}")
    return math.sqrt(2.0 * total / (T - t))


def _first_order_weights(tb: TimeIntegralTable) -> tuple[np.ndarray, np.ndarray]:
    """Hermite weights of ``tau Sigma_0 Sigma_{1,0}`` and ``tau Sigma_0 Sigma_{0,1}``."""
    a = tb.single(tb["c10"] * tb.Ic)
    w10 = _vec((0, -a), (1, 2 * a))
    w01 = _vec((0, tb.single(tb["c01"] * tb.If)), (1, tb.single(tb["c01"] * tb.Ih)))
    return w10, w01


def _second_order_weights(tb: TimeIntegralTable) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Hermite weights of ``tau Sigma_0`` times the raw (uncorrected) ``Sigma_{2,0}, Sigma_{1,1}, Sigma_{0,2}``."""
    Ic, If, Ih, Ig = tb.Ic, tb.If, tb.Ih, tb.Ig
    c10, c01 = tb["c10"], tb["c01"]
    S, D = tb.single, tb.double

    # (2,0)
    w20 = np.zeros(N_HERMITE)
    if tb.has("c20"):
        c20 = tb["c20"]
        a, b = S(c20 * Ic * Ic), S(c20 * Ic)
        w20 += _vec((2, 4 * a), (1, -4 * a), (0, a + 2 * b))
    if tb.has("c10"):
        a = D(c10 * Ic, c10 * Ic)
        b = D(c10 * Ic, c10)
        w20 += _vec((4, 4 * a), (3, -8 * a), (2, 5 * a + 6 * b), (1, -a - 6 * b), (0, b))

    # (1,1)
    w11 = np.zeros(N_HERMITE)
    if tb.has("c11"):
        c11 = tb["c11"]
        cc_h, cc_f = S(c11 * Ic * Ih), S(c11 * Ic * If)
        w11 += _vec((2, 2 * cc_h), (1, 2 * cc_f - cc_h), (0, -cc_f + S(c11 * Ih)))
    if tb.has("c10") and tb.has("c01"):
        # c10 at the earlier time, c01 at the later
        ch, cf, h = D(c10 * Ic, c01 * Ih), D(c10 * Ic, c01 * If), D(c10 * Ih, c01)
        w11 += _vec((4, 2 * ch), (3, 2 * cf - 3 * ch), (2, ch - 3 * cf + h), (1, cf - h))
        # c01 at the earlier time, c10 at the later
        hc, fc = D(c01 * Ih, c10 * Ic), D(c01 * If, c10 * Ic)
        h1, f1 = D(c01 * Ih, c10), D(c01 * If, c10)
        w11 += _vec((4, 2 * hc), (3, 2 * fc - 3 * hc), (2, hc - 3 * fc + 3 * h1), (1, 2 * f1 + fc - 2 * h1), (0, -f1))
    if tb.has("f10") and tb.has("c01"):
        a = D(tb["f10"] * Ic, c01)
        w11 += _vec((1, 2 * a), (0, -a))
    if tb.has("h10") and tb.has("c01"):
        a = D(tb["h10"] * Ic, c01)
        w11 += _vec((2, 2 * a), (1, -a))

    # (0,2)
    w02 = np.zeros(N_HERMITE)
    if tb.has("c02"):
        c02 = tb["c02"]
        w02 += _vec((2, S(c02 * Ih * Ih)), (1, 2 * S(c02 * Ih * If)), (0, S(c02 * If * If) + 2 * S(c02 * Ig)))
    if tb.has("c01"):
        hh, fh, hf, ff = D(c01 * Ih, c01 * Ih), D(c01 * If, c01 * Ih), D(c01 * Ih, c01 * If), D(c01 * If, c01 * If)
        g = D(c01 * Ig, c01)
        w02 += _vec((4, hh), (3, fh + hf - hh), (2, 2 * g + ff - fh - hf), (1, -(2 * g + ff)))
    if tb.has("f01") and tb.has("c01"):
        w02 += _vec((1, D(tb["f01"] * Ih, c01)), (0, D(tb["f01"] * If, c01)))
    if tb.has("h01") and tb.has("c01"):
        w02 += _vec((2, D(tb["h01"] * Ih, c01)), (1, D(tb["h01"] * If, c01)))
    return w20, w11, w02


@dataclass(frozen=True)
class IVExpansion:
    """Second-order implied-volatility expansion for one ``(t, x, ytilde, T)``.

    The strike-independent Hermite weights are stored; :meth:`sigma1`,
    :meth:`sigma2` and :meth:`sigma_bar` evaluate them at any log strike.
    """

    t: float
    T: float
    x: float
    d: int
    sigma0: float
    w10: np.ndarray
    w01: np.ndarray
    w20: np.ndarray
    w11: np.ndarray
    w02: np.ndarray
    quadrature: QuadratureConfig = field(default=DEFAULT_QUADRATURE)

    @property
    def tau(self) -> float:
        return self.T - self.t

    @property
    def hermite(self) -> HermiteContext:
        return HermiteContext(self.sigma0, self.tau)

    def _parts(self, k):
        basis = self.hermite.basis(self.x, k)
        scale = 1.0 / (self.tau * self.sigma0)
        s10 = scale * np.tensordot(self.w10, basis, axes=1)
        s01 = scale * np.tensordot(self.w01, basis, axes=1)
        R = self.tau * self.sigma0 * (basis[2] - basis[1]) + 1.0 / self.sigma0
        s20 = scale * np.tensordot(self.w20, basis, axes=1) - 0.5 * s10**2 * R
        s11 = scale * np.tensordot(self.w11, basis, axes=1) - s10 * s01 * R
        s02 = scale * np.tensordot(self.w02, basis, axes=1) - 0.5 * s01**2 * R
        return s10, s01, s20, s11, s02

    @staticmethod
    def _out(v):
        return v[()] if np.ndim(v) == 0 else v

    def sigma1_parts(self, k):
        s10, s01, *_ = self._parts(k)
        return self._out(s10), self._out(s01)

    def sigma2_parts(self, k):
        *_, s20, s11, s02 = self._parts(k)
        return self._out(s20), self._out(s11), self._out(s02)

    def sigma1(self, k):
        s10, s01, *_ = self._parts(k)
        return self._out(s10 + s01)

    def sigma2(self, k):
        *_, s20, s11, s02 = self._parts(k)
        return self._out(s20 + s11 + s02)

    def sigma_bar(self, n: int, k, *, warn: bool = True):
        """Partial sum ``Sigma_0 + ... + Sigma_n`` for ``n`` in ``{0, 1, 2}``.

        Nonpositive values are returned unchanged with an
        :class:`OutOfRegimeWarning`.
        """
        if n not in (0, 1, 2):
            raise ValueError("order n must be 0, 1 or 2")
        k_arr = np.asarray(k, dtype=float)
        total = np.full(k_arr.shape, self.sigma0)
        if n >= 1:
            total = total + self.sigma1(k_arr)
        if n >= 2:
            total = total + self.sigma2(k_arr)
        if warn and np.any(total <= 0):
            bad = np.atleast_1d(total)[np.atleast_1d(total) <= 0]
            warnings.warn(
                f"approximate implied volatility is nonpositive ({bad[0]:.6g}); "
                "the strike is outside the expansion's regime",
                OutOfRegimeWarning,
                stacklevel=2,
            )
        return self._out(total)


def expand(coeffs: GeneratorCoefficients, cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> IVExpansion:
    """Compute the strike-independent data of the expansion at ``coeffs``' anchor."""
    t, T = coeffs.t, coeffs.T
    table = nested_integrals(coeffs, t, T, cfg)
    s0 = sigma0(coeffs, t, T, table)
    w10, w01 = _first_order_weights(table)
    w20, w11, w02 = _second_order_weights(table)
    if coeffs.d == 1:
        w01 = np.zeros(N_HERMITE)
        w11 = np.zeros(N_HERMITE)
        w02 = np.zeros(N_HERMITE)
    return IVExpansion(t=t, T=T, x=coeffs.x, d=coeffs.d, sigma0=s0, w10=w10, w01=w01, w20=w20, w11=w11, w02=w02, quadrature=cfg)


def sigma1(coeffs: GeneratorCoefficients, t: float, x: float, ytilde, T: float, k, cfg: QuadratureConfig = DEFAULT_QUADRATURE):
    """First-order correction ``Sigma_{1,0} + Sigma_{0,1}`` at log strike ``k``."""
    _check_anchor(coeffs, t, x, T)
    return expand(coeffs, cfg).sigma1(k)


def sigma2(coeffs: GeneratorCoefficients, t: float, x: float, ytilde, T: float, k, cfg: QuadratureConfig = DEFAULT_QUADRATURE):
    """Second-order correction ``Sigma_{2,0} + Sigma_{1,1} + Sigma_{0,2}`` at log strike ``k``."""
    _check_anchor(coeffs, t, x, T)
    return expand(coeffs, cfg).sigma2(k)


def sigma_bar(coeffs: GeneratorCoefficients, n: int, t: float, x: float, ytilde, T: float, k, cfg: QuadratureConfig = DEFAULT_QUADRATURE):
    """``n``-th order approximation of the implied volatility at log strike ``k``."""
    _check_anchor(coeffs, t, x, T)
    return expand(coeffs, cfg).sigma_bar(n, k)


def _check_anchor(coeffs: GeneratorCoefficients, t, x, T):
    if not (math.isclose(coeffs.t, t) and math.isclose(coeffs.T, T) and math.isclose(coeffs.x, x, abs_tol=1e-15)):
        raise ValueError("coefficients were built for a different (t, x, T)")
