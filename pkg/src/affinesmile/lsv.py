"""Local-stochastic-volatility form of the forward bond price.

With ``X = log(B^Tbar / B^T)`` and residual factors ``ytilde``, the forward
dynamics under the T-forward measure have generator

    c (d_xx - d_x) + f d_y + g d_yy + h d_x d_y        (d = 2)
    c (d_xx - d_x)                                     (d = 1)

This module inverts the affine map ``x <-> y1`` (:func:`eta`), assembles
``c, f, g, h`` and their Taylor coefficients ``chi_ij = d_x^i d_y^j chi / (i! j!)``
at the expansion point ``(x, ytilde)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .affine import AffineModelSpec, as_spec, solve_riccati
from .errors import CapabilityError, DegenerateError
from .models import CIR2DParams, CIRParams, FongVasicekParams, VasicekParams

TAYLOR_KEYS = tuple(
    f"{name}{i}{j}" for name in "cfgh" for i in range(3) for j in range(3) if i + j <= 2
)


class BondCurves:
    """``F`` and ``G`` at ``nu = 0`` for the two maturities ``T`` and ``Tbar``.

    Evaluations are memoised on the exact time array, since the quadrature
    layer samples every coefficient on the same nodes.
    """

    def __init__(self, model, T: float, Tbar: float):
        self.spec = as_spec(model)
        self.T = float(T)
        self.Tbar = float(Tbar)
        self._cache: dict = {}

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        key = (s.shape, s.tobytes())
        hit = self._cache.get(key)
        if hit is None:
            zero = np.zeros(self.spec.d)
            short = solve_riccati(self.spec, self.T, zero, s)
            long = solve_riccati(self.spec, self.Tbar, zero, s)
            hit = (
                np.real(short.F), np.real(long.F),
                np.real(short.G), np.real(long.G),
            )
            if len(self._cache) > 64:
                self._cache.clear()
            self._cache[key] = hit
        return hit


def forward_log_price(model, t, y, T, Tbar, curves: BondCurves | None = None):
    """``x = log(B_t^Tbar / B_t^T)`` as an affine function of the state ``y``."""
    curves = curves or BondCurves(model, T, Tbar)
    FT, FTb, GT, GTb = curves(np.asarray(t, dtype=float))
    y = np.asarray(y, dtype=float)
    return FT - FTb + (GT - GTb) @ y


def eta(model, t, x, ytilde, T, Tbar, curves: BondCurves | None = None):
    """Recover ``y1`` from the forward log price ``x`` and the residual factors."""
    curves = curves or BondCurves(model, T, Tbar)
    FT, FTb, GT, GTb = curves(np.asarray(t, dtype=float))
    denom = GTb[..., 0] - GT[..., 0]
    if np.any(np.abs(denom) < 1e-14):
        raise DegenerateError("eta is undefined when G1(t;Tbar,0) == G1(t;T,0), e.g. T == Tbar")
    numer = FT - FTb - x
    ytilde = np.atleast_1d(np.asarray(ytilde, dtype=float))
    if ytilde.size:
        numer = numer + (GT[..., 1:] - GTb[..., 1:]) @ ytilde
    return numer / denom


def _zero(s):
    return np.zeros_like(np.asarray(s, dtype=float))


@dataclass(frozen=True)
class GeneratorCoefficients:
    """Generator coefficients and their Taylor coefficients at ``(x, ytilde)``.

    ``c, f, g, h`` are callables ``(s, x, y2)``; ``taylor`` maps keys such as
    ``"c10"`` to callables of time only. Absent keys are identically zero.
    """

    d: int
    t: float
    T: float
    Tbar: float
    x: float
    ytilde: np.ndarray
    c: Callable
    f: Callable
    g: Callable
    h: Callable
    taylor: Mapping[str, Callable] = field(default_factory=dict)

    @property
    def y2(self) -> float:
        return float(self.ytilde[0]) if self.ytilde.size else 0.0

    def chi(self, key: str) -> Callable:
        if key not in TAYLOR_KEYS:
            raise KeyError(key)
        return self.taylor.get(key, _zero)

    def nonzero(self, key: str) -> bool:
        return key in self.taylor


def _make(d, t, x, ytilde, T, Tbar, c, f=None, g=None, h=None, taylor=None):
    zero3 = lambda s, x_, y_: _zero(s)
    return GeneratorCoefficients(
        d=d, t=float(t), T=float(T), Tbar=float(Tbar), x=float(x),
        ytilde=np.atleast_1d(np.asarray(ytilde, dtype=float)),
        c=c, f=f or zero3, g=g or zero3, h=h or zero3, taylor=taylor or {},
    )


def _vasicek(p: VasicekParams, t, x, ytilde, T, Tbar, curves):
    def c(s, x_=None, y_=None):
        _, _, GT, GTb = curves(s)
        return 0.5 * p.delta**2 * (GT[..., 0] - GTb[..., 0]) ** 2

    return _make(1, t, x, ytilde, T, Tbar, c, taylor={"c00": c})


def _cir(p: CIRParams, t, x, ytilde, T, Tbar, curves):
    half_var = 0.5 * p.delta**2

    def c(s, x_, y_=None):
        FT, FTb, GT, GTb = curves(s)
        return half_var * (FT - FTb - x_) * (GTb[..., 0] - GT[..., 0])

    def c10(s):
        _, _, GT, GTb = curves(s)
        return -half_var * (GTb[..., 0] - GT[..., 0])

    return _make(1, t, x, ytilde, T, Tbar, c, taylor={"c00": lambda s: c(s, x), "c10": c10})


def _cir2d(p: CIR2DParams, t, x, ytilde, T, Tbar, curves):
    d1sq, d2sq = p.delta1**2, p.delta2**2
    y2 = float(np.atleast_1d(ytilde)[0])

    def parts(s):
        FT, FTb, GT, GTb = curves(s)
        return FT - FTb, GTb[..., 0] - GT[..., 0], GT[..., 1] - GTb[..., 1], GT[..., 1]

    def c(s, x_, y_):
        dF, g1gap, d2, _ = parts(s)
        return 0.5 * d1sq * (dF - x_ + d2 * y_) * g1gap + 0.5 * d2sq * d2**2 * y_

    def f(s, x_, y_):
        *_, G2T = parts(s)
        return p.kappa2 * (p.theta2 - y_) - d2sq * y_ * G2T

    def g(s, x_, y_):
        return 0.5 * d2sq * y_ + _zero(s)

    def h(s, x_, y_):
        _, _, d2, _ = parts(s)
        return d2sq * y_ * d2

    def c10(s):
        _, g1gap, _, _ = parts(s)
        return -0.5 * d1sq * g1gap

    def c01(s):
        _, g1gap, d2, _ = parts(s)
        return 0.5 * d1sq * d2 * g1gap + 0.5 * d2sq * d2**2

    def f01(s):
        *_, G2T = parts(s)
        return -p.kappa2 - d2sq * G2T

    def h01(s):
        _, _, d2, _ = parts(s)
        return d2sq * d2

    taylor = {
        "c00": lambda s: c(s, x, y2), "f00": lambda s: f(s, x, y2),
        "g00": lambda s: g(s, x, y2), "h00": lambda s: h(s, x, y2),
        "c10": c10, "c01": c01, "f01": f01,
        "g01": lambda s: 0.5 * d2sq + _zero(s), "h01": h01,
    }
    return _make(2, t, x, ytilde, T, Tbar, c, f, g, h, taylor)


def _fong_vasicek(p: FongVasicekParams, t, x, ytilde, T, Tbar, curves):
    d2sq, rd = p.delta2**2, p.rho * p.delta2
    y2 = float(np.atleast_1d(ytilde)[0])

    def parts(s):
        _, _, GT, GTb = curves(s)
        return GT[..., 0] - GTb[..., 0], GT[..., 1] - GTb[..., 1], GT[..., 0], GT[..., 1]

    def c01(s):
        D1, D2, _, _ = parts(s)
        return 0.5 * D1**2 + rd * D1 * D2 + 0.5 * d2sq * D2**2

    def c(s, x_, y_):
        return y_ * c01(s)

    def f01(s):
        _, _, G1T, G2T = parts(s)
        return -p.kappa2 - d2sq * G2T - rd * G1T

    def f(s, x_, y_):
        return p.kappa2 * p.theta2 + f01(s) * y_

    def g(s, x_, y_):
        return 0.5 * d2sq * y_ + _zero(s)

    def h01(s):
        D1, D2, _, _ = parts(s)
        return d2sq * D2 + rd * D1

    def h(s, x_, y_):
        return y_ * h01(s)

    taylor = {
        "c00": lambda s: c(s, x, y2), "f00": lambda s: f(s, x, y2),
        "g00": lambda s: g(s, x, y2), "h00": lambda s: h(s, x, y2),
        "c01": c01, "f01": f01, "g01": lambda s: 0.5 * d2sq + _zero(s), "h01": h01,
    }
    return _make(2, t, x, ytilde, T, Tbar, c, f, g, h, taylor)


def generic_coefficients(spec: AffineModelSpec, t, x, ytilde, T, Tbar, curves: BondCurves | None = None):
    """Assemble ``c, f, g, h`` from the generic one/two-factor generator.

    Only ``sigma sigma^T`` enters, evaluated at ``y = (eta, ytilde)``. Because
    ``eta`` is affine in ``(x, y2)`` and the model is affine in ``y``, all
    second-order Taylor coefficients vanish and the first-order ones follow
    from the chain rule.
    """
    spec = as_spec(spec)
    if spec.d > 2:
        raise CapabilityError(f"generator coefficients are available for d <= 2, got d={spec.d}")
    curves = curves or BondCurves(spec, T, Tbar)
    ytilde = np.atleast_1d(np.asarray(ytilde, dtype=float))
    d = spec.d

    def state(s, x_, y_):
        s = np.asarray(s, dtype=float)
        FT, FTb, GT, GTb = curves(s)
        denom = GTb[..., 0] - GT[..., 0]
        numer = FT - FTb - x_
        if d == 2:
            numer = numer + (GT[..., 1] - GTb[..., 1]) * y_
        y1 = numer / denom
        ys = np.stack([y1, np.broadcast_to(y_, y1.shape)], axis=-1) if d == 2 else y1[..., None]
        # d eta / dx and d eta / dy2
        deta = np.stack([-1.0 / denom, (GT[..., 1] - GTb[..., 1]) / denom if d == 2 else 0 * denom], -1)
        return s, ys, GT, GT - GTb, deta

    def pieces(s, x_, y_):
        s, ys, GT, D, deta = state(s, x_, y_)
        a = np.stack([spec.covariance(si, yi) for si, yi in zip(np.atleast_1d(s), ys.reshape(-1, d))])
        mu = np.stack([spec.drift(si, yi) for si, yi in zip(np.atleast_1d(s), ys.reshape(-1, d))])
        lam = np.stack([spec.lam(si) for si in np.atleast_1d(s)])
        beta = np.stack([spec.beta(si) for si in np.atleast_1d(s)])
        a = a.reshape(ys.shape[:-1] + (d, d))
        mu = mu.reshape(ys.shape)
        lam = lam.reshape(ys.shape[:-1] + (d, d, d))
        beta = beta.reshape(ys.shape[:-1] + (d, d))
        # derivatives of a and mu with respect to (x, y2)
        da_dx = lam[..., 0, :, :] * deta[..., 0, None, None]
        dmu_dx = beta[..., 0, :] * deta[..., 0, None]
        if d == 2:
            da_dy = lam[..., 0, :, :] * deta[..., 1, None, None] + lam[..., 1, :, :]
            dmu_dy = beta[..., 0, :] * deta[..., 1, None] + beta[..., 1, :]
        else:
            da_dy = np.zeros_like(da_dx)
            dmu_dy = np.zeros_like(dmu_dx)
        return a, mu, GT, D, (da_dx, dmu_dx), (da_dy, dmu_dy)

    def combos(a, mu, GT, D):
        if d == 1:
            c = 0.5 * a[..., 0, 0] * D[..., 0] ** 2
            z = np.zeros_like(c)
            return c, z, z, z
        c = 0.5 * a[..., 0, 0] * D[..., 0] ** 2 + a[..., 0, 1] * D[..., 0] * D[..., 1] + 0.5 * a[..., 1, 1] * D[..., 1] ** 2
        f = mu[..., 1] - a[..., 1, 1] * GT[..., 1] - a[..., 0, 1] * GT[..., 0]
        g = 0.5 * a[..., 1, 1]
        h = a[..., 1, 1] * D[..., 1] + a[..., 0, 1] * D[..., 0]
        return c, f, g, h

    def value(i):
        def fn(s, x_, y_=0.0):
            a, mu, GT, D, _, _ = pieces(s, x_, y_)
            return combos(a, mu, GT, D)[i]
        return fn

    def derivative(i, which):
        def fn(s):
            a, mu, GT, D, dx, dy = pieces(s, x, float(ytilde[0]) if ytilde.size else 0.0)
            da, dmu = dx if which == 0 else dy
            # the combinations are linear in (a, mu) with G-only weights
            return combos(da, dmu, GT, D)[i]
        return fn

    y2 = float(ytilde[0]) if ytilde.size else 0.0
    c, f, g, h = (value(i) for i in range(4))
    taylor = {"c00": lambda s: c(s, x, y2), "c10": derivative(0, 0)}
    if d == 2:
        taylor.update({
            "f00": lambda s: f(s, x, y2), "g00": lambda s: g(s, x, y2), "h00": lambda s: h(s, x, y2),
            "c01": derivative(0, 1),
            "f10": derivative(1, 0), "g10": derivative(2, 0), "h10": derivative(3, 0),
            "f01": derivative(1, 1), "g01": derivative(2, 1), "h01": derivative(3, 1),
        })
    return _make(d, t, x, ytilde, T, Tbar, c, f, g, h, taylor)


_SPECIALISED = {
    VasicekParams: _vasicek,
    CIRParams: _cir,
    CIR2DParams: _cir2d,
    FongVasicekParams: _fong_vasicek,
}


def coefficients(model, t, x, ytilde, T, Tbar, *, generic: bool = False) -> GeneratorCoefficients:
    """Generator coefficients with Taylor data at the expansion point ``(x, ytilde)``.

    Registered models use their hand-specialised formulas; any other
    :class:`AffineModelSpec` (or ``generic=True``) goes through
    :func:`generic_coefficients`.
    """
    if not T < Tbar:
        raise DegenerateError("the option expiry T must precede the bond maturity Tbar")
    if not t < T:
        raise ValueError("valuation time t must precede the option expiry T")
    spec = as_spec(model)
    if spec.d > 2:
        raise CapabilityError(f"generator coefficients are available for d <= 2, got d={spec.d}")
    curves = BondCurves(spec, T, Tbar)
    params = model if not isinstance(model, AffineModelSpec) else model.params
    builder = _SPECIALISED.get(type(params))
    if generic or builder is None:
        return generic_coefficients(spec, t, x, ytilde, T, Tbar, curves)
    return builder(params, t, x, ytilde, T, Tbar, curves)
