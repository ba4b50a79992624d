"""Forward Black-Scholes call prices in log variables and implied-volatility inversion.

Everything is expressed in terms of the log forward price ``x``, the log strike
``k`` and the time to maturity ``tau``; there is no discounting because prices
are forward (numeraire-normalised) prices.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import ndtr

from .errors import ArbitrageBoundsError, ConvergenceError

_SQRT_2PI = math.sqrt(2.0 * math.pi)


def _d_plus_minus(x, k, tau, sigma):
    sd = sigma * np.sqrt(tau)
    d_plus = (x - k + 0.5 * sd * sd) / sd
    return d_plus, d_plus - sd


def bs_call(x, k, tau, sigma):
    """Forward call price ``e^x N(d+) - e^k N(d-)``.

    Works elementwise on arrays. ``ndtr`` is evaluated through ``erfc`` so the
    tails keep full relative accuracy.
    """
    x, k, tau, sigma = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (x, k, tau, sigma)))
    if np.any(tau <= 0) or np.any(sigma <= 0):
        raise ValueError("bs_call requires tau > 0 and sigma > 0")
    d_plus, d_minus = _d_plus_minus(x, k, tau, sigma)
    price = np.exp(x) * ndtr(d_plus) - np.exp(k) * ndtr(d_minus)
    return price[()] if price.ndim == 0 else price


def bs_vega(x, k, tau, sigma):
    """Derivative of :func:`bs_call` with respect to ``sigma``."""
    x, k, tau, sigma = (np.asarray(a, dtype=float) for a in (x, k, tau, sigma))
    d_plus, _ = _d_plus_minus(x, k, tau, sigma)
    return np.exp(x - 0.5 * d_plus * d_plus) / _SQRT_2PI * np.sqrt(tau)


def bs_volga(x, k, tau, sigma):
    """Second derivative of :func:`bs_call` with respect to ``sigma``."""
    d_plus, d_minus = _d_plus_minus(*(np.asarray(a, dtype=float) for a in (x, k, tau, sigma)))
    return bs_vega(x, k, tau, sigma) * d_plus * d_minus / np.asarray(sigma, dtype=float)


def implied_vol(price: float, x: float, k: float, tau: float, *, max_iter: int = 200) -> float:
    """Invert :func:`bs_call` for the unique positive volatility.

    Parameters
    ----------
    price : float
        Forward call price. Must satisfy ``max(e^x - e^k, 0) < price < e^x``.
    x, k : float
        Log forward price and log strike.
    tau : float
        Time to maturity, strictly positive.

    Returns
    -------
    float
        Volatility ``sigma`` with ``|bs_call(sigma) - price| <= 1e-12 * e^x``.

    Raises
    ------
    ArbitrageBoundsError
        If the price is outside the open no-arbitrage interval.
    ConvergenceError
        If the safeguarded Newton iteration fails to meet the tolerance.
    """
    price = float(price)
    x = float(x)
    k = float(k)
    tau = float(tau)
    if tau <= 0:
        raise ValueError("tau must be positive")
    upper = math.exp(x)
    lower = max(upper - math.exp(k), 0.0)
    if not price < upper:
        raise ArbitrageBoundsError("upper", price, upper)
    if not price > lower:
        raise ArbitrageBoundsError("lower", price, lower)

    def objective(s):
        return float(bs_call(x, k, tau, s)) - price

    lo, hi = 1e-8, 5.0
    while objective(lo) > 0:
        lo *= 0.1
        if lo < 1e-300:
            raise ConvergenceError("could not bracket implied volatility from below")
    while objective(hi) < 0:
        lo, hi = hi, hi * 2.0
        if hi > 1e6:
            raise ConvergenceError("could not bracket implied volatility from above")

    # Brenner-Subrahmanyam start, clipped into the bracket
    sigma = price / upper * _SQRT_2PI / math.sqrt(tau)
    if not lo < sigma < hi:
        sigma = math.sqrt(lo * hi)

    for _ in range(max_iter):
        f = objective(sigma)
        if f == 0.0:
            return sigma
        if f > 0:
            hi = sigma
        else:
            lo = sigma
        vega = float(bs_vega(x, k, tau, sigma))
        step_ok = vega > 0 and math.isfinite(vega)
        new = sigma - f / vega if step_ok else math.nan
        if not (lo < new < hi):
            new = 0.5 * (lo + hi) if hi / lo < 4 else math.sqrt(lo * hi)
        if abs(new - sigma) <= 4 * np.finfo(float).eps * sigma or hi - lo <= 4 * np.finfo(float).eps * hi:
            sigma = new
            break
        sigma = new
    if abs(objective(sigma)) > 1e-12 * upper:
        raise ConvergenceError(
            f"implied_vol failed to converge: residual {objective(sigma):.3e} at sigma={sigma:.6g}"
        )
    return sigma
