"""Exact bond-option prices by generalised Fourier inversion.

For a payoff ``phi(log B_T^Tbar)`` with transform ``phi_hat`` the time-``t``
value is

    u = (1/2pi) int d omega_r  phi_hat(omega) exp(-i omega F(T;Tbar,0))
                               Gamma(t, y; T, -i omega G(T;Tbar,0))

along the horizontal line ``omega = omega_r + i omega_i``. Dividing by the
bond price ``B_t^T`` gives the T-forward call price.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_legendre

from .affine import StatePoint, as_spec, bond_price, solve_riccati
from .blackscholes import implied_vol
from .errors import CapabilityError, ConsistencyError, DomainError, TruncationError
from .lsv import BondCurves, eta
from .models import FongVasicekParams


@dataclass(frozen=True)
class PayoffTransform:
    """Transform of the call payoff ``(e^x - e^k)^+`` on the line ``Im omega = omega_i``.

    ``k`` may be an array, in which case :meth:`phi_hat` returns one row per
    strike.
    """

    k: object
    omega_i: float = -1.5

    def __post_init__(self):
        if not self.omega_i < -1:
            raise ValueError("the call transform requires omega_i < -1")

    def phi_hat(self, omega_r):
        k = np.atleast_1d(np.asarray(self.k, dtype=float))[:, None]
        w = np.asarray(omega_r, dtype=float)[None, :] + 1j * self.omega_i
        return -np.exp(k - 1j * k * w) / (w * w + 1j * w)


@dataclass(frozen=True)
class InversionConfig:
    """Quadrature controls for the inversion integral.

    A composite Gauss-Legendre rule with ``per_panel`` nodes per panel covers
    ``[-omega_max, omega_max]``; panels are graded near the origin and
    ``panel_width`` wide elsewhere. With ``adaptive`` the range is doubled
    until the integrand at the edge implies a tail below ``tail_tol``, then
    the nodes per panel are doubled until the sum settles to the same
    tolerance. With ``self_check`` every price is recomputed at twice the
    range and node density and rejected if the two differ by more than
    ``check_tol``.
    """

    omega_i: float = -1.5
    omega_max: float = 200.0
    per_panel: int = 16
    panel_width: float = 8.0
    adaptive: bool = True
    tail_tol: float = 1e-13
    max_omega: float = 1e5
    max_per_panel: int = 512
    self_check: bool = True
    check_tol: float = 1e-7
    residue_tol: float = 1e-8

    def __post_init__(self):
        if not self.omega_i < -1:
            raise ValueError("omega_i must be < -1")
        if not self.omega_max > 0:
            raise ValueError("omega_max must be positive")
        if self.per_panel < 2:
            raise ValueError("per_panel must be >= 2")
        if not self.panel_width > 0:
            raise ValueError("panel_width must be positive")


DEFAULT_INVERSION = InversionConfig()


def _require_fourier(model):
    params = getattr(as_spec(model), "params", None)
    if isinstance(params, FongVasicekParams) or isinstance(model, FongVasicekParams):
        raise CapabilityError(
            "Fourier pricing is not available for the Fong-Vasicek model; use the Monte Carlo engine"
        )


class _Integrand:
    """Strike-independent part ``exp(-i omega F) Gamma(...)`` with caching by node set."""

    def __init__(self, model, state: StatePoint, T: float, Tbar: float, omega_i: float):
        self.spec = as_spec(model)
        self.state = state
        self.T = float(T)
        self.omega_i = omega_i
        bond = solve_riccati(self.spec, Tbar, np.zeros(self.spec.d), self.T)
        self.F_bar = float(np.real(bond.F))
        self.G_bar = np.real(np.asarray(bond.G))
        self.y = self.spec.check_state(state.y)

    def __call__(self, omega_r):
        w = omega_r + 1j * self.omega_i
        nu = -1j * w[:, None] * self.G_bar[None, :]
        coeffs = solve_riccati(self.spec, self.T, nu, self.state.t)
        gamma = np.exp(-coeffs.F - coeffs.G @ self.y)
        return np.exp(-1j * w * self.F_bar) * gamma


@lru_cache(maxsize=32)
def _panel_rule(omega_max: float, per_panel: int, width: float):
    """Composite Gauss-Legendre nodes and weights on ``[-omega_max, omega_max]``.

    Panels are graded geometrically from ``1/4`` up to ``width`` near the
    origin, where the transform has poles at ``0`` and ``-i`` close to the
    contour, and have constant ``width`` further out.
    """
    edges = [0.0, 0.25]
    while edges[-1] < min(width, omega_max):
        edges.append(min(2 * edges[-1], width, omega_max))
    while edges[-1] < omega_max:
        edges.append(min(edges[-1] + width, omega_max))
    x, w = roots_legendre(per_panel)
    lo, hi = np.array(edges[:-1]), np.array(edges[1:])
    half = 0.5 * (hi - lo)[:, None]
    nodes = (0.5 * (hi + lo)[:, None] + half * x[None, :]).ravel()
    weights = (half * w[None, :]).ravel()
    nodes = np.concatenate([-nodes[::-1], nodes])
    weights = np.concatenate([weights[::-1], weights])
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def _quadrature(integrand: _Integrand, payoff: PayoffTransform, omega_max: float, per_panel: int, width: float):
    omega, w = _panel_rule(float(omega_max), int(per_panel), float(width))
    core = integrand(omega)
    total = (payoff.phi_hat(omega) * (core * w)[None, :]).sum(axis=1) / (2 * math.pi)
    ends = np.array([-omega_max, omega_max])
    edge = np.abs(payoff.phi_hat(ends) * integrand(ends)[None, :])
    tail = edge.max(axis=1) * omega_max / math.pi
    return total, tail


def _value(integrand: _Integrand, payoff: PayoffTransform, cfg: InversionConfig):
    omega_max, per_panel, width = cfg.omega_max, cfg.per_panel, cfg.panel_width
    total, tail = _quadrature(integrand, payoff, omega_max, per_panel, width)
    if cfg.adaptive:
        while np.max(tail) > cfg.tail_tol:
            if omega_max * 2 > cfg.max_omega:
                raise TruncationError(
                    f"integrand tail {np.max(tail):.3e} still above {cfg.tail_tol:g} at omega_max={omega_max:g}"
                )
            omega_max *= 2
            total, tail = _quadrature(integrand, payoff, omega_max, per_panel, width)
        # resolve the oscillation exp(-i k omega) at fixed range
        while True:
            if 2 * per_panel > cfg.max_per_panel:
                raise TruncationError(f"quadrature did not settle with {per_panel} nodes per panel")
            finer, _ = _quadrature(integrand, payoff, omega_max, 2 * per_panel, width)
            per_panel *= 2
            settled = np.max(np.abs(finer - total)) <= cfg.tail_tol
            total = finer
            if settled:
                break
    if cfg.self_check:
        check, _ = _quadrature(integrand, payoff, 2 * omega_max, 2 * per_panel, width)
        shift = np.max(np.abs(check - total))
        if shift > cfg.check_tol:
            raise TruncationError(f"price moved by {shift:.3e} when the truncation was doubled")
    # the sum is only accurate to about tail_tol in absolute terms
    allowed = np.maximum(cfg.residue_tol * np.abs(total.real), 10 * cfg.tail_tol)
    if np.any(np.abs(total.imag) > allowed):
        raise ConsistencyError(f"imaginary residue {np.max(np.abs(total.imag)):.3e} in a real price")
    return total.real, omega_max, per_panel


def option_value_u(model, state: StatePoint, T: float, Tbar: float, payoff: PayoffTransform, cfg: InversionConfig = DEFAULT_INVERSION):
    """Undiscounted-by-``B^T`` value ``u(t, y; T, Tbar)`` of the payoff on ``log B_T^Tbar``."""
    _require_fourier(model)
    if not state.t <= T <= Tbar:
        raise ValueError("need t <= T <= Tbar")
    if payoff.omega_i != cfg.omega_i:
        payoff = PayoffTransform(payoff.k, cfg.omega_i)
    k = np.asarray(payoff.k, dtype=float)
    if state.t == T:
        spec = as_spec(model)
        x = math.log(bond_price(spec, StatePoint(T, state.y), Tbar))
        out = np.maximum(np.exp(x) - np.exp(k), 0.0)
        return out[()] if out.ndim == 0 else out
    integrand = _Integrand(model, state, T, Tbar, cfg.omega_i)
    values, _, _ = _value(integrand, payoff, cfg)
    return values[0] if k.ndim == 0 else values


def forward_call_price(model, t: float, x: float, ytilde, T: float, Tbar: float, k, cfg: InversionConfig = DEFAULT_INVERSION):
    """T-forward call price on ``B^Tbar`` for the forward log price ``x``.

    The first factor is recovered as ``y1 = eta(t, x, ytilde)``; it must lie in
    the model's admissible domain.
    """
    _require_fourier(model)
    spec = as_spec(model)
    y = _state_from_forward(spec, t, x, ytilde, T, Tbar)
    k_arr = np.asarray(k, dtype=float)
    if t == T:
        out = np.maximum(math.exp(x) - np.exp(k_arr), 0.0)
        return out[()] if out.ndim == 0 else out
    state = StatePoint(t, y)
    u = option_value_u(spec, state, T, Tbar, PayoffTransform(k_arr, cfg.omega_i), cfg)
    return u / bond_price(spec, state, T)


def _state_from_forward(spec, t, x, ytilde, T, Tbar) -> np.ndarray:
    ytilde = np.atleast_1d(np.asarray(ytilde if ytilde is not None else [], dtype=float))
    if ytilde.size != spec.d - 1:
        raise ValueError(f"expected {spec.d - 1} residual factors, got {ytilde.size}")
    y1 = float(eta(spec, t, x, ytilde, T, Tbar, BondCurves(spec, T, Tbar)))
    y = np.concatenate([[y1], ytilde])
    try:
        return spec.check_state(y)
    except DomainError as exc:
        raise DomainError(f"forward log price x={x!r} implies an inadmissible state: {exc}") from exc


def exact_implied_vol(model, t: float, x: float, ytilde, T: float, Tbar: float, k, cfg: InversionConfig = DEFAULT_INVERSION):
    """Black-Scholes implied volatility of the Fourier forward call price."""
    k_arr = np.atleast_1d(np.asarray(k, dtype=float))
    prices = np.atleast_1d(forward_call_price(model, t, x, ytilde, T, Tbar, k_arr, cfg))
    vols = np.array([implied_vol(p, x, kk, T - t) for p, kk in zip(prices, k_arr)])
    return vols[0] if np.ndim(k) == 0 else vols
