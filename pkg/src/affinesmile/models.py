"""Concrete affine short-rate models: Vasicek, CIR, two-factor CIR and Fong-Vasicek.

Each parameter class validates itself, maps onto an :class:`AffineModelSpec`
via :meth:`to_affine` and registers whatever closed-form Riccati solution is
available so that :func:`~affinesmile.affine.solve_riccati` can use it.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import cached_property
from types import SimpleNamespace

import numpy as np

from .affine import AffineModelSpec, _const
from .chf import kummer_m, tricomi_u
from .errors import ConsistencyError, FellerWarning, NearPoleWarning, UnsupportedNuError

_FV_QUAD_NODES, _FV_QUAD_WEIGHTS = np.polynomial.legendre.leggauss(32)


def _cir_factor(kappa, theta, delta, tau, nu):
    """Closed-form ``(F, G)`` of a single square-root factor.

    ``tau`` has shape ``(m,)`` and ``nu`` shape ``(n,)``; outputs are ``(n, m)``.
    The ``exp(Lambda tau)`` factors are divided out so the expression stays
    finite for long maturities and ``log`` is taken of a quantity with positive
    real part whenever ``Re(nu) <= 0``.
    """
    lam = math.sqrt(kappa * kappa + 2.0 * delta * delta)
    e = np.exp(-lam * tau)[None, :]
    nu = np.asarray(nu, dtype=complex)[:, None]
    den = -delta * delta * nu * (1.0 - e) + lam * (1.0 + e) + kappa * (1.0 - e)
    G = (2.0 * (1.0 - e) - (lam * (1.0 + e) - kappa * (1.0 - e)) * nu) / den
    log_ratio = math.log(2.0 * lam) + 0.5 * (kappa - lam) * tau[None, :] - np.log(den)
    F = -(2.0 * kappa * theta / (delta * delta)) * log_ratio
    return F, G


@dataclass(frozen=True)
class VasicekParams:
    """``dY = kappa (theta - Y) dt + delta dW``, ``R = Y``."""

    kappa: float
    theta: float
    delta: float

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")
        if not self.delta > 0:
            raise ValueError("delta must be positive")

    name = "vasicek"
    dim = 1

    def closed_form(self, times, T, nu):
        tau = T - np.asarray(times, dtype=float)
        k = self.kappa
        decay = np.exp(-k * tau)[None, :]
        G = -decay * nu[:, :1] + (1.0 - decay) / k
        # F integrates kappa theta G - delta^2 G^2 / 2 with G = A + B exp(-kappa u)
        A = 1.0 / k
        B = -(1.0 / k + nu[:, :1])
        e1 = -np.expm1(-k * tau)[None, :] / k
        e2 = -np.expm1(-2 * k * tau)[None, :] / (2 * k)
        int_G = A * tau[None, :] + B * e1
        int_G2 = A * A * tau[None, :] + 2 * A * B * e1 + B * B * e2
        F = k * self.theta * int_G - 0.5 * self.delta**2 * int_G2
        return F, G[:, :, None]

    @cached_property
    def _spec(self):
        k, th, dl = self.kappa, self.theta, self.delta
        return AffineModelSpec.constant(
            q=0.0, psi=[1.0], b=[k * th], beta=[[-k]], ell=[[dl * dl]], lam=[[[0.0]]],
            nonnegative=(False,), closed_form=self.closed_form, name=self.name, params=self,
        )

    def to_affine(self) -> AffineModelSpec:
        return self._spec


@dataclass(frozen=True)
class CIRParams:
    """``dY = kappa (theta - Y) dt + delta sqrt(Y) dW``, ``R = Y``."""

    kappa: float
    theta: float
    delta: float

    def __post_init__(self):
        if not (self.kappa > 0 and self.theta > 0 and self.delta > 0):
            raise ValueError("CIR requires kappa, theta, delta > 0")
        if self.feller_ratio <= 1.0:
            warnings.warn(
                f"Feller ratio 2*kappa*theta/delta^2 = {self.feller_ratio:.4g} <= 1",
                FellerWarning,
                stacklevel=3,
            )

    name = "cir"
    dim = 1

    @property
    def Lambda(self) -> float:
        return math.sqrt(self.kappa**2 + 2.0 * self.delta**2)

    @property
    def feller_ratio(self) -> float:
        return 2.0 * self.kappa * self.theta / self.delta**2

    def closed_form(self, times, T, nu):
        tau = T - np.asarray(times, dtype=float)
        F, G = _cir_factor(self.kappa, self.theta, self.delta, tau, nu[:, 0])
        return F, G[:, :, None]

    @cached_property
    def _spec(self):
        k, th, dl = self.kappa, self.theta, self.delta
        return AffineModelSpec.constant(
            q=0.0, psi=[1.0], b=[k * th], beta=[[-k]], ell=[[0.0]], lam=[[[dl * dl]]],
            nonnegative=(True,), closed_form=self.closed_form, name=self.name, params=self,
        )

    def to_affine(self) -> AffineModelSpec:
        return self._spec


@dataclass(frozen=True)
class CIR2DParams:
    """Two independent square-root factors with ``R = Y1 + Y2``."""

    kappa1: float
    theta1: float
    delta1: float
    kappa2: float
    theta2: float
    delta2: float

    def __post_init__(self):
        # validation (and Feller warnings) are delegated to the factor objects
        self.factors

    name = "cir2d"
    dim = 2

    @cached_property
    def factors(self) -> tuple:
        return (
            CIRParams(self.kappa1, self.theta1, self.delta1),
            CIRParams(self.kappa2, self.theta2, self.delta2),
        )

    def closed_form(self, times, T, nu):
        tau = T - np.asarray(times, dtype=float)
        F = 0.0
        Gs = []
        for i, fac in enumerate(self.factors):
            Fi, Gi = _cir_factor(fac.kappa, fac.theta, fac.delta, tau, nu[:, i])
            F = F + Fi
            Gs.append(Gi)
        return F, np.stack(Gs, axis=-1)

    @cached_property
    def _spec(self):
        k1, k2 = self.kappa1, self.kappa2
        lam = np.zeros((2, 2, 2))
        lam[0, 0, 0] = self.delta1**2
        lam[1, 1, 1] = self.delta2**2
        return AffineModelSpec.constant(
            q=0.0, psi=[1.0, 1.0], b=[k1 * self.theta1, k2 * self.theta2],
            beta=[[-k1, 0.0], [0.0, -k2]], ell=np.zeros((2, 2)), lam=lam,
            nonnegative=(True, True), closed_form=self.closed_form, name=self.name, params=self,
        )

    def to_affine(self) -> AffineModelSpec:
        return self._spec


@dataclass(frozen=True)
class FongVasicekParams:
    """Rate factor ``Y1`` with stochastic variance ``Y2``; correlation ``rho``.

    ``dY1 = kappa1 (theta1 - Y1) dt + sqrt(Y2) dW1``
    ``dY2 = kappa2 (theta2 - Y2) dt + delta2 sqrt(Y2) (rho dW1 + rhobar dW2)``
    """

    kappa1: float
    theta1: float
    kappa2: float
    theta2: float
    delta2: float
    rho: float

    def __post_init__(self):
        if not (self.kappa1 > 0 and self.kappa2 > 0 and self.delta2 > 0):
            raise ValueError("Fong-Vasicek requires kappa1, kappa2, delta2 > 0")
        if not -1.0 <= self.rho <= 1.0:
            raise ValueError("rho must lie in [-1, 1]")

    name = "fong-vasicek"
    dim = 2

    @property
    def rhobar(self) -> float:
        return math.sqrt(1.0 - self.rho**2)

    @cached_property
    def _chf_constants(self) -> SimpleNamespace:
        k1, k2, d2, rho, rb = self.kappa1, self.kappa2, self.delta2, self.rho, self.rhobar
        beta2 = np.sqrt(complex((d2 * rho + k1 * k2) ** 2 - d2**2))
        alpha1 = d2 * k1**2 * (rho + 1j * rb)
        alpha2 = -(k1**2) * (d2 * rho + k1 * k2 + beta2)
        alpha = alpha1 + alpha2
        beta1 = d2 * rb**2 + rho * k1 * (k1 - k2)
        beta = d2 * (beta1 + 1j * rb * (beta2 + k1**2))
        Psi = beta2 / k1**2 + 1.0
        n = round(Psi.real)
        if abs(Psi.imag) < 1e-9 and abs(Psi.real - n) < 1e-9:
            warnings.warn(
                f"Psi={Psi!r} is numerically an integer; perturbing by 1e-9",
                NearPoleWarning,
                stacklevel=2,
            )
            Psi = Psi + 1e-9
        if rb == 0.0:
            raise ConsistencyError("the hypergeometric representation of G2 requires |rho| < 1")
        Phi = Psi / 2.0 + beta1 / (2j * k1**2 * rb)
        zeta = 1j * d2 * rb / k1**2
        gamma = -2.0 * Phi * k1**4 * zeta / Psi
        lam = -(gamma * kummer_m(Phi + 1, Psi + 1, zeta) + alpha * kummer_m(Phi, Psi, zeta)) / (
            beta * tricomi_u(Phi + 1, Psi + 1, zeta) + alpha * tricomi_u(Phi, Psi, zeta)
        )
        return SimpleNamespace(
            alpha1=alpha1, alpha2=alpha2, alpha=alpha, beta=beta, beta1=beta1, beta2=beta2,
            Phi=Phi, Psi=Psi, zeta=zeta, gamma=gamma, lam=lam,
        )

    def G1(self, tau):
        tau = np.asarray(tau, dtype=float)
        return (1.0 - np.exp(-self.kappa1 * tau)) / self.kappa1

    def G2(self, tau, *, rtol: float = 1e-8):
        """Variance-factor coefficient ``G2(t; t + tau, 0)`` from the hypergeometric closed form."""
        tau = np.asarray(tau, dtype=float)
        c = self._chf_constants
        k1 = self.kappa1
        decay = np.exp(-k1 * tau)
        z = decay * c.zeta
        num = c.beta * c.lam * tricomi_u(c.Phi + 1, c.Psi + 1, z) + c.gamma * kummer_m(c.Phi + 1, c.Psi + 1, z)
        den = c.lam * tricomi_u(c.Phi, c.Psi, z) + kummer_m(c.Phi, c.Psi, z)
        value = decay / (self.delta2**2 * k1**3) * ((c.alpha1 + c.alpha2 / decay) + num / den)
        value = np.where(tau == 0.0, 0.0, value)
        residue = np.abs(np.imag(value))
        if np.any(residue > rtol * np.maximum(np.abs(np.real(value)), 1.0)):
            raise ConsistencyError(
                f"Fong-Vasicek G2 has imaginary residue {float(np.max(residue)):.3e}"
            )
        out = np.real(value)
        return out[()] if out.ndim == 0 else out

    def F(self, tau):
        """``F(t; t + tau, 0)`` by Gauss-Legendre quadrature of the closed-form ``G1``, ``G2``."""
        tau = np.atleast_1d(np.asarray(tau, dtype=float))
        k1 = self.kappa1
        int_G1 = (tau - self.G1(tau)) / k1
        nodes = 0.5 * tau[:, None] * (_FV_QUAD_NODES[None, :] + 1.0)
        int_G2 = 0.5 * tau * (self.G2(nodes.ravel()).reshape(nodes.shape) @ _FV_QUAD_WEIGHTS)
        return k1 * self.theta1 * int_G1 + self.kappa2 * self.theta2 * int_G2

    def closed_form(self, times, T, nu):
        if np.any(nu != 0):
            raise UnsupportedNuError("Fong-Vasicek closed form is available at nu = 0 only")
        tau = T - np.asarray(times, dtype=float)
        G = np.stack([self.G1(tau), np.atleast_1d(self.G2(tau))], axis=-1)
        F = self.F(tau)
        n = nu.shape[0]
        return np.broadcast_to(F, (n, tau.size)), np.broadcast_to(G, (n, tau.size, 2))

    @cached_property
    def _spec(self):
        k1, k2, d2, rho = self.kappa1, self.kappa2, self.delta2, self.rho
        lam = np.zeros((2, 2, 2))
        lam[1] = [[1.0, d2 * rho], [d2 * rho, d2 * d2]]
        return AffineModelSpec.constant(
            q=0.0, psi=[1.0, 0.0], b=[k1 * self.theta1, k2 * self.theta2],
            beta=[[-k1, 0.0], [0.0, -k2]], ell=np.zeros((2, 2)), lam=lam,
            nonnegative=(False, True), closed_form=self.closed_form, name=self.name, params=self,
        )

    def to_affine(self) -> AffineModelSpec:
        return self._spec


MODELS = {
    "vasicek": VasicekParams,
    "cir": CIRParams,
    "cir2d": CIR2DParams,
    "fong-vasicek": FongVasicekParams,
}


def to_affine(params) -> AffineModelSpec:
    return params.to_affine()


def closed_form_FG(params, t, T, nu=None):
    """Registered closed-form ``(F, G)(t; T, nu)`` of a model.

    ``F`` is ``None`` when a model registers only ``G``; the numeric Riccati
    solver supplies it in that case.
    """
    spec = params.to_affine()
    nu2 = np.zeros((1, spec.d), dtype=complex) if nu is None else np.atleast_2d(np.asarray(nu, dtype=complex))
    t = np.atleast_1d(np.asarray(t, dtype=float))
    F, G = params.closed_form(t, float(T), nu2)
    return (None if F is None else np.asarray(F)[0]), np.asarray(G)[0]


def fv_G2(params: FongVasicekParams, t, T):
    """``G2(t; T, 0)`` of the Fong-Vasicek model (real part, residue-checked)."""
    return params.G2(T - np.asarray(t, dtype=float))


def vasicek_sigma(params: VasicekParams, t, T, Tbar):
    """Closed-form Vasicek implied volatility (exact for every strike)."""
    k, dl = params.kappa, params.delta
    t = np.asarray(t, dtype=float)
    return (
        dl / k**1.5
        * np.sqrt((np.exp(2 * k * T) - np.exp(2 * k * t)) / (2.0 * (T - t)))
        * (np.exp(-k * T) - np.exp(-k * Tbar))
    )


def vasicek_sigma_limit_expiry(params: VasicekParams, T, Tbar):
    """Limit of the Vasicek implied volatility as ``t -> T``."""
    return params.delta / params.kappa * (1.0 - np.exp(-params.kappa * (Tbar - T)))


def vasicek_sigma_limit_long_bond(params: VasicekParams, t, T):
    """Limit of the Vasicek implied volatility as ``Tbar -> infinity``."""
    k, tau = params.kappa, T - np.asarray(t, dtype=float)
    return params.delta / k**1.5 * np.sqrt((1.0 - np.exp(-2 * k * tau)) / (2.0 * tau))
