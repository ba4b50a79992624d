"""Affine short-rate model class and its Riccati / transform layer.

A model is the tuple ``(q, psi, b, beta, ell, lam)`` with

    r(y)          = q + psi . y
    mu(t, y)      = b(t) + sum_i beta_i(t) y_i
    (sigma sigma^T)(t, y) = ell(t) + sum_i lam_i(t) y_i

and the exponential-affine transform

    Gamma(t, y; T, nu) = E_t exp(-int_t^T r(Y_s) ds + nu . Y_T)
                       = exp(-F(t; T, nu) - G(t; T, nu) . y)

where ``(F, G)`` solve a backward Riccati system with ``F(T) = 0`` and
``G(T) = -nu``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DomainError, RiccatiExplosionError, UnsupportedNuError

ArrayFn = Callable[[float], np.ndarray]

EXPLOSION_BOUND = 1e12
DEFAULT_STEPS_PER_UNIT = 2000


def _const(value) -> ArrayFn:
    arr = np.array(value, dtype=float)
    arr.setflags(write=False)
    return lambda t: arr


@dataclass(frozen=True, eq=False)
class AffineModelSpec:
    """The coefficient tuple of an affine short-rate model in dimension ``d``.

    ``beta(t)`` returns a ``(d, d)`` array whose row ``i`` is the vector
    ``beta_i(t)``; ``lam(t)`` returns a ``(d, d, d)`` array whose slice ``i``
    is the matrix ``lambda_i(t)``.

    ``closed_form``, when set, is a callable ``(times, T, nu) -> (F, G)`` with
    ``times`` of shape ``(m,)`` and ``nu`` of shape ``(n, d)``, returning ``F``
    of shape ``(n, m)`` (or ``None`` if only ``G`` is known) and ``G`` of shape
    ``(n, m, d)``. It may raise :class:`UnsupportedNuError` to request the
    numeric fallback.
    """

    d: int
    q: float
    psi: np.ndarray
    b: ArrayFn
    beta: ArrayFn
    ell: ArrayFn
    lam: ArrayFn
    nonnegative: tuple = ()
    closed_form: Optional[Callable] = None
    name: str = "affine"
    params: object = field(default=None, repr=False)

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("dimension must be >= 1")
        psi = np.atleast_1d(np.asarray(self.psi, dtype=float))
        if psi.shape != (self.d,):
            raise ValueError(f"psi must have length {self.d}, got shape {psi.shape}")
        object.__setattr__(self, "psi", psi)
        shapes = {
            "b": (self.b(0.0), (self.d,)),
            "beta": (self.beta(0.0), (self.d, self.d)),
            "ell": (self.ell(0.0), (self.d, self.d)),
            "lam": (self.lam(0.0), (self.d, self.d, self.d)),
        }
        for name, (value, shape) in shapes.items():
            if np.shape(value) != shape:
                raise ValueError(f"{name}(t) must have shape {shape}, got {np.shape(value)}")
        nonneg = tuple(bool(v) for v in self.nonnegative) or tuple(
            bool(np.any(self.lam(0.0)[i] != 0)) for i in range(self.d)
        )
        if len(nonneg) != self.d:
            raise ValueError("nonnegative flags must have one entry per coordinate")
        object.__setattr__(self, "nonnegative", nonneg)

    @classmethod
    def constant(cls, q, psi, b, beta, ell, lam, **kwargs) -> "AffineModelSpec":
        """Build a spec whose coefficient functions are constant in time."""
        psi = np.atleast_1d(np.asarray(psi, dtype=float))
        d = psi.size
        return cls(
            d=d,
            q=float(q),
            psi=psi,
            b=_const(np.reshape(b, (d,))),
            beta=_const(np.reshape(beta, (d, d))),
            ell=_const(np.reshape(ell, (d, d))),
            lam=_const(np.reshape(lam, (d, d, d))),
            **kwargs,
        )

    def r(self, y):
        return self.q + np.asarray(y) @ self.psi

    def drift(self, t: float, y):
        """``mu(t, y)`` for ``y`` of shape ``(..., d)``."""
        return self.b(t) + np.asarray(y) @ self.beta(t)

    def covariance(self, t: float, y):
        """``(sigma sigma^T)(t, y)`` for ``y`` of shape ``(..., d)``."""
        return self.ell(t) + np.tensordot(np.asarray(y), self.lam(t), axes=([-1], [0]))

    def check_state(self, y) -> np.ndarray:
        y = np.atleast_1d(np.asarray(y, dtype=float))
        if y.shape != (self.d,):
            raise DomainError(f"state must have length {self.d}, got shape {y.shape}")
        for i, flag in enumerate(self.nonnegative):
            if flag and y[i] < 0:
                raise DomainError(f"coordinate {i + 1} must be nonnegative, got {y[i]!r}")
        return y

    def is_psd(self, t: float, y, tol: float = 1e-12) -> bool:
        a = self.covariance(t, y)
        if not np.allclose(a, a.T, atol=tol):
            return False
        return bool(np.min(np.linalg.eigvalsh(a)) >= -tol)


@dataclass(frozen=True)
class StatePoint:
    """Time and state of the factor process ``Y``."""

    t: float
    y: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "y", np.atleast_1d(np.asarray(self.y, dtype=float)))


@dataclass(frozen=True)
class BondCoefficients:
    """Riccati solution ``(F, G)`` at the requested times.

    Shapes follow the inputs of :func:`solve_riccati`: a single ``nu`` vector
    drops the leading axis and a scalar time drops the time axis.
    """

    T: float
    times: np.ndarray
    nu: np.ndarray
    F: np.ndarray
    G: np.ndarray
    provenance: str
    steps_per_unit: Optional[int] = None


def as_spec(model) -> AffineModelSpec:
    """Accept either an :class:`AffineModelSpec` or a parameter object with ``to_affine``."""
    if isinstance(model, AffineModelSpec):
        return model
    to_affine = getattr(model, "to_affine", None)
    if to_affine is None:
        raise TypeError(f"cannot interpret {type(model).__name__} as an affine model")
    return to_affine()


def _rhs(spec: AffineModelSpec, t: float, G: np.ndarray):
    ell = spec.ell(t)
    lam = spec.lam(t)
    dF = 0.5 * np.einsum("nj,jk,nk->n", G, ell, G) - G @ spec.b(t) - spec.q
    dG = 0.5 * np.einsum("nj,ijk,nk->ni", G, lam, G) - G @ spec.beta(t).T - spec.psi
    return dF, dG


def _check_finite(F, G, t):
    if not (np.all(np.isfinite(F)) and np.all(np.isfinite(G))):
        raise RiccatiExplosionError(t)
    if np.max(np.abs(F), initial=0.0) > EXPLOSION_BOUND or np.max(np.abs(G), initial=0.0) > EXPLOSION_BOUND:
        raise RiccatiExplosionError(t)


def _integrate_rk4(spec: AffineModelSpec, T: float, nu: np.ndarray, times: np.ndarray, steps_per_unit: int):
    """Classical RK4 backward from ``T`` through the (descending) requested times."""
    n = nu.shape[0]
    F = np.zeros(n, dtype=complex)
    G = -nu.astype(complex)
    out_F = np.empty((n, times.size), dtype=complex)
    out_G = np.empty((n, times.size, spec.d), dtype=complex)
    order = np.argsort(-times, kind="stable")
    t_cur = T
    for idx in order:
        target = times[idx]
        span = t_cur - target
        steps = max(1, math.ceil(span * steps_per_unit - 1e-9)) if span > 0 else 0
        if steps:
            h = -span / steps
            for j in range(steps):
                t0 = t_cur + j * h
                k1F, k1G = _rhs(spec, t0, G)
                k2F, k2G = _rhs(spec, t0 + 0.5 * h, G + 0.5 * h * k1G)
                k3F, k3G = _rhs(spec, t0 + 0.5 * h, G + 0.5 * h * k2G)
                k4F, k4G = _rhs(spec, t0 + h, G + h * k3G)
                F = F + h / 6.0 * (k1F + 2 * k2F + 2 * k3F + k4F)
                G = G + h / 6.0 * (k1G + 2 * k2G + 2 * k3G + k4G)
                _check_finite(F, G, t0 + h)
            t_cur = target
        out_F[:, idx] = F
        out_G[:, idx, :] = G
    return out_F, out_G


def solve_riccati(
    model,
    T: float,
    nu=None,
    times=None,
    *,
    steps_per_unit: int = DEFAULT_STEPS_PER_UNIT,
    method: str = "auto",
) -> BondCoefficients:
    """Solve the Riccati system for ``(F, G)(t; T, nu)`` at the given times.

    Parameters
    ----------
    model : AffineModelSpec or parameter object
        The affine model.
    T : float
        Maturity of the transform.
    nu : array_like, optional
        Transform argument, shape ``(d,)`` or ``(n, d)``; complex allowed.
        Defaults to zero.
    times : float or array_like, optional
        Times ``t <= T`` at which to report the solution. Defaults to ``0``.
    steps_per_unit : int
        RK4 steps per unit time for the numeric route.
    method : {"auto", "numeric", "closed"}
        ``auto`` uses a registered closed form when it covers ``nu``.
    """
    spec = as_spec(model)
    if steps_per_unit < 1:
        raise ValueError("steps_per_unit must be >= 1")
    nu_arr = np.zeros(spec.d) if nu is None else np.asarray(nu)
    single_nu = nu_arr.ndim <= 1
    nu2 = np.atleast_2d(nu_arr).astype(complex).reshape(-1, spec.d)
    t_arr = np.asarray(0.0 if times is None else times, dtype=float)
    scalar_t = t_arr.ndim == 0
    t1 = np.atleast_1d(t_arr)
    if np.any(t1 > T + 1e-14):
        raise ValueError("all times must satisfy t <= T")
    t1 = np.minimum(t1, T)

    F = G = None
    provenance = "numeric"
    if method not in ("auto", "numeric", "closed"):
        raise ValueError(f"unknown method {method!r}")
    if method != "numeric" and spec.closed_form is not None:
        try:
            F, G = spec.closed_form(t1, float(T), nu2)
            provenance = "closed-form" if F is not None else "mixed"
        except UnsupportedNuError:
            if method == "closed":
                raise
            F = G = None
    elif method == "closed":
        raise UnsupportedNuError(f"model {spec.name!r} registers no closed form")

    if G is None or F is None:
        F_num, G_num = _integrate_rk4(spec, float(T), nu2, t1, steps_per_unit)
        F = F_num
        if G is None:
            G = G_num
            provenance = "numeric"
    F = np.asarray(F)
    G = np.asarray(G)
    _check_finite(F, G, float(np.min(t1)))

    if single_nu:
        F, G = F[0], G[0]
    if scalar_t:
        F, G = F[..., 0], G[..., 0, :]
    return BondCoefficients(
        T=float(T),
        times=t_arr,
        nu=nu_arr,
        F=F,
        G=G,
        provenance=provenance,
        steps_per_unit=steps_per_unit if provenance != "closed-form" else None,
    )


def gamma_transform(model, state: StatePoint, T: float, nu, **kwargs):
    """``exp(-F(t;T,nu) - G(t;T,nu) . y)``; vectorised over a leading ``nu`` axis."""
    spec = as_spec(model)
    y = spec.check_state(state.y)
    coeffs = solve_riccati(spec, T, nu, state.t, **kwargs)
    return np.exp(-coeffs.F - coeffs.G @ y)


def bond_price(model, state: StatePoint, T: float, **kwargs) -> float:
    """Zero-coupon bond price ``B_t^T = Gamma(t, y; T, 0)``."""
    spec = as_spec(model)
    if T < state.t:
        raise ValueError("bond maturity must not precede the valuation time")
    value = gamma_transform(spec, state, T, np.zeros(spec.d), **kwargs)
    return float(np.real(value))
