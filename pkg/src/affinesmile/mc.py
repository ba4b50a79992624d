"""Monte Carlo oracle: Euler simulation of the factor process under P.

Paths are generated in fixed-size blocks, each with its own Philox stream
spawned from one seed, so a fixed ``(seed, config)`` reproduces the same
estimate regardless of how blocks are scheduled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .affine import StatePoint, as_spec, bond_price, solve_riccati
from .errors import SchemeError
from .lsv import BondCurves, eta

SCHEMES = ("full-truncation", "euler")


@dataclass(frozen=True)
class SimConfig:
    """Simulation controls.

    ``paths`` counts simulated paths including antithetic partners.
    ``block`` is the number of paths per independent random stream.
    """

    paths: int = 100_000
    steps_per_unit: int = 200
    scheme: str = "full-truncation"
    seed: int = 20240601
    antithetic: bool = False
    block: int = 10_000

    def __post_init__(self):
        if self.paths < 2:
            raise ValueError("paths must be >= 2")
        if self.steps_per_unit < 1:
            raise ValueError("steps_per_unit must be >= 1")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        if self.block < 2 or (self.antithetic and self.block % 2):
            raise ValueError("block must be >= 2 (and even with antithetic sampling)")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class MCEstimate:
    """Sample mean with its standard error; arrays when several payoffs share paths."""

    mean: object
    stderr: object
    paths: int

    def __post_init__(self):
        if np.any(np.asarray(self.stderr) < 0):
            raise ValueError("standard error must be nonnegative")

    def within(self, value, n_se: float = 3.0) -> bool:
        return bool(np.all(np.abs(np.asarray(self.mean) - value) <= n_se * np.asarray(self.stderr)))


def _sqrt_psd(a: np.ndarray) -> np.ndarray:
    """Lower-triangular factor ``L L^T = a`` for a batch of PSD matrices, zero pivots allowed."""
    n = a.shape[-1]
    L = np.zeros_like(a)
    for j in range(n):
        diag = a[..., j, j] - np.sum(L[..., j, :j] ** 2, axis=-1)
        ljj = np.sqrt(np.maximum(diag, 0.0))
        L[..., j, j] = ljj
        safe = np.where(ljj > 0, ljj, 1.0)
        for i in range(j + 1, n):
            off = a[..., i, j] - np.sum(L[..., i, :j] * L[..., j, :j], axis=-1)
            L[..., i, j] = np.where(ljj > 0, off / safe, 0.0)
    return L


def _simulate_block(spec, t, y0, T, n_paths, cfg: SimConfig, rng, need_state=True):
    """Return terminal states and the trapezoid integral of ``r`` for one block."""
    d = spec.d
    steps = max(1, math.ceil((T - t) * cfg.steps_per_unit - 1e-9))
    h = (T - t) / steps
    sqh = math.sqrt(h)
    nonneg = np.array(spec.nonnegative)
    truncate = cfg.scheme == "full-truncation"
    y = np.broadcast_to(y0, (n_paths, d)).copy()

    def clipped(v):
        return np.where(nonneg, np.maximum(v, 0.0), v) if truncate else v

    r_int = np.zeros(n_paths)
    r_prev = clipped(y) @ spec.psi + spec.q
    half = n_paths // 2
    for n in range(steps):
        s = t + n * h
        if cfg.antithetic:
            z_half = rng.standard_normal((half, d))
            z = np.concatenate([z_half, -z_half])
        else:
            z = rng.standard_normal((n_paths, d))
        yc = clipped(y)
        if not truncate and np.any(y[:, nonneg] < 0):
            raise SchemeError(
                "plain Euler left the nonnegative domain of a square-root factor; use scheme='full-truncation'"
            )
        drift = spec.drift(s, yc)
        cov = spec.covariance(s, yc)
        L = _sqrt_psd(cov)
        y = y + drift * h + sqh * np.einsum("pij,pj->pi", L, z)
        r_next = clipped(y) @ spec.psi + spec.q
        r_int += 0.5 * h * (r_prev + r_next)
        r_prev = r_next
    if not truncate and np.any(y[:, nonneg] < 0):
        raise SchemeError(
            "plain Euler left the nonnegative domain of a square-root factor; use scheme='full-truncation'"
        )
    return clipped(y), r_int


def _run(spec, state: StatePoint, T: float, cfg: SimConfig, payoff_fn):
    """Average ``payoff_fn(Y_T, int r)`` (shape ``(paths, m)``) over all blocks."""
    y0 = spec.check_state(state.y)
    n_blocks = math.ceil(cfg.paths / cfg.block)
    children = np.random.SeedSequence(cfg.seed).spawn(n_blocks)
    mean = None
    m2 = None
    count = 0
    for b, child in enumerate(children):
        n = min(cfg.block, cfg.paths - b * cfg.block)
        if cfg.antithetic and n % 2:
            n -= 1
        if n <= 0:
            continue
        rng = np.random.Generator(np.random.Philox(child))
        yT, r_int = _simulate_block(spec, state.t, y0, T, n, cfg, rng)
        vals = payoff_fn(yT, r_int)
        if cfg.antithetic:
            vals = 0.5 * (vals[: n // 2] + vals[n // 2:])
        # combine centred block moments (Chan et al.) to avoid cancellation
        nb = vals.shape[0]
        block_mean = vals.mean(axis=0)
        block_m2 = ((vals - block_mean) ** 2).sum(axis=0)
        if mean is None:
            mean, m2, count = block_mean, block_m2, nb
        else:
            total = count + nb
            delta = block_mean - mean
            mean = mean + delta * nb / total
            m2 = m2 + block_m2 + delta * delta * count * nb / total
            count = total
    var = m2 / max(count - 1, 1)
    se = np.sqrt(var / count)
    paths = count * (2 if cfg.antithetic else 1)
    return mean, se, paths


def _squeeze(v):
    v = np.asarray(v)
    return v.reshape(())[()] if v.size == 1 else v


def simulate_discounted_payoff(model, state: StatePoint, T: float, Tbar: float, payoff="bond", cfg: SimConfig = SimConfig()) -> MCEstimate:
    """``E_t[exp(-int_t^T r ds) phi]`` where ``phi`` is ``1`` (``"bond"``) or ``(B_T^Tbar - e^k)^+``.

    ``payoff`` may be ``"bond"`` or one or more log strikes sharing the same paths.
    """
    spec = as_spec(model)
    if not state.t <= T <= Tbar:
        raise ValueError("need t <= T <= Tbar")
    if isinstance(payoff, str):
        if payoff != "bond":
            raise ValueError("payoff must be 'bond' or log strike(s)")
        strikes = None
    else:
        strikes = np.atleast_1d(np.asarray(payoff, dtype=float))
    if state.t == T:
        y = spec.check_state(state.y)
        if strikes is None:
            return MCEstimate(1.0, 0.0, cfg.paths)
        xT = math.log(bond_price(spec, StatePoint(T, y), Tbar))
        val = np.maximum(math.exp(xT) - np.exp(strikes), 0.0)
        return MCEstimate(_squeeze(val), _squeeze(np.zeros_like(val)), cfg.paths)
    bond = solve_riccati(spec, Tbar, np.zeros(spec.d), T)
    F_bar = float(np.real(bond.F))
    G_bar = np.real(np.asarray(bond.G))

    def payoff_fn(yT, r_int):
        disc = np.exp(-r_int)
        if strikes is None:
            return disc[:, None]
        BT = np.exp(-F_bar - yT @ G_bar)
        return disc[:, None] * np.maximum(BT[:, None] - np.exp(strikes)[None, :], 0.0)

    mean, se, paths = _run(spec, state, T, cfg, payoff_fn)
    return MCEstimate(_squeeze(mean), _squeeze(se), paths)


def forward_call_mc(model, t: float, x: float, ytilde, T: float, Tbar: float, k, cfg: SimConfig = SimConfig()) -> MCEstimate:
    """Monte Carlo T-forward call price, the discounted payoff divided by the exact ``B_t^T``."""
    spec = as_spec(model)
    ytilde = np.atleast_1d(np.asarray(ytilde if ytilde is not None else [], dtype=float))
    y1 = float(eta(spec, t, x, ytilde, T, Tbar, BondCurves(spec, T, Tbar)))
    y = spec.check_state(np.concatenate([[y1], ytilde]))
    state = StatePoint(t, y)
    est = simulate_discounted_payoff(spec, state, T, Tbar, k, cfg)
    B = bond_price(spec, state, T)
    return MCEstimate(_squeeze(np.asarray(est.mean) / B), _squeeze(np.asarray(est.stderr) / B), est.paths)


def simulate_transform(model, state: StatePoint, T: float, nu, cfg: SimConfig = SimConfig()) -> MCEstimate:
    """Monte Carlo estimate of ``Gamma(t, y; T, nu)`` for real ``nu``."""
    spec = as_spec(model)
    nu = np.asarray(nu)
    if np.iscomplexobj(nu) and np.any(np.imag(nu) != 0):
        raise ValueError("simulate_transform supports real nu only")
    nu = np.real(nu).astype(float).reshape(spec.d)
    if state.t == T:
        y = spec.check_state(state.y)
        return MCEstimate(float(np.exp(nu @ y)), 0.0, cfg.paths)

    def payoff_fn(yT, r_int):
        return np.exp(-r_int + yT @ nu)[:, None]

    mean, se, paths = _run(spec, state, T, cfg, payoff_fn)
    return MCEstimate(_squeeze(mean), _squeeze(se), paths)
