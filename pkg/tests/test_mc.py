import math

import numpy as np
import pytest

from affinesmile.affine import AffineModelSpec, StatePoint, bond_price, gamma_transform
from affinesmile.errors import FellerWarning, SchemeError
from affinesmile.lsv import forward_log_price
from affinesmile.mc import MCEstimate, SimConfig, _simulate_block, forward_call_mc, simulate_discounted_payoff, simulate_transform
from affinesmile.models import CIRParams

from conftest import DELTA, KAPPA, THETA, TBAR

FAST = SimConfig(paths=20_000, steps_per_unit=100, seed=11)


def test_zero_volatility_vasicek_is_deterministic():
    spec = AffineModelSpec.constant(q=0.0, psi=[1.0], b=[KAPPA * THETA], beta=[[-KAPPA]], ell=[[0.0]], lam=[[[0.0]]])
    y0, T = 0.03, 1.5
    est = simulate_discounted_payoff(spec, StatePoint(0.0, [y0]), T, T, "bond", SimConfig(paths=100, steps_per_unit=2000))
    # every path follows the same Euler recursion with trapezoid discounting
    steps = int(T * 2000)
    h = T / steps
    y, integral = y0, 0.0
    for _ in range(steps):
        y_next = y + KAPPA * (THETA - y) * h
        integral += 0.5 * h * (y + y_next)
        y = y_next
    assert est.stderr <= 1e-15
    assert est.mean == pytest.approx(math.exp(-integral), rel=1e-13)
    exact = THETA * T + (y0 - THETA) * (1 - math.exp(-KAPPA * T)) / KAPPA
    assert est.mean == pytest.approx(math.exp(-exact), rel=1e-5)


@pytest.mark.slow
def test_cir_bond_price(cir):
    state = StatePoint(0.0, [0.08])
    est = simulate_discounted_payoff(cir, state, 2.0, 2.0, "bond", SimConfig())
    assert est.paths == 100_000
    assert est.within(bond_price(cir, state, 2.0), 3)


def test_vasicek_transform(vasicek):
    state = StatePoint(0.0, [0.08])
    est = simulate_transform(vasicek, state, 1.0, [0.1], FAST)
    assert est.within(gamma_transform(vasicek, state, 1.0, [0.1]).real, 3)


def test_cir_transform_at_zero_is_bond_price(cir):
    state = StatePoint(0.0, [0.08])
    est = simulate_transform(cir, state, 1.0, [0.0], FAST)
    assert est.within(bond_price(cir, state, 1.0), 3)


def test_transform_at_expiry_is_exact(cir):
    est = simulate_transform(cir, StatePoint(1.0, [0.08]), 1.0, [0.3], FAST)
    assert est.mean == pytest.approx(math.exp(0.3 * 0.08)) and est.stderr == 0.0


def test_transform_rejects_complex_nu(cir):
    with pytest.raises(ValueError):
        simulate_transform(cir, StatePoint(0.0, [0.08]), 1.0, [0.1j], FAST)


def test_fixed_seed_is_bit_identical(cir2d):
    state = StatePoint(0.0, [0.04, 0.04])
    ks = math.log(bond_price(cir2d, StatePoint(0.5, [0.04, 0.04]), TBAR)) + np.array([-0.02, 0.0])
    a = simulate_discounted_payoff(cir2d, state, 0.5, TBAR, ks, FAST)
    b = simulate_discounted_payoff(cir2d, state, 0.5, TBAR, ks, FAST)
    assert np.all(a.mean > 0)
    assert np.array_equal(a.mean, b.mean) and np.array_equal(a.stderr, b.stderr)
    c = simulate_discounted_payoff(cir2d, state, 0.5, TBAR, ks, SimConfig(paths=20_000, steps_per_unit=100, seed=12))
    assert not np.array_equal(a.mean, c.mean)


def test_standard_error_scales_with_paths(cir):
    state = StatePoint(0.0, [0.08])
    small = simulate_transform(cir, state, 0.5, [1.0], SimConfig(paths=10_000, steps_per_unit=50, seed=3))
    large = simulate_transform(cir, state, 0.5, [1.0], SimConfig(paths=40_000, steps_per_unit=50, seed=3))
    assert large.stderr / small.stderr == pytest.approx(0.5, rel=0.2)


def test_full_truncation_keeps_square_root_factor_nonnegative():
    with pytest.warns(FellerWarning):
        harsh = CIRParams(0.5, 0.02, 0.6)  # Feller ratio well below one
    spec = harsh.to_affine()
    rng = np.random.default_rng(0)
    yT, _ = _simulate_block(spec, 0.0, np.array([0.01]), 1.0, 5000, SimConfig(steps_per_unit=20), rng)
    assert np.all(yT >= 0)


def test_plain_euler_leaving_domain_raises():
    with pytest.warns(FellerWarning):
        harsh = CIRParams(0.5, 0.02, 0.6)
    with pytest.raises(SchemeError, match="full-truncation"):
        simulate_discounted_payoff(harsh, StatePoint(0.0, [0.01]), 1.0, 2.0, "bond", SimConfig(paths=5000, steps_per_unit=20, scheme="euler"))


def test_antithetic_sampling_reduces_error(vasicek):
    state = StatePoint(0.0, [0.08])
    plain = simulate_transform(vasicek, state, 1.0, [1.0], FAST)
    anti = simulate_transform(vasicek, state, 1.0, [1.0], SimConfig(paths=20_000, steps_per_unit=100, seed=11, antithetic=True))
    assert anti.paths == 20_000
    assert anti.stderr < plain.stderr
    assert anti.within(gamma_transform(vasicek, state, 1.0, [1.0]).real, 3)


def test_forward_call_shapes(cir):
    x = float(forward_log_price(cir, 0.0, [0.08], 0.25, TBAR))
    est = forward_call_mc(cir, 0.0, x, [], 0.25, TBAR, [x - 0.01, x], FAST)
    assert np.shape(est.mean) == (2,) and np.all(np.diff(est.mean) < 0)


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig(paths=1)
    with pytest.raises(ValueError):
        SimConfig(steps_per_unit=0)
    with pytest.raises(ValueError):
        SimConfig(scheme="milstein")
    with pytest.raises(ValueError):
        MCEstimate(1.0, -1.0, 10)
