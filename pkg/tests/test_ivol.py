import math
import warnings

import numpy as np
import pytest
from numpy.polynomial import hermite as phys_hermite
from scipy.integrate import quad

from affinesmile.blackscholes import bs_call
from affinesmile.errors import DegenerateError, OutOfRegimeWarning
from affinesmile.fourier import exact_implied_vol
from affinesmile.ivol import HermiteContext, QuadratureConfig, expand, nested_integrals, sigma0, sigma1, sigma2, sigma_bar
from affinesmile.lsv import _make, coefficients, forward_log_price
from affinesmile.models import vasicek_sigma

from conftest import TBAR, fong_vasicek
from oracles import iv_from_price_expansion, operator_expansion


def _scalar(fn):
    return lambda s: float(fn(np.array([s]))[0])


def single(a, t, T):
    return quad(_scalar(a), t, T, epsabs=1e-15, epsrel=1e-13)[0]


def nested(a, b, t, T):
    """``int_t^T a(s) int_t^s b(q) dq ds`` by adaptive quadrature."""
    return quad(lambda s: _scalar(a)(s) * single(b, t, s), t, T, epsabs=1e-15, epsrel=1e-12)[0]


def _cir_expansion(cir, T):
    x = float(forward_log_price(cir, 0.0, [0.08], T, TBAR))
    co = coefficients(cir, 0.0, x, [], T, TBAR)
    return x, co, expand(co)


def test_vasicek_sigma0_is_closed_form(vasicek):
    for Tbar in [1.0, 3.0, 10.0]:
        x = float(forward_log_price(vasicek, 0.0, [0.08], 0.5, Tbar))
        e = expand(coefficients(vasicek, 0.0, x, [], 0.5, Tbar))
        assert e.sigma0 == pytest.approx(vasicek_sigma(vasicek, 0.0, 0.5, Tbar), rel=1e-12)
        ks = x + np.linspace(-0.05, 0.05, 5)
        assert np.all(e.sigma1(ks) == 0) and np.all(e.sigma2(ks) == 0)


def test_constant_integrand_simplex_volumes():
    a, t, T = 0.3, 0.1, 0.8
    co = _make(1, t, -0.01, [], T, 1.0, lambda s, x, y: a + 0 * s, taylor={"c00": lambda s: a + 0 * np.asarray(s, dtype=float)})
    tb = nested_integrals(co, t, T)
    c = tb["c00"]
    tau = T - t
    assert tb.single(c) == pytest.approx(a * tau, rel=1e-14)
    assert tb.double(c, c) == pytest.approx(a * a * tau**2 / 2, rel=1e-13)
    assert tb.triple(c, c, c) == pytest.approx(a**3 * tau**3 / 6, rel=1e-13)


def test_cir_nested_integral_matches_adaptive_quadrature(cir):
    T = 0.5
    x, co, _ = _cir_expansion(cir, T)
    tb = nested_integrals(co, 0.0, T)
    ours = tb.single(tb["c10"] * tb.Ic)
    assert ours == pytest.approx(nested(co.chi("c10"), co.chi("c00"), 0.0, T), abs=1e-10 * abs(ours) + 1e-16)


def test_refinement_stability(cir2d):
    x = float(forward_log_price(cir2d, 0.0, [0.04, 0.04], 0.75, TBAR))
    co = coefficients(cir2d, 0.0, x, [0.04], 0.75, TBAR)
    base = expand(co)
    fine = expand(co, QuadratureConfig().refined())
    ks = x + np.linspace(-0.05, 0.05, 5)
    assert base.sigma0 == pytest.approx(fine.sigma0, rel=1e-13)
    assert np.allclose(base.sigma2(ks), fine.sigma2(ks), rtol=1e-10, atol=1e-15)


def test_hermite_basis_definition():
    ctx = HermiteContext(0.2, 0.5)
    x, k = -0.01, 0.03
    xi = ctx.xi(x, k)
    assert xi == pytest.approx((x - k - 0.5 * 0.2**2 * 0.5) / (0.2 * math.sqrt(1.0)))
    for n in range(5):
        coef = np.zeros(n + 1)
        coef[n] = 1
        ref = (-1 / (0.2 * math.sqrt(2 * 0.5))) ** n * phys_hermite.hermval(xi, coef)
        assert ctx.H(n, x, k) == pytest.approx(ref, rel=1e-13)


def test_cir_matches_explicit_display(cir):
    for T in [1 / 12, 0.75]:
        x, co, e = _cir_expansion(cir, T)
        c0, c1 = co.chi("c00"), co.chi("c10")
        A = nested(c1, c0, 0.0, T)
        # int_{s1 < s2} c1(s1) c1(s2) int_t^{s1} c0
        inner = lambda s1: _scalar(c1)(s1) * single(c0, 0.0, s1) * single(c1, s1, T)
        B = quad(inner, 0.0, T, epsabs=1e-16, epsrel=1e-12)[0]
        s0, tau = e.sigma0, T
        assert s0 == pytest.approx(math.sqrt(2 / tau * single(c0, 0.0, T)), rel=1e-12)
        for m in np.linspace(-0.1, 0.1, 9):
            S1 = 2 * m / (s0**3 * tau**2) * A
            S2 = 6 * m**2 / (s0**7 * tau**4) * (-2 * A**2 + s0**2 * tau * B) + (s0**2 * tau + 12) / (2 * s0**5 * tau**3) * (A**2 - s0**2 * tau * B)
            assert e.sigma1(x + m) == pytest.approx(S1, abs=1e-10)
            assert e.sigma2(x + m) == pytest.approx(S2, abs=1e-10)


def test_cir2d_first_order_matches_explicit_display(cir2d):
    T = 0.25
    x = float(forward_log_price(cir2d, 0.0, [0.04, 0.04], T, TBAR))
    co = coefficients(cir2d, 0.0, x, [0.04], T, TBAR)
    e = expand(co)
    s0, tau = e.sigma0, T
    ch = co.chi
    slope = 2 * nested(ch("c10"), ch("c00"), 0, T) + nested(ch("c01"), ch("h00"), 0, T)
    level = 2 * nested(ch("c01"), ch("f00"), 0, T) + nested(ch("c01"), ch("h00"), 0, T)
    for m in [-0.02, 0.0, 0.02]:
        ref = m / (tau**2 * s0**3) * slope + level / (2 * tau * s0)
        assert e.sigma1(x + m) == pytest.approx(ref, abs=1e-12)


def test_cir_corrections_are_polynomials_in_log_moneyness(cir):
    x, _, e = _cir_expansion(cir, 0.5)
    m = np.linspace(-0.04, 0.04, 5)
    for order, fn in [(1, e.sigma1), (2, e.sigma2)]:
        vals = fn(x + m)
        fit = np.polynomial.polynomial.polyfit(m, vals, order)
        resid = vals - np.polynomial.polynomial.polyval(m, fit)
        assert np.max(np.abs(resid)) <= 1e-10


def test_matches_operator_expansion_with_every_coefficient_active(rng):
    t, T, x = 0.0, 0.5, -0.1
    keys = ["c00", "c10", "c01", "c20", "c11", "c02", "f00", "f10", "f01", "g00", "h00", "h10", "h01"]

    def smooth(a, b, c):
        return lambda s: a + b * np.asarray(s, dtype=float) + c * np.cos(3 * np.asarray(s, dtype=float))

    chi = {k: smooth(*rng.normal(size=3) * 0.05) for k in keys}
    chi["c00"] = smooth(0.02, 0.01, 0.005)
    chi["g00"] = smooth(0.01, 0.0, 0.002)
    co = _make(2, t, x, [0.05], T, 1.0, lambda s, x_, y_: 0 * s, taylor=chi)
    e = expand(co)
    for k in [x - 0.05, x, x + 0.07]:
        v0, v1, v2 = operator_expansion(chi, t, T, x, k, n_nodes=40)
        s1, s2 = iv_from_price_expansion(v0, v1, v2, x, k, T - t, e.sigma0)
        assert e.sigma1(k) == pytest.approx(s1, rel=1e-10)
        assert e.sigma2(k) == pytest.approx(s2, rel=1e-8)


def test_price_consistency_improves_with_order(cir):
    T = 1 / 12
    x, _, e = _cir_expansion(cir, T)
    ks = x + np.array([-0.01, 0.0, 0.01])
    exact = exact_implied_vol(cir, 0.0, x, [], T, TBAR, ks)
    prices = bs_call(x, ks, T, exact)
    errs = [np.max(np.abs(bs_call(x, ks, T, e.sigma_bar(n, ks)) - prices)) for n in range(3)]
    assert errs[2] < errs[1] < errs[0]


def test_fong_vasicek_slope_sign_follows_correlation():
    slopes = []
    for rho in (-0.7, 0.7):
        fv = fong_vasicek(rho)
        x = float(forward_log_price(fv, 0.0, [0.08, 0.08], 0.25, TBAR))
        e = expand(coefficients(fv, 0.0, x, [0.08], 0.25, TBAR))
        h = 1e-4
        slopes.append((e.sigma_bar(1, x + h) - e.sigma_bar(1, x - h)) / (2 * h))
    assert slopes[0] * slopes[1] < 0


def test_out_of_regime_flagged_not_clamped(cir):
    x, _, e = _cir_expansion(cir, 0.75)
    far = x + 2.0
    with pytest.warns(OutOfRegimeWarning):
        value = e.sigma_bar(2, far)
    assert value <= 0
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        e.sigma_bar(2, far, warn=False)


def test_degenerate_sigma0_raises():
    co = _make(1, 0.0, -0.01, [], 0.5, 1.0, lambda s, x, y: 0 * s, taylor={"c00": lambda s: 0 * np.asarray(s, dtype=float)})
    with pytest.raises(DegenerateError):
        sigma0(co, 0.0, 0.5)


def test_module_functions_check_anchor(cir):
    x, co, e = _cir_expansion(cir, 0.5)
    assert sigma_bar(co, 2, 0.0, x, [], 0.5, x + 0.01) == pytest.approx(e.sigma_bar(2, x + 0.01))
    assert sigma1(co, 0.0, x, [], 0.5, x) == pytest.approx(e.sigma1(x))
    assert sigma2(co, 0.0, x, [], 0.5, x) == pytest.approx(e.sigma2(x))
    with pytest.raises(ValueError):
        sigma1(co, 0.0, x + 0.1, [], 0.5, x)
    with pytest.raises(ValueError):
        e.sigma_bar(3, x)
