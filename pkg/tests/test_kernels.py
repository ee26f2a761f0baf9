import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from relaylattice.kernels import (H0, SQRT_PI, eval_kernel, eval_profile, f, ftilde, g, h,
                                  h_deriv, integral_I)


def test_values_at_zero():
    assert eval_kernel("h", 0.0) == pytest.approx(1 / (2 * SQRT_PI), rel=1e-15)
    assert eval_kernel("h", 0.0) == pytest.approx(0.2820947918, abs=1e-10)
    assert eval_kernel("g", 0.0) == -0.5
    assert eval_kernel("h", 0.0, deriv=1) == 0.0
    assert eval_kernel("h", 0.0, deriv=2) == pytest.approx(-1 / (4 * SQRT_PI), rel=1e-15)
    assert eval_kernel("h", 0.0, deriv=4) == pytest.approx(3 / (8 * SQRT_PI), rel=1e-15)


@pytest.mark.parametrize("x", [0.05, 0.3, 1.0, 2.0, 3.5, 6.0])
def test_f_matches_defining_integral(x):
    inner, _ = integrate.quad(lambda y: y ** -2 * math.exp(-y * y / 4) / (2 * SQRT_PI), x, np.inf,
                              epsabs=0, epsrel=1e-13, limit=200)
    assert f(x) == pytest.approx(2 * x * inner, rel=1e-12, abs=1e-300)


def test_ftilde_matches_third_derivative_form():
    xs = np.linspace(0.01, 8, 50)
    assert np.allclose(ftilde(xs), -h_deriv(xs, 3) / (6 * xs), rtol=1e-12, atol=1e-300)


def test_ftilde_limit_at_zero():
    assert ftilde(0.0) == pytest.approx(-h_deriv(0.0, 4) / 6, rel=1e-14)
    assert ftilde(1e-5) == pytest.approx(ftilde(0.0), rel=1e-8)
    assert ftilde(2e-4) == pytest.approx(-h_deriv(2e-4, 3) / (6 * 2e-4), rel=1e-7)


def test_identity_suite():
    xs = np.linspace(0, 8, 64)
    step = 1e-5
    xp = xs[1:]
    gprime = (g(xp + step) - g(xp - step)) / (2 * step)
    assert np.max(np.abs(gprime - h(xp))) <= 1e-9
    step2 = 1e-4
    fpp = (f(xp + step2) - 2 * f(xp) + f(xp - step2)) / step2 ** 2
    assert np.max(np.abs(fpp - h(xp))) <= 1e-6
    assert np.max(np.abs(2 * h(xs) + xs * g(xs) - f(xs))) <= 1e-12


def test_decay():
    xs = np.linspace(12, 40, 200)
    for name in ("h", "f", "g", "ftilde"):
        assert np.max(np.abs(eval_kernel(name, xs))) <= 1e-12
    for k in range(1, 5):
        assert np.max(np.abs(h_deriv(xs, k))) <= 1e-12


def test_domain_errors():
    with pytest.raises(ValueError):
        eval_kernel("h", -1.0)
    with pytest.raises(ValueError):
        eval_kernel("nope", 1.0)
    with pytest.raises(ValueError):
        eval_kernel("f", 1.0, deriv=1)
    with pytest.raises(ValueError):
        eval_profile("H", 1.0, 1.0)
    with pytest.raises(ValueError):
        eval_profile("H", 1.0, -1.0)


def test_profile_endpoints():
    assert eval_profile("G", 1.7, d=1e-14) == pytest.approx(-0.5, abs=1e-6)
    assert abs(eval_profile("F", 1.7, d=1e-14)) < 1e-6
    assert eval_profile("H", 1.0, 0.0) == pytest.approx(h(1.0), rel=1e-15)
    assert eval_profile("H", 1.0, 0.0) == pytest.approx(0.2197, abs=1e-4)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.05, 20.0), st.floats(-0.99, 0.99), st.sampled_from(["F", "G", "H", "H1", "Ftilde"]))
def test_profile_x_and_d_agree(a, x, name):
    assert eval_profile(name, a, x) == pytest.approx(eval_profile(name, a, d=1.0 - x), rel=1e-12,
                                                     abs=1e-300)


@pytest.mark.parametrize("a", [0.05, 0.3, 1.0, 4.0, 20.0])
def test_integral_identities(a):
    IH = integral_I("H", a)
    assert integral_I("G", a) == pytest.approx(IH - 1, abs=2e-12)
    assert integral_I("F", a) == pytest.approx(((2 * a + 1) * IH - 1) / 2, abs=2e-12)


@pytest.mark.parametrize("name", ["H", "G", "F"])
def test_integral_forms_agree(name):
    assert integral_I(name, 1.0, "original") == pytest.approx(
        integral_I(name, 1.0, "substituted"), abs=1e-10)


def test_integral_H_against_scipy():
    a = 1.3
    ref, _ = integrate.quad(lambda y: 2 * h(y) / (1 + a * y * y), 0, np.inf, epsabs=1e-14)
    assert integral_I("H", a) == pytest.approx(ref, abs=1e-12)


def test_IH_monotone_and_limits():
    grid = np.geomspace(1e-3, 1e3, 25)
    vals = [integral_I("H", a) for a in grid]
    assert np.all(np.diff(vals) < 0)
    assert integral_I("H", 1e-4) >= 0.99
    assert integral_I("H", 1e4) <= 0.02


def test_integral_errors():
    with pytest.raises(ValueError):
        integral_I("H", -1.0)
    with pytest.raises(ValueError):
        integral_I("H", 1.0, form="other")
    with pytest.raises(ValueError):
        integral_I("Q", 1.0)
