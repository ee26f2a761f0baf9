import math
import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from relaylattice import green
from relaylattice.green import (GreenCache, GreenConvergenceError, eval_green, eval_remainder,
                                eval_ydot_bessel, green_arrays, initial_points)
from relaylattice.kernels import f


def test_initial_condition():
    for n in (0, 1, 5, -7):
        assert eval_green(n, 0.0).y == 0.0
    ge = eval_green(0, 0.0)
    assert ge.ydot == pytest.approx(1.0, abs=1e-15)
    assert ge.yddot == pytest.approx(-2.0, abs=1e-14)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 60), st.floats(0.0, 500.0))
def test_symmetry(n, t):
    a, b = eval_green(n, t), eval_green(-n, t)
    assert a.y == pytest.approx(b.y, rel=1e-13, abs=1e-15)
    assert a.ydot == pytest.approx(b.ydot, rel=1e-13, abs=1e-15)
    assert a.yddot == pytest.approx(b.yddot, rel=1e-13, abs=1e-15)


def test_fourier_matches_bessel():
    worst = 0.0
    for t in (0.1, 1.0, 10.0, 100.0, 200.0):
        for n in range(0, 51):
            worst = max(worst, abs(eval_green(n, t).ydot - eval_ydot_bessel(n, t)))
    assert worst <= 1e-10


def test_bessel_point_values():
    assert eval_ydot_bessel(0, 1e-12) == pytest.approx(1.0, abs=1e-11)
    t = 0.5
    assert 0 <= eval_ydot_bessel(5, t) <= math.exp(t * t - 2 * t) * t ** 5 / math.factorial(5)
    assert eval_ydot_bessel(3, 10.0) == pytest.approx(eval_green(3, 10.0).ydot, abs=1e-10)
    with pytest.raises(ValueError):
        eval_ydot_bessel(1, -1.0)


@pytest.mark.parametrize("t", [0.5, 2.0, 10.0, 50.0, 200.0])
def test_ode_residual(t):
    ns = np.arange(-1, 32)
    y, yd, _ = green_arrays(ns, t)
    lap = y[:-2] - 2 * y[1:-1] + y[2:]
    src = (ns[1:-1] == 0).astype(float)
    assert np.max(np.abs(yd[1:-1] - lap - src)) <= 1e-8


def test_second_derivative_matches_time_difference():
    t, dt = 7.0, 1e-4
    for n in (0, 3, 9):
        fd = (eval_green(n, t + dt).ydot - eval_green(n, t - dt).ydot) / (2 * dt)
        assert eval_green(n, t).yddot == pytest.approx(fd, abs=1e-8)


def test_monotone_in_n():
    # tail values reach 1e-30, below the absolute resolution of the Fourier
    # sum, so the ordering is checked on the Bessel path
    for t in (0.3, 1.0, 10.0, 150.0):
        yd = np.array([eval_ydot_bessel(n, t) for n in range(22)])
        assert np.all(np.diff(yd) < 0)
    yd = np.array([eval_green(n, 150.0).ydot for n in range(22)])
    assert np.all(np.diff(yd) < 0)


def test_series_bound():
    for t in np.linspace(0.1, 2.0, 8):
        for n in range(11):
            bound = math.exp(t * t - 2 * t) * t ** n / math.factorial(n)
            assert 0 <= eval_ydot_bessel(n, t) <= bound * (1 + 1e-12)
            assert -1e-15 <= eval_green(n, t).ydot <= bound + 1e-15


def test_nonnegative_and_gradients():
    ge = eval_green(4, 30.0)
    assert ge.y >= 0 and ge.ydot >= 0
    nxt = eval_green(5, 30.0)
    assert ge.grad_y == pytest.approx(nxt.y - ge.y, abs=1e-13)
    assert ge.grad_ydot == pytest.approx(nxt.ydot - ge.ydot, abs=1e-15)


def test_fast_path_agrees():
    ns = np.arange(0, 40)
    for t in (3.0, 40.0, 1e4):
        y, yd, ydd = green_arrays(ns, t)
        for n in (0, 7, 39):
            ge = eval_green(n, t)
            assert y[n] == pytest.approx(ge.y, rel=1e-12, abs=1e-13 * math.sqrt(t))
            assert yd[n] == pytest.approx(ge.ydot, rel=1e-12, abs=1e-16)
            assert ydd[n] == pytest.approx(ge.yddot, rel=1e-10, abs=1e-16)


def test_remainders():
    assert eval_remainder("r0", 0, 9.0) == pytest.approx(eval_green(0, 9.0).y - 3.0 * f(0.0),
                                                         abs=1e-15)
    grid_t = np.geomspace(1.0, 400.0, 12)
    s0 = max(abs(eval_remainder("r0", n, t)) * math.sqrt(t) for n in (0, 5, 20, 64) for t in grid_t)
    s1 = max(abs(eval_remainder("w0", n, t)) * t for n in (0, 5, 20, 64) for t in grid_t)
    assert s0 < 1.0 and s1 < 1.0
    # decay at the stated order: the normalized value is flat in t
    late = [abs(eval_remainder("r1", 0, t)) * t ** 1.5 for t in (100.0, 400.0, 1600.0)]
    assert max(late) / min(late) < 1.1
    with pytest.raises(ValueError):
        eval_remainder("r0", 1, 0.5)
    with pytest.raises(ValueError):
        eval_remainder("bad", 1, 2.0)


def test_errors():
    with pytest.raises(ValueError):
        eval_green(0, -1.0)
    with pytest.raises(ValueError):
        eval_green(0, 1.0, tol=0)


def test_convergence_cap(monkeypatch):
    monkeypatch.setattr(green, "M_CAP", 2 * initial_points(3, 5.0))
    monkeypatch.setattr(green, "ROUND_FLOOR", 0.0)
    with pytest.raises(GreenConvergenceError):
        eval_green(3, 5.0, tol=1e-30)


def test_cache_roundtrip(tmp_path):
    cache = GreenCache()
    for n, t in ((0, 1.5), (3, 10.0), (-2, 0.25), (7, 1234.5)):
        cache.get(n, t)
    path = tmp_path / "cache.bin"
    cache.dump(path)
    back = GreenCache.load(path)
    assert len(back) == len(cache)
    for key, val in cache._data.items():
        assert back._data[key] == val
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"XXXX" + path.read_bytes()[4:])
    with pytest.raises(ValueError):
        GreenCache.load(bad)


def test_cache_concurrent_first_value_wins():
    cache = GreenCache()
    out = []

    def worker():
        out.append(cache.get(5, 77.0))

    threads = [threading.Thread(target=worker) for _ in range(8)]
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    assert len(cache) == 1
    assert all(o is cache.get(5, 77.0) for o in out)


@pytest.mark.parametrize("t", [0.05, 1.0, 30.0, 700.0])
def test_bessel_path_matches_scipy(t):
    from scipy import special
    ns = np.arange(0, 60)
    ours = np.array([eval_ydot_bessel(n, t) for n in ns])
    ref = special.ive(ns, 2.0 * t)
    assert np.allclose(ours, ref, rtol=1e-12, atol=1e-300)
