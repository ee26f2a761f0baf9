import math

import numpy as np
import pytest

from relaylattice.green import eval_green
from relaylattice.params import Params, PreconditionError
from relaylattice.sim import (SwitchHistory, eval_grad_u, eval_u, no_switch_diagnostic,
                              ode_oracle, simulate)


def test_first_record(hist15, params15):
    r0 = hist15.records[0]
    assert (r0.n, r0.t, r0.q) == (0, 0.0, 0.0)
    assert r0.grad == pytest.approx(-params15.c)


def test_order_and_lower_bound(hist20, params20):
    ts = np.array([hist20.record(n).t for n in range(101)])
    assert np.all(np.diff(ts[1:]) > 0)
    n = np.arange(101)
    assert np.all(ts >= params20.c * n ** 2 / (params20.h1 - 2 * params20.c))


def test_roots(hist15, params15):
    for n in (1, 10, 50, 100):
        t = hist15.record(n).t
        assert abs(eval_u(n, t, hist15)) <= 1e-10 * max(1.0, (params15.h1 - 1) * t)


def test_initial_values():
    p = Params(0.5, 2.0)
    hist = SwitchHistory(p, 1.0)
    from relaylattice.sim import SwitchRecord
    hist.add(SwitchRecord(0, 0.0, 0.0, -0.5))
    for n in (0, 1, 4):
        assert eval_u(n, 0.0, hist) == pytest.approx(-p.c * n * n, abs=1e-14)
        assert eval_grad_u(n, 0.0, hist) == pytest.approx(-p.c * (2 * n + 1), abs=1e-14)
    # before the first switching only node 0 has dropped
    t = 0.3
    for n in (0, 1, 2):
        z = -p.c * n * n + (p.h1 - 2 * p.c) * t - p.h1 * eval_green(n, t).y
        assert eval_u(n, t, hist) == pytest.approx(z, abs=1e-13)


def test_representation_solves_ode(hist15, params15):
    # between switchings: du/dt = Laplacian + drive
    t = 0.5 * (hist15.record(30).t + hist15.record(31).t)
    dt = 1e-4
    for n in (5, 31, 32):
        up = eval_u(n, t + dt, hist15)
        um = eval_u(n, t - dt, hist15)
        lap = eval_u(n - 1, t, hist15) - 2 * eval_u(n, t, hist15) + eval_u(n + 1, t, hist15)
        drive = 0.0 if n <= 30 else params15.h1
        assert (up - um) / (2 * dt) - (lap + drive) == pytest.approx(0.0, abs=1e-6)


def test_gradient_and_laplacian_signs(hist15, params15):
    n = 40
    t0, t1 = hist15.record(n - 1).t, hist15.record(n).t
    for t in np.linspace(t0, t1, 7)[1:]:
        for j in range(n, n + 6):
            assert eval_grad_u(j, t, hist15) < 0
            lap = eval_u(j - 1, t, hist15) - 2 * eval_u(j, t, hist15) + eval_u(j + 1, t, hist15)
            assert lap <= -2 * params15.c + 1e-9


def test_gradient_law(hist15, params15):
    r = hist15.record(100)
    assert r.grad <= -3 * params15.h1 / 8
    assert abs(r.grad + 0.75 * params15.h1) < 0.05


def test_deterministic(params15):
    a = simulate(params15, 15)
    b = simulate(params15, 15)
    assert a.to_csv() == b.to_csv()


def test_scaling_invariance():
    a = simulate(Params(0.5, 1.5), 20)
    b = simulate(Params(1.0, 3.0), 20)
    for n in range(1, 21):
        assert b.record(n).t == pytest.approx(a.record(n).t, rel=1e-11)


def test_csv_and_manifest(hist15):
    lines = hist15.to_csv().splitlines()
    assert lines[0] == "n,t_n,q_n,q_n/sqrt(n),grad,grad+0.75*h1"
    assert len(lines) == 102
    assert '"content_hash"' in hist15.manifest()


def test_preconditions(params15):
    with pytest.raises(PreconditionError):
        simulate(params15, 0)
    with pytest.raises(PreconditionError):
        simulate(Params(0.5, 1.5, h2=1.5), 10)
    with pytest.raises(PreconditionError):
        ode_oracle(params15, 1, 1.0)


def test_ode_oracle_without_relay():
    p = Params(0.5, 1.5)
    hist = ode_oracle(p, 10, 2.0, dt=1e-2, relay=False, a=4.0)
    t, n, u = hist.final_state
    exact = -p.c * n ** 2 + (p.h1 - 2 * p.c) * t
    assert t == pytest.approx(2.0)
    assert np.allclose(u, exact, rtol=0, atol=1e-10)


def test_ode_oracle_agrees_short(hist15, params15):
    hist = ode_oracle(params15, 20, hist15.record(3).t + 1.0, dt=2e-3, a=hist15.a)
    for n in (1, 2, 3):
        assert hist.record(n).t == pytest.approx(hist15.record(n).t, rel=1e-6)
    _, _, u = hist.final_state
    assert np.allclose(u, u[::-1], rtol=0, atol=1e-12)


def test_no_switch_diagnostic(hist15):
    for n in (2, 10, 40):
        rep = no_switch_diagnostic(n, hist15, samples=32)
        assert rep.max_v < 0
        assert abs(rep.v_end) <= 1e-8 * hist15.record(n).t
    rep = no_switch_diagnostic(60, hist15, samples=16)
    assert rep.v_start <= -3 * hist15.params.h1 / 8


def test_h2_positive_run():
    p = Params(0.5, 1.0 + 0.5, h2=1.5)
    hist = simulate(p, 30, t_max=1e7, max_gap_nodes=3)
    ts = [r.t for r in hist.records]
    assert ts == sorted(ts)
    assert len(hist.never_switched) > 0
