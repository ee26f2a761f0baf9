import numpy as np
import pytest

from relaylattice.kernels import integral_I
from relaylattice.params import Params, PreconditionError
from relaylattice.rate import a_sweep, residuals, solve_a, solve_a_f_form, sweep_csv


@pytest.mark.parametrize("h1", [1.5, 2.0])
def test_solve_a_residuals(h1):
    p = Params(0.5, h1)
    s = solve_a(p)
    assert abs(integral_I("H", s.a) - (h1 - 1.0) / h1) <= 1e-10
    assert abs(s.residual_f) <= 1e-8 and abs(s.residual_g) <= 1e-8
    assert abs(s.residual_h) <= 1e-10
    assert s.a > 0 and s.iterations > 0


def test_h1_two_gives_half():
    s = solve_a(Params(0.5, 2.0))
    assert integral_I("H", s.a) == pytest.approx(0.5, abs=1e-12)


def test_uniqueness_probe():
    p = Params(0.5, 1.7)
    s = solve_a(p)
    target = (p.h1 - 2 * p.c) / p.h1
    assert np.sign(integral_I("H", 0.9 * s.a) - target) != np.sign(integral_I("H", 1.1 * s.a) - target)


def test_f_form_agrees():
    p = Params(0.5, 1.3)
    assert solve_a_f_form(p) == pytest.approx(solve_a(p).a, rel=1e-6)


def test_residual_forms_vanish_together():
    p = Params(0.7, 2.2)
    a = solve_a(p).a
    rf, rg, rh = residuals(p, a)
    assert max(abs(rf), abs(rg), abs(rh)) <= 1e-10


def test_precondition():
    with pytest.raises(PreconditionError):
        solve_a(Params(0.5, 1.0))


def test_sweep_monotone_and_deterministic():
    h1s = [round(1.1 + 0.1 * i, 10) for i in range(15)]
    rows = a_sweep(0.5, h1s)
    assert len(rows) == 15
    a = [s.a for _, s in rows]
    assert np.all(np.diff(a) < 0)
    assert a[0] > a[-1]
    dup = a_sweep(0.5, [1.5, 1.5])
    assert dup[0][1].a == dup[1][1].a
    threaded = a_sweep(0.5, h1s, threads=4)
    assert [s.a for _, s in threaded] == a
    text = sweep_csv(rows)
    assert text.splitlines()[0] == "h1,a,residual_f,residual_g,residual_h"
    assert len(text.splitlines()) == 16
