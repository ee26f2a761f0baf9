import math

import numpy as np
import pytest

from relaylattice import admissibility as adm
from relaylattice.admissibility import (ConstantsTable, MissingConstantError, add_E,
                                        admissibility_verdict, check_requirements, find_n0,
                                        harmonic_sum, kappa_of, kernel_constants, psi,
                                        requirement_margins, structural_constants, sum_constants)
from relaylattice.kernels import SQRT_PI, h, h_deriv


def test_kernel_constants():
    Bh2, Bh4 = kernel_constants()
    assert Bh2 == pytest.approx(1 / (4 * SQRT_PI), rel=1e-15)
    assert Bh4 == pytest.approx(3 / (8 * SQRT_PI), rel=1e-15)
    step = 1e-2
    fd = (h(2 * step) - 4 * h(step) + 6 * h(0.0) - 4 * h(step) + h(2 * step)) / step ** 4
    assert fd == pytest.approx(Bh4, abs=1e-4)
    xs = np.linspace(0, 20, 1000)
    assert np.all(np.abs(h_deriv(xs, 2)) <= Bh2 * (1 + 1e-15))


@pytest.mark.parametrize("a", [0.7, 1.33, 4.26, 84.0])
def test_structural(a):
    st = structural_constants(a)
    assert 0 < st["p"] <= 2 / math.e
    assert st["D_p1"] < min(st["D_p2"], 0.5)
    assert st["kappa"] > 0
    assert st["N"] == 1 or kappa_of(st["p"], st["N"] - 1)[2] <= 0
    assert st["D_a"] > h(a ** -0.5)
    assert adm.phi_p_nonincreasing(a, st["p"])


def test_sum_constants():
    sc = sum_constants(1, 2000, 0.5)
    assert sc["R"]["scan_value"] <= math.pi + 1e-9
    # inverse square-root endpoints: pi - sum ~ 2 |zeta(1/2)| / sqrt(2 n)
    gap = 2 * 1.4603545088095868 / math.sqrt(2 * 2000)
    assert sc["R"]["last"] == pytest.approx(math.pi - gap, abs=1e-3)
    assert sc["R"]["value"] == math.pi
    n = 3
    k = np.arange(-(n - 1), n)
    assert sc["T2"]["value"] >= math.fsum(n ** 2 / (n * n - k * k) ** 2)
    assert sc["T3/2"]["value"] >= sc["T3/2"]["limit"]


@pytest.mark.parametrize("n", [2, 3, 10, 100, 5000])
def test_harmonic_sum(n):
    direct = math.fsum(1.0 / (n * n - k * k) for k in range(-(n - 1), n))
    assert harmonic_sum(n) == pytest.approx(direct, rel=1e-14)
    assert harmonic_sum(n) <= (2 * math.log(n - 1) + 2 + 1 / n) / n


def test_table_roundtrip(table20):
    text = table20.to_json()
    back = ConstantsTable.from_json(text)
    assert back.to_json() == text
    for k in table20.names():
        assert back[k] == table20[k]
    with pytest.raises(MissingConstantError):
        table20["nope"]


def test_table_invariants(table20):
    t = table20
    assert t["kappa"] > 0
    assert 0 < t["p"] <= 2 / math.e
    assert t["D_p1"] < min(t["D_p2"], 0.5)
    assert t["D_a"] > h(t["a"] ** -0.5)
    assert t["E0"] > 0
    assert t.entries["L_ft_star"].info["above_c1"]
    assert t.entries["C_H"].info["above_c1"]
    assert t["theta0"] * t["K_h"] < 0.25
    assert 0 < t["eta"] < 1 / (4 * SQRT_PI)
    assert t["b"] > 2 * t["a"]
    assert not t.unreliable


def test_certification_box(table20):
    a, x0, eps0, eta = table20["a"], table20["x0"], table20["eps0"], table20["eta"]
    xs = np.linspace(x0, 1 - 1e-9, 400)
    base = a * (1 - xs * xs)
    for w in (0.0, 0.5, 1.0):
        lo = -np.minimum(eps0, base / 2)
        assert np.all(psi(a, xs, lo + w * (eps0 - lo)) <= -eta)
    assert psi(a, 1 - 1e-12, 0.0) == pytest.approx(-1 / (4 * SQRT_PI), abs=1e-5)


def test_requirement10_example(table20):
    tab = add_E(table20, table20["E0"])
    entries = dict(tab.entries)
    entries["theta0"] = adm.Entry(0.1, "test", "parameter", "B")
    entries["tau0"] = adm.Entry(1.0, "test", "parameter", "A")
    t2 = ConstantsTable(entries, tab.meta)
    m = requirement_margins(t2["E"], t2, [99, 100, 101])[10]
    assert list(m >= 0) == [False, True, True]


def test_requirements_need_R2(table20):
    with pytest.raises(MissingConstantError):
        check_requirements(table20["E0"], table20, 10)


def test_find_n0(table20):
    E = 1.1 * table20["E0"]
    rep = find_n0(E, table20, 20000)
    assert rep.n0 is not None and rep.n0 >= table20["N"]
    ok = np.ones(len(rep.n), dtype=bool)
    for r in adm.REQUIREMENTS:
        ok &= rep.margins[r] >= 0
    assert np.all(ok[rep.n >= rep.n0])
    assert not ok[rep.n == rep.n0 - 1].any() if rep.n0 > table20["N"] else True
    single = check_requirements(E, add_E(table20, E), rep.n0)
    assert all(v[0] for v in single.values())
    assert rep.to_csv().splitlines()[0].startswith("n,req1,req2")
    # a positive decaying margin passes the tail test through its scaled form
    assert 8 not in rep.failing_tail


def test_verdict_small_E(hist20, params20):
    v = admissibility_verdict(0.01, 20, hist20, params20)
    assert v.verdict == "not-admissible"
    assert "q_bound" in v.violated
    good = admissibility_verdict(5.0, 20, hist20, params20)
    assert good.verdict == "admissible"
    assert good.clauses["gradient"]["grad"] <= -0.375 * params20.h1
    assert admissibility_verdict(5.0, 20, hist20, params20, unreliable=["A0"]).verdict == "undetermined"
    with pytest.raises(ValueError):
        admissibility_verdict(5.0, 100, hist20, params20)
