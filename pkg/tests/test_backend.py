import os
import subprocess
import sys

import numpy as np
import pytest

from relaylattice import _backend, _core_py

core = pytest.importorskip("relaylattice._core")


def test_compiled_backend_selected():
    assert _backend.BACKEND == "cython"


@pytest.mark.parametrize("tau", [0.0, 0.7, 5.0, 15.0, 15.5, 300.0, 1e5])
def test_green_values_agree(tau):
    ms = np.arange(0, 80)
    for a, b in zip(core.green_values(ms, tau), _core_py.green_values(ms, tau)):
        assert np.max(np.abs(a - b)) <= 1e-14 * max(1.0, np.max(np.abs(b)))


def test_green_sums_agree():
    rng = np.random.default_rng(1)
    ks = np.arange(0, 60, dtype=np.int64)
    tks = 1.3 * ks ** 2.0 + rng.uniform(-1, 1, 60)
    tks[0] = 0.0
    ns = np.arange(55, 64, dtype=np.int64)
    t = 1.3 * 61 ** 2
    for a, b in zip(core.green_sums(ns, t, ks, tks), _core_py.green_sums(ns, t, ks, tks)):
        assert np.max(np.abs(a - b)) <= 1e-13 * max(1.0, np.max(np.abs(b)))


def test_ive_and_point_count_agree():
    for x in (0.01, 2.0, 80.0, 1500.0):
        assert np.allclose(core.ive_range(40, x), _core_py.ive_range(40, x), rtol=1e-13, atol=1e-300)
    for m, tau in ((0, 0.0), (10, 3.3), (500, 1e6)):
        assert core.point_count(m, tau) == _core_py.point_count(m, tau)
    with pytest.raises(ValueError):
        core.ive_range(3, -1.0)
    with pytest.raises(ValueError):
        core.green_values([100], 1.0, 64)


def test_fallback_forced_by_environment():
    env = dict(os.environ, RELAYLATTICE_BACKEND="python")
    res = subprocess.run([sys.executable, "-c", "import relaylattice; print(relaylattice.BACKEND)"],
                         capture_output=True, text=True, env=env)
    assert res.stdout.strip() == "python"
