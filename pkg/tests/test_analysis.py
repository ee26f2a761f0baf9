import math

import numpy as np
import pytest

from relaylattice.analysis import (CandidateState, FixedPointError, candidate_step, compute_Cn,
                                   extract_qn, fixed_point_map, grad_asymptotics, pattern_stats,
                                   qn_grad_csv, rescaled_map, trend_slope)
from relaylattice.sim import SwitchHistory, SwitchRecord, eval_u


def test_extract_qn(hist15):
    qs = extract_qn(hist15)
    assert qs.q[0] == 0.0
    assert qs.E_fit == pytest.approx(np.max(np.abs(qs.q_scaled[10:])))
    assert qs.E_fit < 5
    assert qs.to_csv().splitlines()[0] == "n,q_n,q_n/sqrt(n)"


def test_wrong_rate_drifts(hist15):
    eps = 0.01 * hist15.a
    good = extract_qn(hist15)
    bad = extract_qn(hist15, a=hist15.a + eps)
    n = good.n.astype(float)
    assert np.allclose(bad.q, good.q - eps * n ** 2, rtol=0, atol=1e-9 * n.max() ** 2)
    sel = n >= 10
    assert abs(trend_slope(n[sel], bad.q_scaled[sel])) > 100 * abs(trend_slope(n[sel], good.q_scaled[sel]))


def test_grad_asymptotics(hist15, params15):
    gf = grad_asymptotics(hist15, params15)
    assert gf.below_three_eighths
    assert gf.log_slope <= 0.1
    assert np.isfinite(gf.A_grad_fit)
    with pytest.raises(ValueError):
        short = SwitchHistory(params15, hist15.a, records=hist15.records[:5])
        grad_asymptotics(short)


def test_Cn_paths_agree(params20, hist20):
    a = hist20.a
    slow = compute_Cn(20, a, params20)
    fast = compute_Cn(20, a, params20, fast=True)
    assert slow == pytest.approx(fast, abs=1e-10)
    # same value from the solution formula with t = a n^2 and t_k = a k^2
    recs = [SwitchRecord(k, a * k * k, 0.0, 0.0) for k in range(20)]
    ideal = SwitchHistory(params20, a, records=recs)
    assert eval_u(20, a * 400, ideal) == pytest.approx(slow, abs=1e-9)
    with pytest.raises(ValueError):
        compute_Cn(0, a, params20)


def test_candidate_step_matches_simulation(hist20):
    worst = 0.0
    for n in range(10, 25):
        st = CandidateState.from_history(hist20, n)
        res = candidate_step(st, E=3.0, kappa=0.2)
        worst = max(worst, abs(res.q - hist20.record(n + 1).q) / math.sqrt(n + 1))
        assert res.min_J >= 0 and res.min_D > 0
        assert abs(res.q) <= 3.0 * math.sqrt(n + 1)
        assert res.state.n == n + 1 and len(res.state.q) == n + 2
    assert worst <= 1e-8


def test_fixed_point_maps_at_solution(hist20):
    st = CandidateState.from_history(hist20, 30)
    q = hist20.record(31).q
    assert fixed_point_map(st, q) == pytest.approx(q, abs=1e-6)
    assert rescaled_map(st, q, 0.2) == pytest.approx(q, abs=1e-6)


def test_candidate_step_reports_missing_root(hist20):
    st = CandidateState.from_history(hist20, 30)
    with pytest.raises(FixedPointError):
        candidate_step(st, E=1e-4)


def test_pattern_stats(hist15):
    N1, N2, ratio = pattern_stats(hist15, 100)
    assert (N1, N2, ratio) == (101, 0, 0.0)


def test_qn_grad_csv(hist15):
    lines = qn_grad_csv(hist15).splitlines()
    assert len(lines) == 102
