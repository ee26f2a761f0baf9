r"""Event-driven simulation of the relay-driven lattice.

The lattice problem is

.. math::

    \dot u_n = \Delta u_n + \mathcal H(u_n), \qquad u_n(0) = -c n^2,

where the relay output is ``h1`` until ``u_n`` first reaches zero and ``-h2``
afterwards. With ``S(t)`` the set of switched nodes and ``t_k`` their switching
moments, the solution is

.. math::

    u_n(t) = -c n^2 + (h_1 - 2c) t - (h_1 + h_2) \sum_{k \in S(t)} y_{n-k}(t - t_k).

:func:`simulate` locates the switching moments from this representation.
:func:`ode_oracle` integrates the truncated lattice directly and serves as an
independent check.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from . import _backend
from .io import content_hash, csv_text, json_text
from .params import Params, PreconditionError
from .rate import solve_a

log = logging.getLogger(__name__)

SIMULTANEITY_TOL = 1e-9
ROOT_TOL = 1e-10
T_RTOL = 1e-11

__all__ = [
    "Params", "SwitchRecord", "SwitchHistory", "eval_u", "eval_grad_u", "simulate",
    "ode_oracle", "no_switch_diagnostic", "NoSwitchReport", "SimulationError",
    "BoundaryContaminationError", "HorizonExceeded",
]


class SimulationError(RuntimeError):
    """Numerical failure during the event loop or the direct integration."""


class HorizonExceeded(SimulationError):
    """The time horizon was reached before the requested node switched."""


class BoundaryContaminationError(SimulationError):
    """The truncated lattice boundary came too close to the threshold."""


@dataclass(frozen=True)
class SwitchRecord:
    """One switching event of node ``n`` (and of its mirror ``-n``)."""

    n: int
    t: float
    q: float
    grad: float


@dataclass
class SwitchHistory:
    """Switching moments of the nonnegative nodes.

    ``ks``/``tks`` hold the switched nonnegative nodes in event order; the set
    of switched nodes is symmetric, so ``-k`` shares ``t_k``.
    """

    params: Params
    a: float
    records: list[SwitchRecord] = field(default_factory=list)
    events: list[dict] = field(default_factory=list)
    never_switched: list[int] = field(default_factory=list)
    root_tol: float = ROOT_TOL
    method: str = "event"

    def __post_init__(self):
        self._by_n = {r.n: r for r in self.records}

    @property
    def ks(self) -> np.ndarray:
        return np.array([r.n for r in self.records], dtype=np.int64)

    @property
    def tks(self) -> np.ndarray:
        return np.array([r.t for r in self.records], dtype=float)

    def add(self, rec: SwitchRecord) -> None:
        if rec.n in self._by_n:
            raise SimulationError(f"node {rec.n} switched twice")
        self.records.append(rec)
        self._by_n[rec.n] = rec

    def record(self, n: int) -> SwitchRecord:
        return self._by_n[abs(int(n))]

    def has(self, n: int) -> bool:
        return abs(int(n)) in self._by_n

    def switched_before(self, t: float, exclude=()) -> tuple[np.ndarray, np.ndarray]:
        """Nonnegative switched nodes with ``t_k <= t``."""
        ks, tks = self.ks, self.tks
        keep = tks <= t
        if exclude:
            keep &= ~np.isin(ks, list(exclude))
        return ks[keep], tks[keep]

    def frontier(self) -> int:
        return max(r.n for r in self.records)

    def to_csv(self) -> str:
        h1 = self.params.h1
        rows = []
        for r in sorted(self.records, key=lambda r: r.n):
            rows.append((r.n, r.t, r.q, r.q / math.sqrt(r.n) if r.n else 0.0,
                         r.grad, r.grad + 0.75 * h1))
        return csv_text(["n", "t_n", "q_n", "q_n/sqrt(n)", "grad", "grad+0.75*h1"], rows)

    def manifest(self, extra: dict | None = None) -> str:
        """JSON run manifest; ``content_hash`` covers the CSV output."""
        body = {
            "params": self.params.as_dict(),
            "a": self.a,
            "method": self.method,
            "root_tol": self.root_tol,
            "simultaneity_tol": SIMULTANEITY_TOL,
            "backend": _backend.BACKEND,
            "n_records": len(self.records),
            "never_switched": self.never_switched,
            "non_frontier_events": [e for e in self.events if e.get("non_frontier")],
            "content_hash": content_hash(self.to_csv()),
        }
        if extra:
            body.update(extra)
        return json_text(body)


# -- solution representation ------------------------------------------------


def _u_parts(ns, t, ks, tks, params: Params):
    """u, udot, uddot at nodes ``ns`` and time ``t`` for switched set (ks, tks)."""
    ns = np.asarray(ns, dtype=np.int64)
    Y, Yd, Ydd = _backend.green_sums(ns, t, ks, tks)
    base = -params.c * ns.astype(float) ** 2 + (params.h1 - 2 * params.c) * t
    d = params.drop
    return base - d * Y, (params.h1 - 2 * params.c) - d * Yd, -d * Ydd


def eval_u(n: int, t: float, hist: SwitchHistory, params: Params | None = None) -> float:
    """Solution value ``u_n(t)`` from the Green representation."""
    params = params or hist.params
    if t < 0:
        raise ValueError("t must be nonnegative")
    ks, tks = hist.switched_before(t)
    return float(_u_parts([n], t, ks, tks, params)[0][0])


def eval_grad_u(n: int, t: float, hist: SwitchHistory, params: Params | None = None) -> float:
    """Forward difference ``u_{n+1}(t) - u_n(t)``."""
    params = params or hist.params
    ks, tks = hist.switched_before(t)
    u = _u_parts([n, n + 1], t, ks, tks, params)[0]
    return float(u[1] - u[0])


# -- event loop ---------------------------------------------------------------


def _scan_step(a: float, n: int) -> float:
    return max(0.25, 0.02 * a * (2 * n - 1))


def _refine(fn, lo: float, hi: float) -> float:
    return optimize.brentq(fn, lo, hi, xtol=T_RTOL * 1e-3 * max(1.0, hi), rtol=4 * np.finfo(float).eps,
                           maxiter=200)


def simulate(params: Params, n_max: int, root_tol: float = ROOT_TOL, a: float | None = None,
             t_max: float | None = None, max_gap_nodes: int = 0) -> SwitchHistory:
    """Locate switching moments until node ``n_max`` has switched.

    Parameters
    ----------
    params : Params
    n_max : int
        Last node to switch (``>= 1``).
    root_tol : float
        Tolerance on ``|u|`` at a root, relative to ``max(1, (h1 - 2c) t)``,
        the size of the terms that cancel in ``u``.
    a : float, optional
        Rate constant; solved for when omitted. Only used for ``q_n`` and the
        scan step.
    t_max : float, optional
        Time horizon. Required when ``h2 > 0``, where some nodes never switch.
    max_gap_nodes : int
        With ``h2 > 0``, unswitched nodes behind the frontier are dropped from
        the candidate set once they are well below the threshold and falling.

    Returns
    -------
    SwitchHistory
    """
    if n_max < 1:
        raise PreconditionError("n_max must be at least 1")
    if params.h2 > 0 and t_max is None:
        raise PreconditionError("h2 > 0 needs a time horizon t_max")
    if a is None:
        a = solve_a(params).a
    c, h1 = params.c, params.h1
    hist = SwitchHistory(params=params, a=a, root_tol=root_tol)
    hist.add(SwitchRecord(0, 0.0, 0.0, -c))
    ks = [0]
    tks = [0.0]
    retired: set[int] = set()
    t_now = 0.0

    while True:
        m = max(ks)
        if m >= n_max and params.h2 == 0:
            break
        if m >= n_max and params.h2 > 0:
            break
        switched = set(ks)
        cand = [j for j in range(1, m + 3) if j not in switched and j not in retired]
        cand = np.array(cand, dtype=np.int64)
        ka, ta = np.array(ks, dtype=np.int64), np.array(tks)
        lb = c * cand.astype(float) ** 2 / (h1 - 2 * c)
        dt = _scan_step(a, m + 1)

        def u_at(t, nodes=cand):
            return _u_parts(nodes, t, ka, ta, params)

        t_a = max(t_now, float(lb.min()))
        u_a, ud_a, _ = u_at(t_a)
        hits = []
        while not hits:
            t_b = t_a + dt
            if t_max is not None and t_a > t_max:
                raise HorizonExceeded(f"horizon {t_max} reached with frontier {m}")
            u_b, ud_b, _ = u_at(t_b)
            for i, n in enumerate(cand):
                if lb[i] > t_b:
                    continue
                if u_b[i] >= 0:
                    hits.append((i, t_a, t_b))
                elif ud_a[i] > 0 > ud_b[i]:
                    # interior maximum inside the window could cross and return
                    def du(s, n=n):
                        return u_at(s, np.array([n]))[1][0]
                    ts = optimize.brentq(du, t_a, t_b, xtol=1e-12 * t_b)
                    if u_at(ts, np.array([n]))[0][0] >= 0:
                        hits.append((i, t_a, ts))
            if not hits:
                t_a, u_a, ud_a = t_b, u_b, ud_b
        roots = []
        for i, lo, hi in hits:
            n = int(cand[i])

            def fn(s, n=n):
                return u_at(s, np.array([n]))[0][0]
            r = _refine(fn, lo, hi)
            resid = abs(fn(r))
            scale = max(1.0, (h1 - 2 * c) * r)
            if resid > root_tol * scale:
                log.warning("node %d: |u(t_n)| = %.3e above root tolerance", n, resid)
            roots.append((r, n))
        roots.sort()
        t_ev = roots[0][0]
        group = [(r, n) for r, n in roots if r - t_ev <= SIMULTANEITY_TOL]
        for r, n in group:
            grad = float(np.diff(_u_parts([n, n + 1], r, ka, ta, params)[0])[0])
            hist.add(SwitchRecord(n, r, r - a * n * n, grad))
            ks.append(n)
            tks.append(r)
        nodes = [n for _, n in group]
        non_frontier = any(n != m + 1 for n in nodes)
        hist.events.append({"t": t_ev, "nodes": nodes, "frontier": m, "non_frontier": non_frontier})
        if non_frontier:
            log.info("non-frontier switching at t=%.6g: nodes %s, frontier %d", t_ev, nodes, m)
        t_now = t_ev
        if params.h2 > 0:
            # retire gap nodes that sit well below threshold and are falling
            ka, ta = np.array(ks, dtype=np.int64), np.array(tks)
            gaps = [j for j in range(1, max(ks)) if j not in set(ks) and j not in retired]
            if gaps:
                gu, gud, _ = _u_parts(gaps, t_now, ka, ta, params)
                for j, uj, udj in zip(gaps, gu, gud):
                    if uj <= -0.05 * h1 and udj < 0 and (j - 1) in ks and (j + 1) in ks:
                        retired.add(j)
            if max_gap_nodes and len(gaps) > max_gap_nodes:
                retired.update(gaps[:len(gaps) - max_gap_nodes])
    hist.never_switched = sorted(retired)
    return hist


# -- direct integration oracle -------------------------------------------------


def ode_oracle(params: Params, radius: int, t_end: float, dt: float = 1e-3,
               relay: bool = True, a: float | None = None,
               check_symmetry: bool = True) -> SwitchHistory:
    """Classical RK4 on the truncated lattice ``|n| <= radius``.

    Ghost nodes ``+-(radius + 1)`` follow the exact far-field formula built from
    the oracle's own switching moments. A sign change of ``u_n`` over a step is
    located by bisection on the cubic Hermite interpolant of the step, the
    step is repeated up to that moment, and the relay output is dropped.

    ``relay=False`` keeps every node at drive ``h1``, for which the exact
    solution is ``-c n^2 + (h1 - 2c) t``.
    """
    if radius < 2:
        raise PreconditionError("radius must be at least 2")
    if not 0 < dt <= 0.5:
        raise PreconditionError("dt must lie in (0, 0.5] for RK4 stability")
    c, h1, d = params.c, params.h1, params.drop
    if a is None:
        a = solve_a(params).a
    idx = np.arange(-radius, radius + 1)
    mid = radius
    u = -c * idx.astype(float) ** 2
    drive = np.full(idx.size, h1)
    sw_k: list[int] = []
    sw_t: list[float] = []
    hist = SwitchHistory(params=params, a=a, method="ode")
    ghost_n = np.array([radius + 1], dtype=np.int64)
    bound = -c * radius * radius / 2.0

    def ghost(t):
        val = -c * (radius + 1) ** 2 + (h1 - 2 * c) * t
        if sw_k:
            Y = _backend.green_sums(ghost_n, t, np.array(sw_k, dtype=np.int64), np.array(sw_t))[0]
            val -= d * Y[0]
        return val

    def rhs(v, gval, drv):
        lap = np.empty_like(v)
        lap[1:-1] = (v[:-2] + v[2:]) - 2.0 * v[1:-1]
        lap[0] = (gval + v[1]) - 2.0 * v[0]
        lap[-1] = (v[-2] + gval) - 2.0 * v[-1]
        return lap + drv

    def rk4(v, t, h, drv):
        g0, gh, g1 = ghost(t), ghost(t + 0.5 * h), ghost(t + h)
        k1 = rhs(v, g0, drv)
        k2 = rhs(v + 0.5 * h * k1, gh, drv)
        k3 = rhs(v + 0.5 * h * k2, gh, drv)
        k4 = rhs(v + h * k3, g1, drv)
        return v + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4), k1

    if relay:
        # node 0 sits at the threshold at t = 0
        drive[mid] = -params.h2
        sw_k.append(0)
        sw_t.append(0.0)
        hist.add(SwitchRecord(0, 0.0, 0.0, float(u[mid + 1] - u[mid])))
    t = 0.0
    while t < t_end - 1e-12:
        h = min(dt, t_end - t)
        v1, f0 = rk4(u, t, h, drive)
        if not np.all(np.isfinite(v1)):
            raise SimulationError(f"non-finite state at t={t}")
        live = drive > 0
        crossed = live & (v1 >= 0) if relay else np.zeros_like(live)
        if np.any(crossed):
            f1 = rhs(v1, ghost(t + h), drive)
            ts = {}
            for i in np.flatnonzero(crossed):
                ts[i] = _hermite_root(u[i], v1[i], f0[i], f1[i], h)
            s_min = min(ts.values())
            first = [i for i, s in ts.items() if s - s_min <= SIMULTANEITY_TOL]
            u, _ = rk4(u, t, s_min, drive)
            t = t + s_min
            for i in first:
                drive[i] = -params.h2
                n = int(idx[i])
                if n >= 0:
                    sw_k.append(n)
                    sw_t.append(t)
            for i in first:
                n = int(idx[i])
                if n >= 0:
                    hist.add(SwitchRecord(n, t, t - a * n * n, float(u[i + 1] - u[i])
                                          if i + 1 < idx.size else float("nan")))
        else:
            u, t = v1, t + h
        if check_symmetry and not np.array_equal(u, u[::-1]):
            raise SimulationError(f"symmetry lost at t={t}")
        if u[0] > bound:
            raise BoundaryContaminationError(
                f"boundary value {u[0]:.4g} above {bound:.4g} at t={t}; enlarge radius")
    hist.final_state = (t, idx.copy(), u.copy())
    return hist


def _hermite_root(u0, u1, f0, f1, h):
    """Root in (0, h] of the cubic Hermite interpolant with u0 < 0 <= u1."""

    def p(s):
        x = s / h
        h00 = (1 + 2 * x) * (1 - x) ** 2
        h10 = x * (1 - x) ** 2
        h01 = x * x * (3 - 2 * x)
        h11 = x * x * (x - 1)
        return h00 * u0 + h10 * h * f0 + h01 * u1 + h11 * h * f1

    lo, hi = 0.0, h
    if p(hi) < 0:
        return hi
    for _ in range(100):
        m = 0.5 * (lo + hi)
        if p(m) < 0:
            lo = m
        else:
            hi = m
        if hi - lo <= 1e-15 * max(1.0, h):
            break
    return hi


# -- no-switch diagnostic -----------------------------------------------------


@dataclass(frozen=True)
class NoSwitchReport:
    """Samples of ``v_n`` (node ``n`` before it switches) on ``[t_{n-1}, t_n)``."""

    n: int
    max_v: float
    argmax_t: float
    v_start: float
    v_end: float
    phase1_max_vdot: float
    phase1_bound: float
    phase2_min_vddot: float
    theta0: float


def _chebyshev_points(lo: float, hi: float, samples: int) -> np.ndarray:
    j = np.arange(samples)
    x = np.cos(np.pi * (2 * j + 1) / (2 * samples))
    return np.sort(lo + (hi - lo) * 0.5 * (1 + x))


def no_switch_diagnostic(n: int, hist: SwitchHistory, params: Params | None = None,
                         samples: int = 64, theta0: float = 0.1, K_h: float | None = None
                         ) -> NoSwitchReport:
    """Sample ``v_n`` between the two switching moments around node ``n``.

    ``v_n`` uses the switched set ``{|k| <= n-1}``. The first phase is
    ``[t_{n-1}, t_{n-1} + theta0 sqrt(n-1)]`` where ``v_n`` should grow slowly;
    on the rest of the interval ``v_n`` should be convex. When ``K_h`` is given,
    the phase-1 bound ``3 h1 K_h / (2 sqrt(n-1))`` is reported alongside.
    """
    params = params or hist.params
    if n < 1:
        raise ValueError("n must be at least 1")
    t0, t1 = hist.record(n - 1).t, hist.record(n).t
    ks = np.arange(0, n, dtype=np.int64)
    tks = np.array([hist.record(k).t for k in ks])
    ts = np.concatenate([[t0], _chebyshev_points(t0, t1, samples)])
    vals = np.array([_u_parts([n], s, ks, tks, params)[0][0] for s in ts])
    i = int(np.argmax(vals))
    v_end = float(_u_parts([n], t1, ks, tks, params)[0][0])
    split = t0 + theta0 * math.sqrt(max(n - 1, 0))
    split = min(split, t1)
    p1 = np.linspace(t0, split, 17) if split > t0 else np.array([t0])
    p2 = _chebyshev_points(split, t1, 32) if t1 > split else np.array([t1])
    vdot = max(_u_parts([n], s, ks, tks, params)[1][0] for s in p1)
    vdd = min(_u_parts([n], s, ks, tks, params)[2][0] for s in p2)
    bound = 1.5 * params.h1 * K_h / math.sqrt(n - 1) if (K_h is not None and n > 1) else float("nan")
    return NoSwitchReport(n=n, max_v=float(vals[i]), argmax_t=float(ts[i]),
                          v_start=float(vals[0]), v_end=v_end, phase1_max_vdot=float(vdot),
                          phase1_bound=bound, phase2_min_vddot=float(vdd), theta0=theta0)
