r"""Post-processing of switch histories and the fixed-point form of the switching equation.

With ``t_k = a k^2 + q_k`` the switching condition ``u_{n+1}(t_{n+1}) = 0``
reads

.. math::

    C_{n+1} + D_{n+1}(q)\,q + h_1 \sum_{k=0}^{n} J_{n+1,k}(q)\,q_k = 0,

where ``C_n`` is the value obtained with ``q = 0`` everywhere,
``J_{n,k}`` is the difference quotient of ``y_{n-k} + y_{n+k}`` between
``a(n^2 - k^2)`` and ``a(n^2 - k^2) + q_n - q_k`` and
``D_n = h1 - 2c - h1 sum_k J_{n,k}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import _backend
from .green import eval_green
from .io import csv_text
from .params import Params
from .sim import SwitchHistory

# below this |q_m - q_k| the difference quotient is replaced by its Taylor form
DQ_SWITCH = 1e-4


class FixedPointError(RuntimeError):
    """No sign change of ``q - F(q)`` on the admissible interval."""


# -- q_n series ---------------------------------------------------------------


@dataclass(frozen=True)
class QnSeries:
    a: float
    n: np.ndarray
    q: np.ndarray
    q_scaled: np.ndarray
    E_fit: float
    window: tuple[int, int]

    def to_csv(self) -> str:
        return csv_text(["n", "q_n", "q_n/sqrt(n)"], zip(self.n.tolist(), self.q.tolist(),
                                                         self.q_scaled.tolist()))


def extract_qn(hist: SwitchHistory, a: float | None = None,
               window: tuple[int, int] | None = None) -> QnSeries:
    """``q_n = t_n - a n^2`` and the envelope ``max |q_n|/sqrt(n)`` over ``window``."""
    if not hist.records:
        raise ValueError("empty history")
    a = hist.a if a is None else a
    recs = sorted(hist.records, key=lambda r: r.n)
    n = np.array([r.n for r in recs], dtype=np.int64)
    t = np.array([r.t for r in recs])
    q = t - a * n.astype(float) ** 2
    qs = np.where(n > 0, q / np.sqrt(np.maximum(n, 1)), 0.0)
    lo, hi = window if window is not None else (min(10, int(n.max())), int(n.max()))
    sel = (n >= lo) & (n <= hi)
    E_fit = float(np.max(np.abs(qs[sel]))) if np.any(sel) else float("nan")
    return QnSeries(a=a, n=n, q=q, q_scaled=qs, E_fit=E_fit, window=(lo, hi))


def trend_slope(x: Sequence[float], y: Sequence[float]) -> float:
    """Least-squares slope of ``y`` against ``x``."""
    return float(np.polyfit(np.asarray(x, float), np.asarray(y, float), 1)[0])


# -- gradient law -------------------------------------------------------------


@dataclass(frozen=True)
class GradFit:
    A_grad_fit: float
    n: np.ndarray
    grad: np.ndarray
    residuals: np.ndarray
    log_slope: float
    trailing_slope: float
    below_three_eighths: bool
    window: tuple[int, int]

    def to_csv(self) -> str:
        return csv_text(["n", "grad", "residual"], zip(self.n.tolist(), self.grad.tolist(),
                                                       self.residuals.tolist()))


def grad_asymptotics(hist: SwitchHistory, params: Params | None = None,
                     window: tuple[int, int] | None = None, trailing: int = 20) -> GradFit:
    """Scaled deviations ``(grad_n + 3 h1 / 4) sqrt(n)`` from the limiting gradient.

    ``log_slope`` is the exponent of a power-law fit of ``|residual|`` over the
    window; ``trailing_slope`` the linear trend over the last ``trailing`` nodes.
    """
    params = params or hist.params
    if len(hist.records) < 20:
        raise ValueError("need at least 20 records")
    recs = sorted(hist.records, key=lambda r: r.n)
    nmax = recs[-1].n
    lo, hi = window if window is not None else (10, nmax)
    sel = [r for r in recs if lo <= r.n <= hi]
    n = np.array([r.n for r in sel], dtype=float)
    grad = np.array([r.grad for r in sel])
    res = (grad + 0.75 * params.h1) * np.sqrt(n)
    absr = np.abs(res)
    pos = absr > 0
    log_slope = trend_slope(np.log(n[pos]), np.log(absr[pos])) if pos.sum() > 1 else 0.0
    tail = slice(max(0, len(n) - trailing), len(n))
    return GradFit(A_grad_fit=float(absr.max()), n=n.astype(np.int64), grad=grad, residuals=res,
                   log_slope=log_slope, trailing_slope=trend_slope(n[tail], absr[tail]),
                   below_three_eighths=bool(np.all(grad <= -0.375 * params.h1)),
                   window=(lo, hi))


# -- C_n ----------------------------------------------------------------------


def _pair_values(n: int, k: int, tau: float):
    """``y, ydot, yddot`` of ``y_{n-k} + y_{n+k}`` (or ``y_n`` alone for ``k = 0``)."""
    ms = [n] if k == 0 else [n - k, n + k]
    y, yd, ydd = _backend.green_values(ms, tau)
    return float(y.sum()), float(yd.sum()), float(ydd.sum())


def compute_Cn(n: int, a: float, params: Params, fast: bool = False) -> float:
    """``-c n^2 + (h1 - 2c) a n^2 - h1 sum_{|k| <= n-1} y_{n-k}(a (n^2 - k^2))``.

    ``fast=False`` evaluates each Green value through :func:`eval_green`
    (point doubling); ``fast=True`` uses the backend's fixed point count.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    terms = []
    for k in range(n):
        tau = a * (n * n - k * k)
        if fast:
            terms.append(_pair_values(n, k, tau)[0])
        else:
            v = eval_green(n - k, tau).y
            if k:
                v += eval_green(n + k, tau).y
            terms.append(v)
    c, h1 = params.c, params.h1
    return (-c + (h1 - 2 * c) * a) * n * n - h1 * math.fsum(terms)


def Cn_series(n_lo: int, n_hi: int, a: float, params: Params) -> np.ndarray:
    """``C_n`` for ``n = n_lo..n_hi`` on the fast path."""
    return np.array([compute_Cn(n, a, params, fast=True) for n in range(n_lo, n_hi + 1)])


# -- fixed-point step ---------------------------------------------------------


@dataclass
class CandidateState:
    """Accepted deviations ``q_0..q_n`` and the switching-equation data at node ``n``."""

    n: int
    q: list[float]
    a: float
    params: Params
    Cn: float = float("nan")
    Dn: float = float("nan")
    Jnk: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @classmethod
    def from_history(cls, hist: SwitchHistory, n: int) -> "CandidateState":
        q = [hist.record(k).t - hist.a * k * k for k in range(n + 1)]
        st = cls(n=n, q=q, a=hist.a, params=hist.params)
        if n >= 1:
            _, D, J, *_ = _coefficients(st.q[:n], n, st.q[n], st.a, st.params)
            st.Cn = compute_Cn(n, st.a, st.params, fast=True)
            st.Dn, st.Jnk = D, J
        return st


def _base_terms(m: int, a: float):
    """Pair values and Bessel-path slopes at the unshifted times ``a (m^2 - k^2)``."""
    base = np.empty(m)
    yd = np.empty(m)
    ydd = np.empty(m)
    alpha = np.empty(m)
    for k in range(m):
        tau = a * (m * m - k * k)
        base[k], yd[k], ydd[k] = _pair_values(m, k, tau)
        ive = _backend.ive_range(m + k, 2.0 * tau)
        alpha[k] = ive[m - k] + (ive[m + k] if k else 0.0)
    return base, yd, ydd, alpha


def _coefficients(qk: Sequence[float], m: int, qm: float, a: float, params: Params,
                  base=None):
    """Residual ``G(q_m)``, ``D_m``, ``J_{m,k}``, ``alpha`` and ``beta`` for k = 0..m-1.

    ``G`` equals ``u_m`` at ``a m^2 + q_m`` with node ``k`` switched at
    ``a k^2 + q_k``; it is assembled from the exact increments so it stays
    accurate when ``q_m`` is close to some ``q_k``.
    """
    c, h1 = params.c, params.h1
    if base is None:
        base = _base_terms(m, a)
    b, byd, bydd, alpha = base
    incr = np.empty(m)
    J = np.empty(m)
    for k in range(m):
        dq = qm - qk[k]
        tau = a * (m * m - k * k)
        if abs(dq) < DQ_SWITCH:
            # second-order Taylor; the next term is below rounding at this step
            incr[k] = byd[k] * dq + 0.5 * bydd[k] * dq * dq
            J[k] = byd[k] + 0.5 * bydd[k] * dq
        else:
            incr[k] = _pair_values(m, k, tau + dq)[0] - b[k]
            J[k] = incr[k] / dq
    C = (-c + (h1 - 2 * c) * a) * m * m - h1 * math.fsum(b)
    G = C + (h1 - 2 * c) * qm - h1 * math.fsum(incr)
    D = h1 - 2 * c - h1 * float(J.sum())
    beta = J - alpha
    return G, D, J, alpha, beta, C


@dataclass(frozen=True)
class StepResult:
    """Outcome of one fixed-point step at node ``n + 1``."""

    q: float
    state: CandidateState
    C: float
    D: float
    J: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    min_J: float
    min_D: float
    item2_margin: float
    item3_margin: float
    iterations: int


def fixed_point_map(state: CandidateState, q: float) -> float:
    """``F(q) = -(C_{n+1} + h1 sum_k J_{n+1,k}(q) q_k) / D_{n+1}(q)``."""
    m = state.n + 1
    _, D, J, _, _, C = _coefficients(state.q, m, q, state.a, state.params)
    return -(C + state.params.h1 * float(np.dot(J, state.q))) / D


def rescaled_map(state: CandidateState, q: float, kappa: float) -> float:
    """Right side of the equivalent map built with the factor ``1 + kappa/n``."""
    n = state.n
    h1 = state.params.h1
    _, Dn, Jn, *_ = _coefficients(state.q[:n], n, state.q[n], state.a, state.params)
    _, D1, J1, _, _, C1 = _coefficients(state.q, n + 1, q, state.a, state.params)
    Cn = compute_Cn(n, state.a, state.params, fast=True)
    f = 1.0 + kappa / n
    rhs = (-((C1 - Cn) + kappa / n * C1) + (Dn - f * h1 * J1[n]) * state.q[n]
           + h1 * float(np.dot(Jn - f * J1[:n], state.q[:n])))
    return rhs / (f * D1)


def candidate_step(state: CandidateState, E: float, kappa: float | None = None,
                   xtol: float = 1e-12) -> StepResult:
    """Solve ``q = F(q)`` for ``q_{n+1}`` on ``[-E sqrt(n+1), E sqrt(n+1)]`` by bisection.

    The bisection runs on ``q - F(q) = G(q) / D(q)`` with ``G`` the switching
    residual. ``J_{n+1,k} >= 0`` and ``D_{n+1} > 0`` are checked at every
    evaluated point. When ``kappa`` is given, the margins of the two
    coefficient inequalities of the rescaled map are reported (not enforced).

    Raises
    ------
    FixedPointError
        If ``q - F(q)`` has no sign change on the interval.
    """
    n = state.n
    m = n + 1
    a, params = state.a, state.params
    base = _base_terms(m, a)
    half = E * math.sqrt(m)
    min_J, min_D = math.inf, math.inf

    def phi(q):
        nonlocal min_J, min_D
        G, D, J, *_ = _coefficients(state.q, m, q, a, params, base)
        min_J = min(min_J, float(J.min()))
        min_D = min(min_D, D)
        return G / D if D > 0 else math.copysign(math.inf, G)

    lo, hi = -half, half
    flo, fhi = phi(lo), phi(hi)
    if not (flo <= 0 <= fhi or fhi <= 0 <= flo):
        raise FixedPointError(
            f"q - F(q) has no sign change on [{lo:.6g}, {hi:.6g}] at node {m}")
    it = 0
    while hi - lo > xtol * max(1.0, abs(lo)) and it < 200:
        mid = 0.5 * (lo + hi)
        fm = phi(mid)
        if fm == 0:
            lo = hi = mid
            break
        if (fm < 0) == (flo < 0):
            lo, flo = mid, fm
        else:
            hi, fhi = mid, fm
        it += 1
    q = 0.5 * (lo + hi)
    G, D, J, alpha, beta, C = _coefficients(state.q, m, q, a, params, base)
    min_J, min_D = min(min_J, float(J.min())), min(min_D, D)
    item2 = item3 = float("nan")
    if kappa is not None and n >= 1:
        _, Dn, Jn, *_ = _coefficients(state.q[:n], n, state.q[n], a, params)
        f = 1.0 + kappa / n
        item2 = float(np.min(Jn - f * J[:n]))
        item3 = float(Dn - params.h1 * f * J[n])
    new_state = replace(state, n=m, q=list(state.q) + [q], Cn=C, Dn=D, Jnk=J)
    return StepResult(q=q, state=new_state, C=C, D=D, J=J, alpha=alpha, beta=beta,
                      min_J=min_J, min_D=min_D, item2_margin=item2, item3_margin=item3,
                      iterations=it)


# -- discrete pattern ---------------------------------------------------------


def pattern_stats(hist: SwitchHistory, horizon: int) -> tuple[int, int, float]:
    """Counts of switched (``N1``) and never-switched (``N2``) nodes among ``0..horizon``."""
    N1 = sum(1 for j in range(horizon + 1) if hist.has(j))
    N2 = horizon + 1 - N1
    return N1, N2, N2 / N1 if N1 else float("nan")


def qn_grad_csv(hist: SwitchHistory) -> str:
    """Per-node table of ``q_n``, ``q_n/sqrt(n)`` and the gradient residual."""
    h1 = hist.params.h1
    rows = []
    for r in sorted(hist.records, key=lambda r: r.n):
        s = math.sqrt(r.n) if r.n else 0.0
        rows.append((r.n, r.t, r.q, r.q / s if s else 0.0, r.grad, (r.grad + 0.75 * h1) * s))
    return csv_text(["n", "t_n", "q_n", "q_n/sqrt(n)", "grad", "grad_residual"], rows)
