"""Pure numpy implementation of the hot kernels.

Mirrors ``_core.pyx`` line for line; selected automatically when the compiled
extension is unavailable.

The lattice Green function is evaluated by the M-point trapezoid rule of its
Fourier integral. Writing ``s_j = 1 - cos(2 pi j / M)``,

    y_m(tau) = tau/M + G_m(M) - (1/M) sum_{j != 0} exp(-2 tau s_j) cos(m theta_j) / (2 s_j)

where ``G_m(M) = (M^2 - 1)/(12 M) - m (M - m)/(2 M)`` is the exact trapezoid sum
of the tau-independent part ``1/(2 s)``. Only the ``j`` with
``2 tau s_j <= TAIL_CUT`` contribute to the remaining sum, so the cost per
evaluation does not grow with tau. For ``tau <= TAU_SPLIT`` the plain sum is
used instead, which avoids cancellation against ``G_m`` when y is tiny.
"""

from __future__ import annotations

import math

import numpy as np

TAIL_CUT = 60.0
TAU_SPLIT = 15.0
M_MIN = 64


def point_count(mmax: int, tau: float) -> int:
    """Even trapezoid size whose aliasing error is below double precision."""
    m = max(M_MIN, int(mmax) + int(math.ceil(16.0 * math.sqrt(max(tau, 0.0)))) + 32)
    return m + (m & 1)


def _cycle_green(m, M):
    m = np.asarray(m, dtype=float)
    return (M * M - 1.0) / (12.0 * M) - m * (M - m) / (2.0 * M)


def _green_block(tau: float, ms: np.ndarray, M: int):
    """(y, ydot, yddot) for the integer offsets ``ms`` (nonnegative) at one tau."""
    half = M // 2
    if tau <= TAU_SPLIT:
        j = np.arange(half + 1)
        wgt = np.full(half + 1, 2.0)
        wgt[0] = 1.0
        wgt[half] = 1.0
        sh = np.sin(math.pi * j / M)
        s = 2.0 * sh * sh
        e = np.exp(-2.0 * tau * s)
        w = np.empty(half + 1)
        w[0] = tau
        w[1:] = -np.expm1(-2.0 * tau * s[1:]) / (2.0 * s[1:])
        ang = (2.0 * math.pi / M) * np.mod(np.outer(ms, j), M)
        c = np.cos(ang) * wgt
        y = c @ w / M
        yd = c @ e / M
        ydd = c @ (-2.0 * s * e) / M
        return y, yd, ydd
    # tail only: 2 tau s_j <= TAIL_CUT  <=>  sin(pi j / M) <= sqrt(TAIL_CUT / (4 tau))
    jmax = int(M / math.pi * math.asin(min(1.0, math.sqrt(TAIL_CUT / (4.0 * tau))))) + 1
    jmax = min(jmax, half - 1)
    j = np.arange(1, jmax + 1)
    sh = np.sin(math.pi * j / M)
    s = 2.0 * sh * sh
    e = np.exp(-2.0 * tau * s)
    keep = 2.0 * tau * s <= TAIL_CUT
    j, s, e = j[keep], s[keep], e[keep]
    ang = (2.0 * math.pi / M) * np.mod(np.outer(ms, j), M)
    c = 2.0 * np.cos(ang)
    y = tau / M + _cycle_green(ms, M) - c @ (e / (2.0 * s)) / M
    yd = (1.0 + c @ e) / M
    ydd = c @ (-2.0 * s * e) / M
    return y, yd, ydd


def green_values(ms, tau: float, M: int = 0):
    """y, ydot, yddot of the lattice Green function at offsets ``ms`` and time ``tau``.

    ``M = 0`` selects :func:`point_count` automatically.
    """
    ms = np.abs(np.atleast_1d(np.asarray(ms, dtype=np.int64)))
    if tau < 0:
        z = np.zeros(len(ms))
        return z, z.copy(), z.copy()
    if M <= 0:
        M = point_count(int(ms.max()) if len(ms) else 0, tau)
    if len(ms) and ms.max() > M:
        raise ValueError("offset exceeds trapezoid size")
    return _green_block(float(tau), ms, int(M))


def green_sums(ns, t: float, ks, tks):
    """Sums over a symmetric switched set of Green values.

    For each ``n`` in ``ns`` returns ``sum_{k in S} y_{n-k}(t - t_k)`` together
    with the matching sums of ydot and yddot, where ``S`` contains ``0`` (if
    present in ``ks``) and both ``+k`` and ``-k`` for every positive ``k``.
    Terms with ``t < t_k`` are zero.
    """
    ns = np.asarray(ns, dtype=np.int64)
    ks = np.asarray(ks, dtype=np.int64)
    tks = np.asarray(tks, dtype=float)
    out_y = np.zeros(len(ns))
    out_yd = np.zeros(len(ns))
    out_ydd = np.zeros(len(ns))
    if len(ns) == 0:
        return out_y, out_yd, out_ydd
    nabs = np.abs(ns)
    for k, tk in zip(ks, tks):
        tau = t - tk
        if tau < 0:
            continue
        if k == 0:
            ms = nabs
        else:
            ms = np.concatenate([np.abs(ns - k), np.abs(ns + k)])
        M = point_count(int(ms.max()), tau)
        y, yd, ydd = _green_block(tau, ms, M)
        if k == 0:
            out_y += y
            out_yd += yd
            out_ydd += ydd
        else:
            L = len(ns)
            out_y += y[:L] + y[L:]
            out_yd += yd[:L] + yd[L:]
            out_ydd += ydd[:L] + ydd[L:]
    return out_y, out_yd, out_ydd


def ive_range(nmax: int, x: float) -> np.ndarray:
    """``exp(-x) I_k(x)`` for ``k = 0..nmax`` by normalized Miller recurrence.

    Backward recurrence ``I_{k-1} = (2k/x) I_k + I_{k+1}`` from a start index
    well past the numerically relevant orders, normalized with
    ``exp(-x) (I_0 + 2 sum_{k>=1} I_k) = 1``.
    """
    if x < 0:
        raise ValueError("x must be nonnegative")
    out = np.zeros(nmax + 1)
    if x == 0.0:
        out[0] = 1.0
        return out
    start = nmax + 50 + int(math.ceil(20.0 * math.sqrt(x)))
    nxt, cur = 0.0, 1e-300
    total = 0.0
    for k in range(start, 0, -1):
        prev = (2.0 * k / x) * cur + nxt
        nxt, cur = cur, prev
        # cur now holds order k-1, nxt order k
        if k <= nmax:
            out[k] = nxt
        total += 2.0 * nxt
        if cur > 1e250:
            cur *= 1e-250
            nxt *= 1e-250
            out *= 1e-250
            total *= 1e-250
    out[0] = cur
    total += cur
    return out / total
