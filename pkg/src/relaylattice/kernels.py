r"""Scalar kernels of the lattice Green function asymptotics and their profiles.

The kernels are

.. math::

    h(x) = \frac{1}{2\sqrt{\pi}} e^{-x^2/4}, \quad
    g(x) = -\tfrac12 \operatorname{erfc}(x/2), \quad
    f(x) = 2h(x) + x g(x), \quad
    \tilde f(x) = -\frac{h'''(x)}{6x},

and the profiles on :math:`x \in (-1, 1)` are built from the scaled argument
:math:`y(x) = a^{-1/2}\sqrt{(1-x)/(1+x)}`. Every profile accepts the distance
to the right endpoint ``d = 1 - x`` so that Riemann sums at ``x = k/n`` can pass
``(n - k)/n`` without rounding away the singular factor.
"""

from __future__ import annotations

import heapq
import math
from typing import Callable

import numpy as np
from scipy import special

SQRT_PI = math.sqrt(math.pi)
H0 = 1.0 / (2.0 * SQRT_PI)

KERNELS = ("h", "f", "g", "ftilde")
PROFILES = ("F", "G", "H", "H1", "Ftilde", "Hbar")

# Upper limit for the substituted (0, inf) integrals; the envelope 2 h(y) has
# tail mass erfc(Y_MAX / 2) < 1e-40 beyond it.
Y_MAX = 20.0
Y_MAX_TAIL_BOUND = float(special.erfc(Y_MAX / 2.0))


class QuadratureError(RuntimeError):
    """Adaptive quadrature could not reach the requested tolerance."""


def _check_nonneg(x):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or np.any(np.isnan(x)):
        raise ValueError("kernels are defined for x >= 0 only")
    return x


def hermite(k: int, u):
    """Physicists' Hermite polynomial H_k(u) by the three-term recurrence."""
    u = np.asarray(u, dtype=float)
    prev = np.ones_like(u)
    if k == 0:
        return prev
    cur = 2.0 * u
    for j in range(1, k):
        prev, cur = cur, 2.0 * u * cur - 2.0 * j * prev
    return cur


def h(x):
    x = np.asarray(x, dtype=float)
    return H0 * np.exp(-0.25 * x * x)


def h_deriv(x, k: int):
    """k-th derivative of h, ``h^(k)(x) = h(x) (-1/2)^k H_k(x/2)``."""
    if not 0 <= k <= 4:
        raise ValueError(f"derivative order must be in 0..4, got {k}")
    x = np.asarray(x, dtype=float)
    return h(x) * (-0.5) ** k * hermite(k, 0.5 * x)


def g(x):
    x = np.asarray(x, dtype=float)
    return -0.5 * special.erfc(0.5 * x)


def f(x):
    x = np.asarray(x, dtype=float)
    return 2.0 * h(x) + x * g(x)


def ftilde(x):
    # -h'''(x)/(6x) simplified; no removable singularity remains
    x = np.asarray(x, dtype=float)
    return (x * x - 6.0) * np.exp(-0.25 * x * x) / (96.0 * SQRT_PI)


def eval_kernel(name: str, x, deriv: int = 0):
    """Evaluate a kernel by name on ``x >= 0``.

    ``deriv`` is only meaningful for ``h`` (orders 0..4).
    """
    x = _check_nonneg(x)
    if name == "h":
        out = h_deriv(x, deriv)
    elif deriv != 0:
        raise ValueError(f"derivatives are only provided for h, not {name!r}")
    elif name == "f":
        out = f(x)
    elif name == "g":
        out = g(x)
    elif name == "ftilde":
        out = ftilde(x)
    else:
        raise ValueError(f"unknown kernel {name!r}")
    return out if out.ndim else float(out)


# -- profiles ----------------------------------------------------------------


def _profile_parts(a: float, d):
    """Return (y, s) with y the kernel argument and s = sqrt(a (1 - x^2))."""
    d = np.asarray(d, dtype=float)
    e = 2.0 - d  # 1 + x
    y = np.sqrt(d / e) / math.sqrt(a)
    s = np.sqrt(a * d * e)
    return y, s


def eval_profile(name: str, a: float, x=None, *, d=None):
    """Evaluate profile ``name`` at ``x`` (or at ``1 - x = d``) for rate ``a``.

    Parameters
    ----------
    name : {"F", "G", "H", "H1", "Ftilde", "Hbar"}
    a : float
        Rate constant, ``a > 0``.
    x : float or array, optional
        Point(s) in (-1, 1).
    d : float or array, optional
        ``1 - x`` given directly; preferred near the right endpoint.
    """
    if a <= 0:
        raise ValueError("a must be positive")
    if d is None:
        if x is None:
            raise ValueError("give x or d")
        x = np.asarray(x, dtype=float)
        if np.any(np.abs(x) >= 1):
            raise ValueError("profiles are defined on |x| < 1")
        d = 1.0 - x
    else:
        d = np.asarray(d, dtype=float)
        if np.any(d <= 0) or np.any(d >= 2):
            raise ValueError("profiles are defined on 0 < 1 - x < 2")
    y, s = _profile_parts(a, d)
    if name == "F":
        out = s * f(y)
    elif name == "G":
        out = g(y)
    elif name == "H":
        out = h(y) / s
    elif name == "H1":
        out = h_deriv(y, 1) / (s * s)
    elif name == "Ftilde":
        out = ftilde(y) / s
    elif name == "Hbar":
        out = h(y) / (s * s * s / a)
    else:
        raise ValueError(f"unknown profile {name!r}")
    return out if out.ndim else float(out)


# -- adaptive Gauss-Kronrod --------------------------------------------------

_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])
_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
_WK = np.concatenate([_WGK[:-1], _WGK[::-1]])
# Gauss nodes are the odd-indexed Kronrod nodes
_WG_FULL = np.zeros(15)
_WG_FULL[[1, 3, 5, 7, 9, 11, 13]] = np.concatenate([_WG[:-1], _WG[::-1]])


def _gk15(func, lo, hi):
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    vals = func(mid + half * _NODES)
    k = half * np.dot(_WK, vals)
    gq = half * np.dot(_WG_FULL, vals)
    return k, abs(k - gq)


def quad_gk(func: Callable, lo: float, hi: float, tol: float = 1e-13,
            max_intervals: int = 4000) -> tuple[float, float]:
    """Globally adaptive 7/15-point Gauss-Kronrod quadrature.

    ``func`` must accept a numpy array of abscissae. The interval with the
    largest error estimate is bisected until the summed estimate is at most
    ``tol`` (absolute).

    Returns
    -------
    value, error_estimate : float, float
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    val, err = _gk15(func, lo, hi)
    heap = [(-err, lo, hi, val)]
    total, total_err = val, err
    n = 1
    while True:
        if total_err <= tol:
            # re-sum so the running totals carry no cancellation drift
            total = math.fsum(item[3] for item in heap)
            total_err = math.fsum(-item[0] for item in heap)
            if total_err <= tol:
                break
        if n >= max_intervals:
            raise QuadratureError(
                f"error estimate {total_err:.3e} above tol {tol:.3e} after {n} intervals")
        neg_err, a0, b0, v0 = heapq.heappop(heap)
        m = 0.5 * (a0 + b0)
        v1, e1 = _gk15(func, a0, m)
        v2, e2 = _gk15(func, m, b0)
        heapq.heappush(heap, (-e1, a0, m, v1))
        heapq.heappush(heap, (-e2, m, b0, v2))
        n += 1
        total += v1 + v2 - v0
        total_err += e1 + e2 + neg_err
    return float(total), float(total_err)


# -- integrals I_F, I_G, I_H -------------------------------------------------

_SUBSTITUTED = {
    "H": lambda a, y: 2.0 * h(y) / (1.0 + a * y * y),
    "G": lambda a, y: 4.0 * a * y * g(y) / (1.0 + a * y * y) ** 2,
    "F": lambda a, y: 8.0 * a * a * y * y * f(y) / (1.0 + a * y * y) ** 3,
    "Ftilde": lambda a, y: 2.0 * ftilde(y) / (1.0 + a * y * y),
}


def integral_I(name: str, a: float, form: str = "original", tol: float = 1e-13) -> float:
    """Integral of profile ``name`` over (-1, 1).

    ``form="original"`` integrates in x after the change ``x = 1 - u^2`` which
    removes the square-root endpoint behaviour at ``x = 1``;
    ``form="substituted"`` integrates the equivalent (0, inf) representation in
    the kernel argument, truncated at ``Y_MAX``.
    """
    if a <= 0:
        raise ValueError("a must be positive")
    if form == "original":
        if name not in PROFILES:
            raise ValueError(f"unknown profile {name!r}")

        def integrand(u):
            d = u * u
            out = np.zeros_like(u)
            ok = (d > 0) & (d < 2)
            out[ok] = eval_profile(name, a, d=d[ok]) * 2.0 * u[ok]
            return out

        val, _ = quad_gk(integrand, 0.0, math.sqrt(2.0), tol)
    elif form == "substituted":
        try:
            fn = _SUBSTITUTED[name]
        except KeyError:
            raise ValueError(f"no substituted form for {name!r}") from None
        val, _ = quad_gk(lambda y: fn(a, y), 0.0, Y_MAX, tol)
    else:
        raise ValueError(f"unknown integral form {form!r}")
    return val
