r"""Discrete Green function of the lattice heat equation.

:math:`y_n(t)` solves :math:`\dot y_n = \Delta y_n + [n = 0]`, :math:`y_n(0) = 0`,
and has the Fourier representation

.. math::

    y_n(t) = \frac{1}{2\pi}\int_{-\pi}^{\pi}
        \frac{1 - e^{-2t(1-\cos\theta)}}{2(1-\cos\theta)} e^{in\theta}\,d\theta .

Two independent evaluation paths are provided. :func:`eval_green` integrates
the Fourier form with the trapezoid rule, which converges spectrally for this
smooth periodic integrand. :func:`eval_ydot_bessel` uses
:math:`\dot y_n(t) = e^{-2t} I_n(2t)`. Space differences are forward,
:math:`\nabla y_n = y_{n+1} - y_n`.
"""

from __future__ import annotations

import math
import struct
import threading
from dataclasses import dataclass

import numpy as np

from . import _backend
from .kernels import f, ftilde, g, h, h_deriv

M_START = 256
M_CAP = 2 ** 22
ROUND_FLOOR = 8.0 * np.finfo(float).eps
REMAINDERS = ("r0", "rtilde1", "r1", "r2", "w0", "w1")


class GreenConvergenceError(RuntimeError):
    """Trapezoid doubling did not converge below the point cap."""


@dataclass(frozen=True)
class GreenEval:
    """Green function values and forward differences at one ``(n, t)``."""

    n: int
    t: float
    y: float
    ydot: float
    yddot: float
    grad_y: float
    grad_ydot: float
    grad_yddot: float
    method: str = "fourier"
    quad_points: int = 0


def initial_points(n: int, t: float) -> int:
    """Starting trapezoid size: resolve cos(n theta) and the 1/sqrt(t) peak."""
    return max(M_START, 8 * (abs(n) + 1), 8 * math.ceil(math.sqrt(8.0 * t)))


def _trapezoid(n: int, t: float, M: int) -> np.ndarray:
    y, yd, ydd = _backend.green_values([n, n + 1], t, M)
    return np.array([y[0], yd[0], ydd[0], y[1] - y[0], yd[1] - yd[0], ydd[1] - ydd[0]])


def eval_green(n: int, t: float, tol: float = 1e-13) -> GreenEval:
    """Evaluate ``y_n(t)``, its first two time derivatives and their forward differences.

    Parameters
    ----------
    n : int
        Node index (any sign).
    t : float
        Time, ``t >= 0``.
    tol : float
        The point count is doubled until two successive trapezoid results
        differ by at most ``tol * max(1, |value|)`` in every component, where
        a forward difference is measured against the size of its parent value.
        An absolute allowance of ``8 * eps * M`` covers the rounding floor of
        an ``M``-point sum.

    Raises
    ------
    GreenConvergenceError
        If more than ``2**22`` points would be needed.
    """
    n = int(n)
    t = float(t)
    if not t >= 0:
        raise ValueError("t must be nonnegative")
    if tol <= 0:
        raise ValueError("tol must be positive")
    M = initial_points(n, t)
    M += M & 1
    prev = _trapezoid(n, t, M)
    while True:
        M *= 2
        if M > M_CAP:
            raise GreenConvergenceError(
                f"trapezoid for n={n}, t={t} not converged at {M // 2} points")
        cur = _trapezoid(n, t, M)
        # differences inherit the rounding of their parent values; the sum
        # itself cancels terms of size ~M, so M * eps is its rounding floor
        scale = np.maximum(1.0, np.abs(np.concatenate([cur[:3], cur[:3]])))
        if np.all(np.abs(cur - prev) <= tol * scale + ROUND_FLOOR * M):
            break
        prev = cur
    return GreenEval(n, t, *map(float, cur), method="fourier", quad_points=M)


def eval_ydot_bessel(n: int, t: float) -> float:
    """``exp(-2t) I_n(2t)`` by normalized Miller recurrence; oracle for ``ydot``."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    m = abs(int(n))
    return float(_backend.ive_range(m, 2.0 * t)[m])


def green_arrays(ns, t: float):
    """Fast-path ``(y, ydot, yddot)`` for every node in ``ns`` at one time.

    Uses the backend's automatic point count, which keeps aliasing below
    double precision; no doubling loop.
    """
    return _backend.green_values(ns, float(t))


def remainder_from_values(rid: str, n, t, y, yd, ydd, gy, gyd):
    """Remainder ``rid`` given precomputed Green values (array friendly)."""
    n = np.asarray(n, dtype=float)
    t = np.asarray(t, dtype=float)
    st = np.sqrt(t)
    x = np.abs(n) / st
    if rid == "r0":
        return y - st * f(x)
    if rid == "rtilde1":
        return y - st * f(x) - ftilde(x) / st
    if rid == "r1":
        return yd - h(x) / st
    if rid == "r2":
        return ydd - h_deriv(x, 2) / (t * st)
    if rid == "w0":
        return gy - g(x) - h(x) / (2.0 * st)
    if rid == "w1":
        return gyd - h_deriv(x, 1) / t
    raise ValueError(f"unknown remainder {rid!r}")


def eval_remainder(rid: str, n: int, t: float, tau0: float = 1.0) -> float:
    """Difference between a Green quantity and its large-time leading terms.

    ``rid`` is one of ``r0, rtilde1, r1, r2, w0, w1``; for example
    ``w0(n, t) = grad y_n(t) - g(n/sqrt t) - h(n/sqrt t)/(2 sqrt t)``.
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    if t < tau0:
        raise ValueError(f"t={t} is below the reference time tau0={tau0}")
    if rid not in REMAINDERS:
        raise ValueError(f"unknown remainder {rid!r}")
    ge = eval_green(n, t)
    return float(remainder_from_values(rid, n, t, ge.y, ge.ydot, ge.yddot,
                                       ge.grad_y, ge.grad_ydot))


# -- exact-key evaluation cache ---------------------------------------------

_CACHE_MAGIC = b"RLGC"
_CACHE_VERSION = 1
_RECORD = np.dtype([("n", "<i8"), ("t", "<f8"), ("vals", "<f8", (6,)), ("m", "<i8")])


class GreenCache:
    """Map ``(n, t) -> GreenEval`` keyed on the exact float ``t``.

    Inserts are insert-if-absent under a lock, so concurrent callers always
    observe the first stored value.
    """

    def __init__(self, tol: float = 1e-13):
        self.tol = tol
        self._data: dict[tuple[int, float], GreenEval] = {}
        self._lock = threading.Lock()

    def __len__(self):
        return len(self._data)

    def get(self, n: int, t: float) -> GreenEval:
        key = (int(n), float(t))
        hit = self._data.get(key)
        if hit is not None:
            return hit
        val = eval_green(key[0], key[1], self.tol)
        with self._lock:
            return self._data.setdefault(key, val)

    def dump(self, path) -> None:
        """Write a versioned little-endian binary snapshot."""
        items = sorted(self._data.items())
        rec = np.zeros(len(items), dtype=_RECORD)
        for i, ((n, t), ge) in enumerate(items):
            rec[i] = (n, t, (ge.y, ge.ydot, ge.yddot, ge.grad_y, ge.grad_ydot,
                             ge.grad_yddot), ge.quad_points)
        with open(path, "wb") as fh:
            fh.write(_CACHE_MAGIC + struct.pack("<Id", _CACHE_VERSION, self.tol))
            fh.write(struct.pack("<Q", len(rec)))
            fh.write(rec.tobytes())

    @classmethod
    def load(cls, path) -> "GreenCache":
        with open(path, "rb") as fh:
            raw = fh.read()
        if raw[:4] != _CACHE_MAGIC:
            raise ValueError("not a Green cache file")
        version, tol = struct.unpack_from("<Id", raw, 4)
        if version != _CACHE_VERSION:
            raise ValueError(f"unsupported cache version {version}")
        (count,) = struct.unpack_from("<Q", raw, 16)
        rec = np.frombuffer(raw, dtype=_RECORD, count=count, offset=24)
        cache = cls(tol)
        for r in rec:
            n, t = int(r["n"]), float(r["t"])
            cache._data[(n, t)] = GreenEval(n, t, *map(float, r["vals"]),
                                            method="fourier", quad_points=int(r["m"]))
        return cache
