"""Propagation rate constant ``a``: the root of ``(h1 - 2c) - h1 I_H(a) = 0``."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

from scipy import optimize

from .io import csv_text
from .kernels import integral_I
from .params import Params

A_LO, A_HI = 1e-4, 1e4


class BracketError(RuntimeError):
    """No sign change of the rate equation was found."""


@dataclass(frozen=True)
class RateSolution:
    """Root ``a`` with the left-hand sides of the three equivalent equations."""

    a: float
    residual_f: float
    residual_g: float
    residual_h: float
    iterations: int


def residuals(params: Params, a: float, qtol: float = 1e-13) -> tuple[float, float, float]:
    """Left sides of the F-, G- and H-forms of the rate equation at ``a``."""
    c, h1 = params.c, params.h1
    rf = -c + (h1 - 2 * c) * a - h1 * integral_I("F", a, tol=qtol)
    rg = -2 * c - h1 * integral_I("G", a, tol=qtol)
    rh = (h1 - 2 * c) - h1 * integral_I("H", a, tol=qtol)
    return rf, rg, rh


def _bracket(fn, lo=A_LO, hi=A_HI, max_expand=40):
    # fn is increasing in a since I_H decreases
    flo, fhi = fn(lo), fn(hi)
    for _ in range(max_expand):
        if flo < 0 < fhi:
            return lo, hi
        if flo >= 0:
            lo /= 10.0
            flo = fn(lo)
        if fhi <= 0:
            hi *= 10.0
            fhi = fn(hi)
    raise BracketError(f"rate equation not bracketed on [{lo}, {hi}]")


def solve_a(params: Params, tol: float = 1e-12) -> RateSolution:
    """Solve the H-form of the rate equation.

    Parameters
    ----------
    params : Params
        Only ``c`` and ``h1`` are used.
    tol : float
        Bound on ``|I_H(a) - (h1 - 2c)/h1|``. Quadrature runs one decade tighter.
    """
    qtol = tol / 10.0
    target = (params.h1 - 2 * params.c) / params.h1

    def fn(a):
        return target - integral_I("H", a, tol=qtol)

    lo, hi = _bracket(fn)
    a, info = optimize.brentq(fn, lo, hi, xtol=1e-300, rtol=1e-15,
                              maxiter=200, full_output=True)
    rf, rg, rh = residuals(params, a, qtol)
    return RateSolution(a=float(a), residual_f=rf, residual_g=rg, residual_h=rh,
                        iterations=info.iterations)


def solve_a_f_form(params: Params, tol: float = 1e-12) -> float:
    """Root of the F-form ``-c + (h1 - 2c) a - h1 I_F(a)``; cross-check only."""
    c, h1 = params.c, params.h1

    def fn(a):
        return -c + (h1 - 2 * c) * a - h1 * integral_I("F", a, tol=tol / 10.0)

    lo, hi = _bracket(fn)
    return float(optimize.brentq(fn, lo, hi, xtol=1e-300, rtol=1e-15, maxiter=200))


def a_sweep(c: float, h1_list: Sequence[float], tol: float = 1e-12,
            threads: int = 1) -> list[tuple[float, RateSolution]]:
    """Solve for ``a`` at every ``h1``; output order follows ``h1_list``."""
    plist = [Params(c=c, h1=h1) for h1 in h1_list]
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            sols = list(ex.map(lambda p: solve_a(p, tol), plist))
    else:
        sols = [solve_a(p, tol) for p in plist]
    return [(p.h1, s) for p, s in zip(plist, sols)]


def sweep_csv(rows: Sequence[tuple[float, RateSolution]]) -> str:
    return csv_text(["h1", "a", "residual_f", "residual_g", "residual_h"],
                    [(h1, s.a, s.residual_f, s.residual_g, s.residual_h) for h1, s in rows])
