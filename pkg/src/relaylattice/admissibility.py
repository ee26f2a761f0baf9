r"""Constants table, the twelve requirements on ``n0(E)`` and the admissibility verdict.

Constants are grouped as

* **A** (independent of ``a`` and ``E``): large-time Green remainder suprema
  ``A0, A1, Ã1, A2, B0, B1, A2*, B2*`` (empirical), ``R = pi``, ``B_h2``,
  ``B_h4`` (analytic);
* **B** (depend on ``a``): structural constants ``D_a, p, N, D_p1, D_p2,
  kappa``, normalized lattice sums, Riemann-sum error constants, ``K``,
  ``K'``, ``E0`` and the auxiliary parameters ``theta0, eta, x0, eps0, b``;
* **C** (depend on ``E``): ``amin_n, amax_n, delta_n`` (per ``n``) and ``R2``.

Suprema over infinite index sets are maxima over finite scans and therefore
lower bounds of the true constants. Each entry records its grid and whether
it is analytic or empirical, so the verdict is a numerical certificate, not a
proof.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import optimize, special

from . import _backend
from .green import remainder_from_values
from .io import csv_text, json_text
from .kernels import H0, SQRT_PI, eval_profile, h, h_deriv, integral_I
from .params import Params
from .rate import solve_a
from .sim import SwitchHistory, eval_grad_u

log = logging.getLogger(__name__)

PLATEAU_TOL = 0.05
REQUIREMENTS = tuple(range(1, 13))
ETA_FRACTION = 0.45
THETA_FRACTION = 0.9
B_OVER_A = 2.5


class MissingConstantError(KeyError):
    """A requirement needs a constant that the table does not hold."""


class CertificationError(RuntimeError):
    """No ``(x0, eps0)`` pair could be certified."""


# -- table --------------------------------------------------------------------


@dataclass(frozen=True)
class Entry:
    value: float
    grid: str
    flag: str  # "analytic" | "empirical" | "derived" | "parameter"
    group: str
    info: dict = field(default_factory=dict)


class ConstantsTable:
    """Named constants with their provenance; JSON round trip is bit-exact."""

    def __init__(self, entries: dict[str, Entry] | None = None, meta: dict | None = None):
        self.entries: dict[str, Entry] = dict(entries or {})
        self.meta: dict = dict(meta or {})

    def set(self, name, value, grid, flag, group, **info):
        self.entries[name] = Entry(float(value), grid, flag, group, info)

    def __getitem__(self, name) -> float:
        try:
            return self.entries[name].value
        except KeyError:
            raise MissingConstantError(f"constant {name!r} missing from table") from None

    def __contains__(self, name):
        return name in self.entries

    def names(self):
        return list(self.entries)

    @property
    def unreliable(self) -> list[str]:
        return [k for k, e in self.entries.items() if e.info.get("plateau") is False]

    def to_json(self) -> str:
        body = {"meta": self.meta,
                "constants": {k: asdict(e) for k, e in self.entries.items()}}
        return json_text(body)

    @classmethod
    def from_json(cls, text: str) -> "ConstantsTable":
        body = json.loads(text)
        ents = {k: Entry(float(v["value"]), v["grid"], v["flag"], v["group"], v.get("info", {}))
                for k, v in body["constants"].items()}
        return cls(ents, body.get("meta", {}))


# -- group A ------------------------------------------------------------------


def kernel_constants() -> tuple[float, float]:
    """``B_h2 = sup |h''| = -h''(0)`` and ``B_h4 = sup |h''''| = h''''(0)``."""
    return float(-h_deriv(0.0, 2)), float(h_deriv(0.0, 4))


GREEN_SUPS = ("A0", "A1", "At1", "A2", "B0", "B1", "A2s", "B2s")


def _green_sup_scan(tau0: float, n_max: int, t_max: float, n_t: int) -> dict[str, tuple]:
    ns = np.arange(0, n_max + 2)
    best = {k: (-1.0, None) for k in GREEN_SUPS}
    for t in np.geomspace(tau0, t_max, n_t):
        y, yd, ydd = _backend.green_values(ns, t)
        n = ns[:-1]
        y0, yd0, ydd0 = y[:-1], yd[:-1], ydd[:-1]
        gy, gyd, gydd = np.diff(y), np.diff(yd), np.diff(ydd)
        st = math.sqrt(t)
        vals = {
            "A0": st * np.abs(remainder_from_values("r0", n, t, y0, yd0, ydd0, gy, gyd)),
            "A1": t * st * np.abs(remainder_from_values("r1", n, t, y0, yd0, ydd0, gy, gyd)),
            "At1": t * st * np.abs(remainder_from_values("rtilde1", n, t, y0, yd0, ydd0, gy, gyd)),
            "A2": t * t * st * np.abs(remainder_from_values("r2", n, t, y0, yd0, ydd0, gy, gyd)),
            "B0": t * np.abs(remainder_from_values("w0", n, t, y0, yd0, ydd0, gy, gyd)),
            "B1": t * st * np.abs(remainder_from_values("w1", n, t, y0, yd0, ydd0, gy, gyd)),
            "A2s": t * st * np.abs(ydd0),
            "B2s": t * t * np.abs(gydd),
        }
        for k, v in vals.items():
            i = int(np.argmax(v))
            if v[i] > best[k][0]:
                best[k] = (float(v[i]), (int(n[i]), float(t)))
    return best


def green_sup_constants(tau0: float = 1.0, n_grid_max: int = 64, t_grid_max: float = 1e4,
                        n_t: int = 200) -> dict[str, dict]:
    """Empirical suprema of the normalized Green remainders for ``t >= tau0``.

    The scan is repeated on a doubled grid (twice the nodes, twice the time
    points, twice the time range). Each result holds the larger of the two
    maxima, its arg-sup, the relative change and a ``plateau`` flag that is
    false when the change exceeds 5 %.
    """
    if tau0 <= 0:
        raise ValueError("tau0 must be positive")
    base = _green_sup_scan(tau0, n_grid_max, t_grid_max, n_t)
    dbl = _green_sup_scan(tau0, 2 * n_grid_max, 2 * t_grid_max, 2 * n_t)
    out = {}
    for k in GREEN_SUPS:
        v0, arg0 = base[k]
        v1, arg1 = dbl[k]
        change = abs(v1 - v0) / max(abs(v0), 1e-300)
        val, arg = (v1, arg1) if v1 >= v0 else (v0, arg0)
        out[k] = {"value": val, "argsup": arg, "rel_change": change,
                  "plateau": bool(change <= PLATEAU_TOL)}
        if change > PLATEAU_TOL:
            log.warning("%s changed by %.1f%% on grid doubling", k, 100 * change)
    return out


# -- group B: structural ------------------------------------------------------


def _h_a(a, x):
    sa = math.sqrt(a)
    return h(x / sa) + h(1.0 / (x * sa))


def _h_a_prime(a, x):
    sa = math.sqrt(a)
    return h_deriv(x / sa, 1) / sa - h_deriv(1.0 / (x * sa), 1) / (x * x * sa)


def _grid_extremum(fn: Callable, lo: float, hi: float, maximize: bool, n: int = 4001):
    """Global extremum on a grid, then bounded Brent refinement around the best cell."""
    xs = np.linspace(lo, hi, n)
    vals = fn(xs)
    i = int(np.argmax(vals) if maximize else np.argmin(vals))
    best_x, best_v = float(xs[i]), float(vals[i])
    a0, b0 = xs[max(i - 1, 0)], xs[min(i + 1, n - 1)]
    if b0 > a0:
        sgn = -1.0 if maximize else 1.0
        r = optimize.minimize_scalar(lambda x: sgn * float(fn(np.array([x]))[0]),
                                     bounds=(a0, b0), method="bounded",
                                     options={"xatol": 1e-13})
        v = sgn * r.fun
        if (v > best_v) if maximize else (v < best_v):
            best_x, best_v = float(r.x), float(v)
    return best_x, best_v


def kappa_of(p: float, N: int) -> tuple[float, float, float]:
    """``(D_p1, D_p2, kappa)`` for exponent ``p`` and index ``N``."""
    dp1 = 2.0 ** ((1.0 - p) / 2.0) - 1.0
    dp2 = N * ((1.0 + 1.0 / N) ** ((1.0 + p) / 2.0) - 1.0)
    return dp1, dp2, dp2 - dp1 - 2.0 * (dp1 + dp2) * dp1 / N


def structural_constants(a: float, N_max: int = 10 ** 6) -> dict[str, float]:
    """``D_a``, ``p``, ``N``, ``D_p1``, ``D_p2`` and ``kappa`` for rate ``a``."""
    if a <= 0:
        raise ValueError("a must be positive")
    lo = 1e-6
    _, Da = _grid_extremum(lambda x: _h_a(a, x), lo, 1.0, maximize=False)
    Da = min(Da, float(_h_a(a, 1.0)), H0)  # limit at x -> 0 is h(0)
    xp, p = _grid_extremum(lambda x: _h_a_prime(a, x) * x / _h_a(a, x), lo, 1.0, maximize=True)
    N = 1
    while kappa_of(p, N)[2] <= 0:
        N += 1
        if N > N_max:
            raise RuntimeError("no N with kappa > 0")
    dp1, dp2, kap = kappa_of(p, N)
    return {"D_a": Da, "p": p, "p_argsup": xp, "N": N, "D_p1": dp1, "D_p2": dp2, "kappa": kap}


def phi_p_nonincreasing(a: float, p: float, n: int = 1000) -> bool:
    """Check that ``h_a(x) / x^p`` does not increase on a grid of (0, 1)."""
    xs = np.linspace(1.0 / n, 1.0 - 1.0 / n, n)
    v = _h_a(a, xs) / xs ** p
    return bool(np.all(np.diff(v) <= 1e-12 * np.abs(v[1:])))


# -- group B: lattice sums ----------------------------------------------------


def _sym_k(n: int) -> np.ndarray:
    return np.arange(-(n - 1), n)


def sum_constants(N: int, n_scan_max: int, x0: float) -> dict[str, dict]:
    """Normalized sums ``S_1..S_3``, ``T_{3/2}, T_2, T_{5/2}``, ``R`` and ``R1``.

    Each is the maximum over ``n in [N, n_scan_max]``; the value at the scan
    end and whether the sequence is still increasing there are recorded.
    ``R`` is fixed at ``pi`` and the scan only checks it. For ``R1`` the
    ``n -> infinity`` limit ``2 x0 / sqrt(1 - x0^2)`` is used as a floor, since
    the finite scan can approach it from below.
    """
    if n_scan_max < N:
        raise ValueError("n_scan_max must be at least N")
    names = ["S1", "S2", "S3", "T3/2", "T2", "T5/2", "R", "R1"]
    seq = {k: np.empty(n_scan_max - N + 1) for k in names}
    for i, n in enumerate(range(N, n_scan_max + 1)):
        k = _sym_k(n)
        d2 = (n * n - k * k).astype(float)
        nk = (n - k).astype(float)
        sn = math.sqrt(n)
        for al in (1, 2, 3):
            seq[f"S{al}"][i] = sn * math.fsum(nk ** al / d2 ** (al + 0.5))
        for lab, al in (("T3/2", 1.5), ("T2", 2.0), ("T5/2", 2.5)):
            seq[lab][i] = math.fsum(n ** al / d2 ** al)
        seq["R"][i] = math.fsum(1.0 / np.sqrt(d2))
        inner = np.abs(k) < x0 * n
        seq["R1"][i] = n * n * math.fsum(d2[inner] ** -1.5)
    out = {}
    grid = f"n in [{N}, {n_scan_max}]"
    for k in names:
        s = seq[k]
        j = int(np.argmax(s))
        tail_up = bool(len(s) > 1 and s[-1] > s[-2])
        out[k] = {"value": float(s[j]), "argsup": N + j, "last": float(s[-1]),
                  "increasing_at_end": tail_up, "grid": grid}
    # near-diagonal terms dominate as n -> infinity: sum_j 2 (2j)^(-3/2)
    t32_lim = 2.0 ** -0.5 * float(special.zeta(1.5))
    for k in ("S1", "T3/2"):
        out[k]["limit"] = t32_lim
        out[k]["value"] = max(out[k]["value"], t32_lim)
    r1_lim = 2.0 * x0 / math.sqrt(1.0 - x0 * x0)
    out["R1"]["limit"] = r1_lim
    out["R1"]["value"] = max(out["R1"]["value"], r1_lim)
    out["R"]["scan_value"] = out["R"]["value"]
    out["R"]["value"] = math.pi
    return out


def harmonic_sum(n):
    """``sum_{|k| <= n-1} 1/(n^2 - k^2) = H_{2n-1} / n`` (array friendly)."""
    n = np.asarray(n, dtype=float)
    return (special.digamma(2.0 * n) + np.euler_gamma) / n


# -- group B: Riemann-sum errors ------------------------------------------------


def riemann_sum(name: str, a: float, n: int, include_left_end: bool = False) -> float:
    """``sum_k (1/n) P(k/n)`` over ``|k| <= n-1`` (or ``-n <= k <= n-1``).

    The profile is evaluated from ``1 - k/n = (n - k)/n`` exactly. At
    ``k = -n`` every profile vanishes, so the left end adds nothing.
    """
    k = _sym_k(n)
    d = (n - k) / n
    vals = eval_profile(name, a, d=d)
    return math.fsum(np.atleast_1d(vals)) / n


def _sandwich(n: np.ndarray, res: np.ndarray, c1: float) -> dict:
    """Upper ``L``, lower ``(L*, l)`` with ``L*/sqrt(n) - l/n <= res <= L/sqrt(n)``.

    ``L*`` is the least-squares intercept of ``res sqrt(n)`` against
    ``1/sqrt(n)``; ``l`` is the smallest nonnegative value making the lower
    bound hold on the scan.
    """
    y = res * np.sqrt(n)
    x = 1.0 / np.sqrt(n)
    slope, icpt = np.polyfit(x, y, 1)
    L = float(np.max(y))
    Ls = float(icpt)
    ell = float(max(0.0, np.max(np.sqrt(n) * (Ls - y))))
    return {"L": L, "L_star": Ls, "l": ell, "c1": c1, "fit_slope": float(slope),
            "L_star_above_c1": bool(Ls > c1)}


def riemann_error_constants(a: float, h1: float, N: int, n_scan_max: int) -> dict[str, dict]:
    """Riemann-sum error constants over ``n in [N, n_scan_max]``.

    Returns ``L1`` (profile F), ``K1``, the F̃ sandwich (``L_ft``,
    ``L_ft_star``, ``l_ft``), the H sandwich (``C_H``, ``l_H``) and
    ``C_H2``, ``K_h1``, ``K_g``, ``K_h``.
    """
    if n_scan_max <= N:
        raise ValueError("n_scan_max must exceed N")
    IF = integral_I("F", a)
    IG = integral_I("G", a)
    IH = integral_I("H", a)
    IFt = integral_I("Ftilde", a)
    ns = np.arange(N, n_scan_max + 2)
    sF = np.array([riemann_sum("F", a, n) for n in ns])
    sG = np.array([riemann_sum("G", a, n) for n in ns])
    sH = np.array([riemann_sum("H", a, n) for n in ns])
    sH1 = np.array([riemann_sum("H1", a, n) for n in ns])
    sFt = np.array([riemann_sum("Ftilde", a, n) for n in ns])
    sHb = np.array([riemann_sum("Hbar", a, n) for n in ns])
    nf = ns.astype(float)
    RF = IF - sF
    C1 = h1 * nf * nf * RF
    body = slice(0, len(ns) - 1)  # n + 1 is needed for the K1 difference
    n_b = nf[body]
    grid = f"n in [{N}, {n_scan_max}]"
    L1 = np.max(n_b ** 1.5 * np.abs(RF[body]))
    K1 = np.max(np.sqrt(n_b) * np.abs(np.diff(C1)))
    ft = _sandwich(n_b, (-IFt + sFt)[body], 1.0 / (16.0 * SQRT_PI * math.sqrt(2.0 * a)))
    hs = _sandwich(n_b, (IH - sH)[body], H0 / math.sqrt(2.0 * a))
    CH2 = np.max(np.abs(sHb[body]) / np.sqrt(n_b))
    Kh1 = np.max(np.abs(sH1[body]))
    Kg = np.max(n_b ** 1.5 * np.abs(sG[body] - IG - 1.0 / (4.0 * n_b)))
    Kh = np.max(np.sqrt(n_b) * np.abs(sH[body] - IH))
    return {
        "L1": {"value": float(L1), "grid": grid},
        "K1": {"value": float(K1), "grid": grid},
        "L_ft": {"value": ft["L"], "grid": grid},
        "L_ft_star": {"value": ft["L_star"], "grid": grid, "c1": ft["c1"],
                      "above_c1": ft["L_star_above_c1"]},
        "l_ft": {"value": ft["l"], "grid": grid},
        "C_H": {"value": hs["L_star"], "grid": grid, "c1": hs["c1"],
                "above_c1": hs["L_star_above_c1"]},
        "l_H": {"value": hs["l"], "grid": grid},
        "C_H2": {"value": float(CH2), "grid": grid},
        "K_h1": {"value": float(Kh1), "grid": grid},
        "K_g": {"value": float(Kg), "grid": grid},
        "K_h": {"value": float(Kh), "grid": grid},
        "I_F": {"value": IF, "grid": "adaptive quadrature"},
        "I_G": {"value": IG, "grid": "adaptive quadrature"},
        "I_H": {"value": IH, "grid": "adaptive quadrature"},
        "I_Ft": {"value": IFt, "grid": "adaptive quadrature"},
    }


def K_constants(a: float, params: Params, N: int, *, L1: float, K1: float, L_ft: float,
                L_ft_star: float, l_ft: float, At1: float, A0: float, T32: float,
                kappa: float, R: float = math.pi) -> dict[str, float]:
    """``K1, K2, K3, K, K'1, l1, K', E0`` from their upstream constants."""
    h1 = params.h1
    K2 = h1 * (L_ft - L_ft_star + l_ft / math.sqrt(N))
    K3 = 2.0 * h1 * At1 * T32 / a ** 1.5
    K = K1 + K2 + K3 / N
    Kp1 = h1 * L1
    l1 = h1 * A0 * R / math.sqrt(a)
    Kp = Kp1 + l1 / math.sqrt(N)
    E0 = (K + kappa * Kp) / ((h1 - 2 * params.c) * kappa)
    return {"K1": K1, "K2": K2, "K3": K3, "K": K, "K'1": Kp1, "l1": l1, "K'": Kp, "E0": E0}


# -- auxiliary parameters -------------------------------------------------------


def psi(a: float, x, eps1):
    """``h''((1-x)/s) + h''((1+x)/s)`` with ``s = sqrt(a(1-x^2) + eps1)``."""
    x = np.asarray(x, dtype=float)
    s = np.sqrt(a * (1.0 - x) * (1.0 + x) + eps1)
    return h_deriv((1.0 - x) / s, 2) + h_deriv((1.0 + x) / s, 2)


def _certify(a: float, x0: float, eps0: float, eta: float, n_x: int = 1500, n_e: int = 25) -> bool:
    # x clustered towards 1, plus a uniform part
    d = np.concatenate([np.geomspace(1e-12, 1.0 - x0, n_x), np.linspace(0.0, 1.0 - x0, n_x)[1:]])
    xs = 1.0 - d
    xs = xs[(xs >= x0) & (xs < 1.0)]
    base = a * (1.0 - xs) * (1.0 + xs)
    for w in np.linspace(0.0, 1.0, n_e):
        lower = -np.minimum(eps0, base / 2.0)
        e1 = lower + w * (eps0 - lower)
        if np.any(psi(a, xs, e1) > -eta):
            return False
    return True


def certify_x0_eps0(a: float, eta: float, x_step: float = 0.01, eps_start: float = 8.0,
                    eps_min: float = 1e-10, refine: int = 30) -> tuple[float, float]:
    """Smallest ``x0`` on a ``x_step`` grid admitting some ``eps0``, then the largest ``eps0``.

    For each candidate ``x0`` the trial ``eps0`` is halved from ``eps_start``
    until the condition holds on the certification grid; the final ``eps0`` is
    refined by bisection between the last failing and first passing value.
    """
    if not 0 < eta < 1.0 / (4.0 * SQRT_PI):
        raise ValueError("eta must lie in (0, 1/(4 sqrt(pi)))")
    for j in range(int(round(1.0 / x_step))):
        x0 = round(j * x_step, 10)
        e = eps_start
        while e >= eps_min and not _certify(a, x0, e, eta):
            e /= 2.0
        if e < eps_min:
            continue
        if e < eps_start:
            good, bad = e, 2.0 * e
            for _ in range(refine):
                mid = 0.5 * (good + bad)
                if _certify(a, x0, mid, eta):
                    good = mid
                else:
                    bad = mid
            e = good
        return x0, e
    raise CertificationError("no x0 on the grid certifies the curvature condition")


def R2_value(a: float, E: float, b: float, x0: float, N: int, n_scan_max: int) -> dict:
    """Infimum over the scan of the far-zone sum, floored by its ``n -> infinity`` limit."""
    n_lo = max(N, math.ceil(1.0 / (1.0 - x0)))
    vals = []
    for n in range(n_lo, n_scan_max + 1):
        amax = a + 2.0 * E * math.sqrt(n) / (2 * n - 1)
        k = np.arange(math.ceil(x0 * n), n)
        vals.append(math.fsum(n ** 1.5 / (amax * (n * n - k * k) + b * n) ** 1.5))
    vals = np.array(vals)
    j = np.arange(1, 200001, dtype=float)
    terms = (2.0 * a * j + b) ** -1.5
    tail = 2.0 / (2.0 * a) * (2.0 * a * j[-1] + b) ** -0.5
    limit = math.fsum(terms) + tail
    i = int(np.argmin(vals))
    return {"value": float(min(vals[i], limit)), "scan_min": float(vals[i]), "arginf": n_lo + i,
            "limit": limit, "grid": f"n in [{n_lo}, {n_scan_max}]"}


# -- assembling the table -------------------------------------------------------


def build_constants(params: Params, *, eta: float | None = None, n_scan_max: int = 2000,
                    green_grid: tuple[int, float, int] = (64, 1e4, 200),
                    a: float | None = None) -> ConstantsTable:
    """Compute groups A and B for ``params``."""
    tab = ConstantsTable(meta={"params": params.as_dict(), "n_scan_max": n_scan_max,
                               "green_grid": list(green_grid), "backend": _backend.BACKEND})
    tau0 = params.tau0
    tab.set("tau0", tau0, "input", "parameter", "A")
    Bh2, Bh4 = kernel_constants()
    tab.set("B_h2", Bh2, "closed form", "analytic", "A")
    tab.set("B_h4", Bh4, "closed form", "analytic", "A")
    tab.set("R", math.pi, "closed form", "analytic", "A")
    ng, tg, nt = green_grid
    gs = green_sup_constants(tau0, ng, tg, nt)
    ggrid = f"n <= {ng}, {nt} log-spaced t in [{tau0}, {tg}]; doubled grid compared"
    for k, v in gs.items():
        tab.set(k, v["value"], ggrid, "empirical", "A", argsup=v["argsup"],
                rel_change=v["rel_change"], plateau=v["plateau"])

    if a is None:
        a = solve_a(params).a
    tab.set("a", a, "root of the H-form rate equation", "derived", "B")
    st = structural_constants(a)
    N = st["N"]
    tab.set("D_a", st["D_a"], "grid + Brent on (0, 1]", "empirical", "B")
    tab.set("p", st["p"], "grid + Brent on (0, 1]", "empirical", "B", argsup=st["p_argsup"])
    tab.set("N", N, "smallest integer with kappa > 0", "derived", "B")
    for k in ("D_p1", "D_p2", "kappa"):
        tab.set(k, st[k], "closed form", "derived", "B")

    rc = riemann_error_constants(a, params.h1, N, n_scan_max)
    for k, v in rc.items():
        extra = {kk: vv for kk, vv in v.items() if kk not in ("value", "grid")}
        tab.set(k, v["value"], v["grid"], "empirical" if not k.startswith("I_") else "derived",
                "B", **extra)

    eta = ETA_FRACTION / (4.0 * SQRT_PI) if eta is None else eta
    tab.set("eta", eta, "default fraction of 1/(4 sqrt(pi))", "parameter", "B")
    theta0 = THETA_FRACTION / (4.0 * rc["K_h"]["value"])
    tab.set("theta0", theta0, "0.9 / (4 K_h)", "derived", "B")
    b = B_OVER_A * a
    tab.set("b", b, "2.5 a", "derived", "B")
    x0, eps0 = certify_x0_eps0(a, eta)
    tab.set("x0", x0, "0.01 grid, certified", "empirical", "B")
    tab.set("eps0", eps0, "halving + bisection, certified", "empirical", "B")

    sc = sum_constants(N, n_scan_max, x0)
    for k, v in sc.items():
        name = {"T3/2": "T3/2", "T2": "T2", "T5/2": "T5/2"}.get(k, k)
        if k == "R":
            tab.entries["R"].info.update(scan_value=v["scan_value"], last=v["last"], grid=v["grid"])
            continue
        extra = {kk: vv for kk, vv in v.items() if kk not in ("value", "grid")}
        tab.set(name, v["value"], v["grid"], "empirical", "B", **extra)

    kc = K_constants(a, params, N, L1=tab["L1"], K1=tab["K1"], L_ft=tab["L_ft"],
                     L_ft_star=tab["L_ft_star"], l_ft=tab["l_ft"], At1=tab["At1"],
                     A0=tab["A0"], T32=tab["T3/2"], kappa=tab["kappa"])
    for k, v in kc.items():
        tab.set(k, v, "formula from upstream constants", "derived", "B")
    return tab


def add_E(tab: ConstantsTable, E: float, n_scan_max: int | None = None) -> ConstantsTable:
    """Copy of ``tab`` with the E-dependent constant ``R2`` added."""
    n_scan_max = n_scan_max or int(tab.meta.get("n_scan_max", 2000))
    out = ConstantsTable(dict(tab.entries), dict(tab.meta))
    r2 = R2_value(tab["a"], E, tab["b"], tab["x0"], int(tab["N"]), n_scan_max)
    out.set("E", E, "input", "parameter", "C")
    out.set("R2", r2["value"], r2["grid"], "empirical", "C", scan_min=r2["scan_min"],
            arginf=r2["arginf"], limit=r2["limit"])
    return out


# -- requirements ---------------------------------------------------------------


def _sup_hpp_from(X):
    """``sup_{x >= X} h''(x)``; h'' increases up to sqrt(6) and decreases after."""
    X = np.asarray(X, dtype=float)
    return h_deriv(np.maximum(X, math.sqrt(6.0)), 2)


def requirement_margins(E: float, tab: ConstantsTable, ns) -> dict[int, np.ndarray]:
    """Margins (right side minus left side) of requirements 1..12 at each ``n``.

    A nonnegative margin means the requirement holds. Requirements 8 and 9
    apply only for ``n >= 1/(1 - x0)``; below that their margin is ``+inf``.
    Where ``amin_n <= 0`` the affected requirements get ``-inf``.
    """
    if "R2" not in tab or tab.entries.get("E") is None or tab["E"] != E:
        raise MissingConstantError("table lacks R2 for this E; call add_E first")
    n = np.asarray(ns, dtype=float)
    a, tau0 = tab["a"], tab["tau0"]
    N = tab["N"]
    Da, kap = tab["D_a"], tab["kappa"]
    A0, A1, A2, A2s, B0, B1, B2s = (tab[k] for k in ("A0", "A1", "A2", "A2s", "B0", "B1", "B2s"))
    Bh2, Bh4 = tab["B_h2"], tab["B_h4"]
    T32, T2, T52 = tab["T3/2"], tab["T2"], tab["T5/2"]
    CH, lH, CH2 = tab["C_H"], tab["l_H"], tab["C_H2"]
    Kh1, Kg, Kh = tab["K_h1"], tab["K_g"], tab["K_h"]
    th0, eta, x0, eps0, b = tab["theta0"], tab["eta"], tab["x0"], tab["eps0"], tab["b"]
    R1, R2, Dp1 = tab["R1"], tab["R2"], tab["D_p1"]

    def amin(m):
        return a - 2.0 * E * np.sqrt(m) / (2.0 * m - 1.0)

    def delta(m):
        am = amin(m)
        with np.errstate(invalid="ignore", divide="ignore"):
            v = 2.0 * A1 / (a * Da * m) + 2.0 * A2s * E * math.sqrt(a) / (Da * am ** 1.5 * np.sqrt(m))
        return np.where(am > 0, v, np.inf)

    am = amin(n)
    pos = am > 0
    am_s = np.where(pos, am, np.nan)
    dn, dn1 = delta(n), delta(n + 1)
    sq = np.sqrt(n)
    s2a = math.sqrt(2.0 * a)
    harm = harmonic_sum(n)

    out = {}
    out[1] = n - N
    out[2] = am - tau0 / (2.0 * n - 1.0)
    out[3] = 2.0 * Dp1 - (dn + dn1)
    lhs4 = (lH / sq + kap * H0 / (s2a * n) + CH2 * dn
            + (1.0 / s2a) * (1.0 + kap / n)
            * (H0 * (n + 1) / (2 * n + 1) * dn1 + (1.0 + dn1) * h(np.sqrt((2 * n + 1) / a))))
    out[4] = (CH - H0 / s2a) - lhs4
    with np.errstate(invalid="ignore"):
        lhs5 = (2 * E * Kh1 / sq + (2 * E * B1 * T32 / a ** 1.5 + 2 * E * E * B2s * T2 / am_s ** 2) / n
                + B0 / a * harm + (Kg + Kh / 2.0) / sq)
        out[5] = 0.375 - lhs5
        lhs6 = ((Kh1 + (2 * E + th0) * A2s * T32 / am_s ** 1.5) / sq
                + (B1 * T32 / a ** 1.5 + (2 * E + th0) * B2s * T2 / am_s ** 2 + A1 * T32 / a ** 1.5) / n)
        out[6] = Kh / 2.0 - lhs6
    out[7] = (a * (n - 1) ** 2 - E * np.sqrt(n - 1) + b * (n - 1)) - (a * n * n + E * sq)
    active = n >= 1.0 / (1.0 - x0)
    m8 = np.minimum(eps0, a / (2 * n) * (2 - 1 / n)) - (2 * E - th0) / n ** 1.5
    out[8] = np.where(active, m8, np.inf)
    m9 = eps0 - (2 * E / n ** 1.5 + b / n)
    out[9] = np.where(active, m9, np.inf)
    out[10] = th0 * sq - tau0
    out[11] = 1.0 / (4.0 * SQRT_PI) - (Bh4 / (2 * th0) / sq + _sup_hpp_from((2 * n + 1) / np.sqrt(b * n))
                                       + 2 * A2 / math.sqrt(th0) / sq)
    with np.errstate(invalid="ignore"):
        lhs12 = (Bh2 * R1 / am_s ** 1.5 + B2s * T2 / am_s ** 2) / sq + A2 * T52 / am_s ** 2.5 / n
        out[12] = eta * R2 - lhs12
    for r in (5, 6, 12):
        out[r] = np.where(pos, out[r], -np.inf)
    return {r: np.asarray(v, dtype=float) for r, v in out.items()}


def check_requirements(E: float, tab: ConstantsTable, n: int) -> dict[int, tuple[bool, float]]:
    """The twelve requirements at a single ``n``: ``{index: (satisfied, margin)}``."""
    m = requirement_margins(E, tab, [n])
    return {r: (bool(m[r][0] >= 0), float(m[r][0])) for r in REQUIREMENTS}


@dataclass
class RequirementReport:
    E: float
    n: np.ndarray
    margins: dict[int, np.ndarray]
    n0: int | None
    tail_monotone: bool
    n_search_max: int
    verdict: str = "undetermined"
    failing_tail: list[int] = field(default_factory=list)

    def satisfied(self, r: int) -> np.ndarray:
        return self.margins[r] >= 0

    def to_csv(self) -> str:
        rows = ((int(m),) + tuple(float(self.margins[r][i]) for r in REQUIREMENTS)
                for i, m in enumerate(self.n))
        return csv_text(["n"] + [f"req{r}" for r in REQUIREMENTS], rows)


# margin * n**w is nondecreasing in closed form for these requirements
TAIL_WEIGHT = {8: 1.5}


def _tail_monotone(n: np.ndarray, margins: dict[int, np.ndarray]) -> tuple[bool, list[int]]:
    """Margins nondecreasing over the last decade ``[n_max/10, n_max]`` of the scan.

    Requirement 8 has a positive margin decaying like ``1/n``; it is tested
    through ``margin * n**1.5``, which has the same sign and is nondecreasing.
    """
    sel = n >= n[-1] / 10.0
    bad = []
    for r, m in margins.items():
        v = m[sel] * n[sel] ** TAIL_WEIGHT.get(r, 0.0)
        v = v[np.isfinite(v)]
        if len(v) > 1 and np.any(np.diff(v) < -1e-12 * np.maximum(1.0, np.abs(v[1:]))):
            bad.append(r)
    return not bad, bad


def find_n0(E: float, tab: ConstantsTable, n_search_max: int = 5000, expansions: int = 2
            ) -> RequirementReport:
    """Smallest ``n0 >= N`` such that all twelve requirements hold on ``[n0, n_search_max]``.

    If none is found the range is widened tenfold, at most ``expansions``
    times. The tail heuristic requires every margin to be nondecreasing over
    the last decade of the scan; otherwise the report is ``undetermined``.
    """
    if "E0" in tab and E < tab["E0"]:
        log.warning("E = %.6g is below E0 = %.6g", E, tab["E0"])
    if "R2" not in tab or tab["E"] != E:
        tab = add_E(tab, E)
    N = int(tab["N"])
    for attempt in range(expansions + 1):
        ns = np.arange(N, n_search_max + 1)
        margins = requirement_margins(E, tab, ns)
        ok = np.ones(len(ns), dtype=bool)
        for r in REQUIREMENTS:
            ok &= margins[r] >= 0
        n0 = None
        if ok[-1]:
            bad = np.flatnonzero(~ok)
            n0 = int(ns[bad[-1] + 1]) if len(bad) else int(ns[0])
        mono, failing = _tail_monotone(ns.astype(float), margins)
        if n0 is not None:
            rep = RequirementReport(E=E, n=ns, margins=margins, n0=n0, tail_monotone=mono,
                                    n_search_max=n_search_max, failing_tail=failing)
            rep.verdict = "found" if mono else "undetermined"
            return rep
        if attempt < expansions:
            n_search_max *= 10
    return RequirementReport(E=E, n=ns, margins=margins, n0=None, tail_monotone=mono,
                             n_search_max=n_search_max, verdict="not-found",
                             failing_tail=failing)


# -- verdict ----------------------------------------------------------------------


@dataclass(frozen=True)
class Verdict:
    verdict: str  # admissible | not-admissible | undetermined
    E: float
    n0: int
    clauses: dict
    violated: list[str]


def admissibility_verdict(E: float, n0: int, hist: SwitchHistory, params: Params | None = None,
                          unreliable: Sequence[str] = ()) -> Verdict:
    """Check the three defining clauses of an admissible ``E`` against a simulation.

    1. ``|q_k| <= E sqrt(n0)`` for ``k <= n0`` (slack: the root tolerance in time);
    2. no node beyond ``n0`` switches before ``t_{n0}``;
    3. ``grad u_{n0}(t_{n0}) <= -3 h1 / 8``.

    ``unreliable`` lists constants whose plateau check failed; any entry
    downgrades an otherwise positive verdict to ``undetermined``.
    """
    params = params or hist.params
    for k in range(n0 + 2):
        if not hist.has(k):
            raise ValueError(f"history does not cover node {k}")
    tn0 = hist.record(n0).t
    slack = 1e-9 * max(1.0, tn0)
    qmax = max(abs(hist.record(k).q) for k in range(n0 + 1))
    c1 = qmax <= E * math.sqrt(n0) + slack
    early = [r.n for r in hist.records if r.n > n0 and r.t < tn0]
    c2 = not early
    grad = eval_grad_u(n0, tn0, hist, params)
    c3 = grad <= -0.375 * params.h1
    clauses = {"q_bound": {"ok": c1, "max_abs_q": qmax, "bound": E * math.sqrt(n0)},
               "no_early_switch": {"ok": c2, "nodes": early},
               "gradient": {"ok": c3, "grad": grad, "bound": -0.375 * params.h1}}
    violated = [k for k, v in clauses.items() if not v["ok"]]
    if violated:
        verdict = "not-admissible"
    elif unreliable:
        verdict = "undetermined"
    else:
        verdict = "admissible"
    return Verdict(verdict=verdict, E=E, n0=n0, clauses=clauses, violated=violated)


def E_sweep(tab: ConstantsTable, n_search_max: int = 5000, steps: int = 60, ratio: float = 1.05
            ) -> list[RequirementReport]:
    """``find_n0`` on the grid ``E0 * ratio**j``, ``j = 0..steps``."""
    E0 = tab["E0"]
    return [find_n0(E0 * ratio ** j, tab, n_search_max) for j in range(steps + 1)]
