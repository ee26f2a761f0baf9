"""Command-line front end.

Every command writes its artifacts to ``--out`` (default ``.``) together with a
``<artifact>.manifest.json`` holding the inputs, package version, backend,
sha256 of the artifact and a timestamp. Reruns with the same inputs produce
byte-identical artifacts; manifests differ only in ``timestamp``.

Exit codes: 0 success, 1 negative verdict, 2 precondition violation,
3 numerical failure. Errors are reported as one JSON object on stderr.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from typing import Sequence

from . import __version__, _backend
from .admissibility import (ConstantsTable, add_E, admissibility_verdict, build_constants,
                            find_n0)
from .analysis import extract_qn, grad_asymptotics
from .green import GreenConvergenceError
from .io import csv_text, json_text, write_text
from .kernels import QuadratureError
from .params import Params, PreconditionError
from .rate import BracketError, solve_a
from .sim import SimulationError, ode_oracle, simulate

EXIT_OK, EXIT_NEGATIVE, EXIT_PRECONDITION, EXIT_NUMERICAL = 0, 1, 2, 3
COMMANDS = ("solve-a", "simulate", "qn-table", "grad-table", "constants", "requirements",
            "admissibility", "sweep", "oracle-check")


class ConfigError(PreconditionError):
    """Malformed or unknown entry in a config file."""


# -- config and output ----------------------------------------------------------


def read_config(path) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment, keys use ``-`` or ``_``."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            key, val = (s.strip() for s in line.split("=", 1))
            out[key.replace("-", "_")] = val
    return out


def parse_range(spec: str) -> list[float]:
    """``lo:hi:step`` inclusive of ``hi`` (to rounding), or a comma list."""
    if ":" not in spec:
        return [float(s) for s in spec.split(",") if s.strip()]
    lo, hi, step = (float(s) for s in spec.split(":"))
    if step <= 0 or hi < lo:
        raise PreconditionError(f"bad range {spec!r}")
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return [round(lo + i * step, 12) for i in range(count)]


class Output:
    """Artifact writer; one manifest per artifact."""

    def __init__(self, out_dir: str, command: str, inputs: dict):
        self.dir = out_dir
        self.command = command
        self.inputs = inputs
        os.makedirs(out_dir, exist_ok=True)

    def write(self, name: str, text: str, extra: dict | None = None) -> str:
        path = os.path.join(self.dir, name)
        digest = write_text(path, text)
        body = {"artifact": name, "sha256": digest, "command": self.command,
                "inputs": self.inputs, "version": __version__, "backend": _backend.BACKEND,
                "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat()}
        if extra:
            body["details"] = extra
        write_text(path + ".manifest.json", json_text(body))
        return path


def _params(ns) -> Params:
    return Params(c=ns.c, h1=ns.h1, h2=ns.h2, tau0=ns.tau0)


# -- commands -------------------------------------------------------------------


def cmd_solve_a(ns, out: Output) -> int:
    p = _params(ns)
    s = solve_a(p, ns.tol)
    out.write("solve_a.csv", csv_text(["c", "h1", "a", "residual_f", "residual_g", "residual_h"],
                                      [(p.c, p.h1, s.a, s.residual_f, s.residual_g, s.residual_h)]))
    return EXIT_OK


def _history(ns):
    p = _params(ns)
    return p, simulate(p, ns.n_max, root_tol=ns.root_tol)


def cmd_simulate(ns, out: Output) -> int:
    _, hist = _history(ns)
    out.write("history.csv", hist.to_csv(), json.loads(hist.manifest()))
    return EXIT_OK


def cmd_qn_table(ns, out: Output) -> int:
    _, hist = _history(ns)
    qs = extract_qn(hist)
    out.write("qn.csv", qs.to_csv(), {"E_fit": qs.E_fit, "window": list(qs.window), "a": qs.a})
    return EXIT_OK


def cmd_grad_table(ns, out: Output) -> int:
    p, hist = _history(ns)
    gf = grad_asymptotics(hist, p)
    out.write("grad.csv", gf.to_csv(), {"A_grad_fit": gf.A_grad_fit, "log_slope": gf.log_slope,
                                        "trailing_slope": gf.trailing_slope,
                                        "below_three_eighths": gf.below_three_eighths})
    return EXIT_OK


def _table(ns) -> ConstantsTable:
    return build_constants(_params(ns), eta=ns.eta, n_scan_max=ns.n_scan_max,
                           green_grid=(ns.green_n, ns.green_t, ns.green_points))


def cmd_constants(ns, out: Output) -> int:
    tab = _table(ns)
    out.write("constants.json", tab.to_json(), {"unreliable": tab.unreliable})
    return EXIT_OK


def _E_value(ns, tab) -> float:
    return ns.E if ns.E is not None else ns.E_factor * tab["E0"]


def cmd_requirements(ns, out: Output) -> int:
    tab = _table(ns)
    E = _E_value(ns, tab)
    rep = find_n0(E, add_E(tab, E), ns.n_search_max)
    out.write("constants.json", add_E(tab, E).to_json())
    out.write("requirements.csv", rep.to_csv(),
              {"E": E, "n0": rep.n0, "verdict": rep.verdict, "n_search_max": rep.n_search_max,
               "tail_not_monotone": rep.failing_tail})
    return EXIT_OK if rep.n0 is not None else EXIT_NEGATIVE


def cmd_admissibility(ns, out: Output) -> int:
    """E-sweep from E0 (or ``--E``); simulate to ``n0 + 1`` and check the definition."""
    p = _params(ns)
    tab = _table(ns)
    Es = [ns.E] if ns.E is not None else [tab["E0"] * ns.E_ratio ** j for j in range(ns.E_steps + 1)]
    rows, verdict, hist = [], None, None
    for E in Es:
        rep = find_n0(E, add_E(tab, E), ns.n_search_max)
        if rep.n0 is None:
            rows.append((E, "", rep.verdict, "", ""))
            continue
        if hist is None or hist.frontier() < rep.n0 + 1:
            hist = simulate(p, rep.n0 + 1, root_tol=ns.root_tol, a=tab["a"])
        v = admissibility_verdict(E, rep.n0, hist, p, unreliable=tab.unreliable)
        if rep.verdict == "undetermined" and v.verdict == "admissible":
            v_text = "undetermined"
        else:
            v_text = v.verdict
        rows.append((E, rep.n0, rep.verdict, v_text, ";".join(v.violated)))
        if v_text == "admissible":
            verdict = (E, rep.n0, v)
            break
    out.write("constants.json", tab.to_json())
    det = None
    if verdict is not None:
        det = {"E": verdict[0], "n0": verdict[1], "clauses": verdict[2].clauses}
    out.write("admissibility.csv",
              csv_text(["E", "n0", "requirements_verdict", "admissibility", "violated"], rows),
              {"admissible": det})
    return EXIT_OK if verdict is not None else EXIT_NEGATIVE


def _sweep_one(c: float, h1: float, ns) -> tuple:
    p = Params(c=c, h1=h1, h2=ns.h2, tau0=ns.tau0)
    tab = build_constants(p, eta=ns.eta, n_scan_max=ns.n_scan_max,
                          green_grid=(ns.green_n, ns.green_t, ns.green_points))
    E0 = tab["E0"]
    for j in range(ns.E_steps + 1):
        E = E0 * ns.E_ratio ** j
        rep = find_n0(E, add_E(tab, E), ns.n_search_max, expansions=0)
        if rep.n0 is not None:
            return (h1, tab["a"], E0, E, rep.n0, rep.verdict)
    return (h1, tab["a"], E0, "", "", "not-found")


def cmd_sweep(ns, out: Output) -> int:
    h1s = parse_range(ns.h1_range)
    for h1 in h1s:
        Params(c=ns.c, h1=h1)  # validate every entry before starting
    if ns.threads > 1:
        with ThreadPoolExecutor(ns.threads) as ex:
            rows = list(ex.map(lambda h1: _sweep_one(ns.c, h1, ns), h1s))
    else:
        rows = [_sweep_one(ns.c, h1, ns) for h1 in h1s]
    out.write("sweep.csv", csv_text(["h1", "a", "E0", "E", "n0", "requirements_verdict"], rows))
    return EXIT_OK


def cmd_oracle_check(ns, out: Output) -> int:
    p = _params(ns)
    hist = simulate(p, ns.count, root_tol=ns.root_tol)
    t_end = hist.record(ns.count).t * 1.001 + 1.0
    ode = ode_oracle(p, ns.radius, t_end, dt=ns.dt, a=hist.a)
    rows, worst = [], 0.0
    for n in range(1, ns.count + 1):
        te, to = hist.record(n).t, ode.record(n).t
        rel = abs(te - to) / te
        worst = max(worst, rel)
        rows.append((n, te, to, rel))
    ok = worst <= ns.rel_tol
    out.write("oracle_check.csv", csv_text(["n", "t_event", "t_ode", "rel_diff"], rows),
              {"max_rel_diff": worst, "rel_tol": ns.rel_tol, "ok": ok})
    return EXIT_OK if ok else EXIT_NEGATIVE


HANDLERS = {
    "solve-a": cmd_solve_a, "simulate": cmd_simulate, "qn-table": cmd_qn_table,
    "grad-table": cmd_grad_table, "constants": cmd_constants, "requirements": cmd_requirements,
    "admissibility": cmd_admissibility, "sweep": cmd_sweep, "oracle-check": cmd_oracle_check,
}


# -- parser ---------------------------------------------------------------------


def _common(sp, h1: bool = True):
    sp.add_argument("--c", type=float, default=0.5, help="initial curvature c > 0")
    if h1:
        sp.add_argument("--h1", type=float, required=False, default=None,
                        help="relay output before switching, h1 > 2c")
    sp.add_argument("--h2", type=float, default=0.0, help="output magnitude after switching")
    sp.add_argument("--tau0", type=float, default=1.0, help="reference time for Green estimates")
    sp.add_argument("--out", default=".", help="output directory")
    sp.add_argument("--config", default=None, help="key=value file; flags take precedence")
    sp.add_argument("--threads", type=int, default=1, help="worker threads")


def _sim_opts(sp, n_max: int = 100):
    sp.add_argument("--n-max", type=int, default=n_max)
    sp.add_argument("--root-tol", type=float, default=1e-10)


def _const_opts(sp):
    sp.add_argument("--eta", type=float, default=None)
    sp.add_argument("--n-scan-max", type=int, default=2000)
    sp.add_argument("--green-n", type=int, default=64)
    sp.add_argument("--green-t", type=float, default=1e4)
    sp.add_argument("--green-points", type=int, default=200)


def _E_opts(sp):
    sp.add_argument("--E", type=float, default=None)
    sp.add_argument("--E-factor", type=float, default=1.1)
    sp.add_argument("--E-ratio", type=float, default=1.05)
    sp.add_argument("--E-steps", type=int, default=60)
    sp.add_argument("--n-search-max", type=int, default=20000)


def build_parser() -> tuple[argparse.ArgumentParser, dict]:
    ap = argparse.ArgumentParser(prog="relaylattice",
                                 description="Relay lattice switching: rate, simulation, constants.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    sps = {}
    sp = sps["solve-a"] = sub.add_parser("solve-a", help="solve for the rate a")
    _common(sp)
    sp.add_argument("--tol", type=float, default=1e-12)
    for name, hlp in (("simulate", "switching history"), ("qn-table", "q_n series"),
                      ("grad-table", "gradient residuals")):
        sp = sps[name] = sub.add_parser(name, help=hlp)
        _common(sp)
        _sim_opts(sp)
    sp = sps["constants"] = sub.add_parser("constants", help="constants table")
    _common(sp)
    _const_opts(sp)
    sp = sps["requirements"] = sub.add_parser("requirements", help="requirement margins and n0")
    _common(sp)
    _const_opts(sp)
    _E_opts(sp)
    sp = sps["admissibility"] = sub.add_parser("admissibility", help="admissibility verdict")
    _common(sp)
    _const_opts(sp)
    _E_opts(sp)
    sp.add_argument("--root-tol", type=float, default=1e-10)
    sp = sps["sweep"] = sub.add_parser("sweep", help="(h1, a, E, n0) table")
    _common(sp, h1=False)
    sp.add_argument("--h1", dest="h1_range", default="1.1:2.5:0.1", help="lo:hi:step or list")
    _const_opts(sp)
    _E_opts(sp)
    sp = sps["oracle-check"] = sub.add_parser("oracle-check", help="event loop vs direct ODE")
    _common(sp)
    sp.add_argument("--count", type=int, default=8)
    sp.add_argument("--radius", type=int, default=40)
    sp.add_argument("--dt", type=float, default=1e-3)
    sp.add_argument("--rel-tol", type=float, default=1e-4)
    sp.add_argument("--root-tol", type=float, default=1e-10)
    return ap, sps


def parse_args(argv: Sequence[str] | None):
    ap, sps = build_parser()
    ns = ap.parse_args(argv)
    if ns.config:
        cfg = read_config(ns.config)
        sp = sps[ns.command]
        known = {a.dest for a in sp._actions}
        if ns.command == "sweep" and "h1" in cfg:
            cfg["h1_range"] = cfg.pop("h1")
        unknown = sorted(set(cfg) - known - {"command"})
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        cfg.pop("command", None)
        sp.set_defaults(**cfg)  # string defaults are converted by each option's type
        ns = ap.parse_args(argv)
    if getattr(ns, "h1", "absent") is None:
        raise PreconditionError("--h1 is required")
    if ns.threads < 1:
        raise PreconditionError("--threads must be at least 1")
    return ns


def _fail(code: int, exc: BaseException) -> int:
    sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc),
                                 "exit_code": code}, sort_keys=True) + "\n")
    return code


def main(argv: Sequence[str] | None = None) -> int:
    try:
        ns = parse_args(argv)
        if ns.command != "sweep":
            _params(ns)  # validate h1 > 2c before any work
        inputs = {k: v for k, v in sorted(vars(ns).items()) if k not in ("out", "config")}
        out = Output(ns.out, ns.command, inputs)
        return HANDLERS[ns.command](ns, out)
    except (PreconditionError, ValueError, OSError) as exc:
        return _fail(EXIT_PRECONDITION, exc)
    except (SimulationError, GreenConvergenceError, QuadratureError, BracketError,
            ArithmeticError, RuntimeError) as exc:
        return _fail(EXIT_NUMERICAL, exc)


if __name__ == "__main__":
    sys.exit(main())
