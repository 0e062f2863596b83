"""opcumulant command line.

    opcumulant threshold   --config run.toml [--out DIR] [--order N] [--threads K]
    opcumulant phase-space --config run.toml [--out DIR] [--order N]
    opcumulant couplings   --config run.toml [--out DIR] [--threads K]
    opcumulant selftest    [--golden FILE]

Exit codes: 0 success, 1 usage or config error, 2 numeric failure,
3 self-test failure.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from importlib import resources

import numpy as np

from . import __version__
from .analysis import (NoThresholdError, NumericError, floquet_threshold, lambda0_threshold,
                       lambda_c_first_order)
from .config import ConfigError, RunConfig, load
from .cumulants import cumulant_table
from .expavg import ExpPoly, WindowSpec
from .models import KapitzaParams, ModulationParams
from .sim import (DivergenceError, ModulatedSetup, circle_polygon, modulated_comparison,
                  modulated_field, phase_space_area, setup_grid)

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_SELFTEST = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    return "nan" if math.isnan(x) else f"{x:.17g}"


def _header(cmd: str, cfg: RunConfig, order) -> str:
    return f"# opcumulant {__version__} {cmd} config_hash={cfg.digest} order={order}\n"


def write_table(path, cmd, cfg, order, columns, rows):
    with open(path, "w") as fh:
        fh.write(_header(cmd, cfg, order))
        fh.write(",".join(columns) + "\n")
        for r in rows:
            fh.write(",".join(_fmt(v) for v in r) + "\n")


def write_json(path, cmd, cfg, order, payload):
    doc = {"header": {"tool": "opcumulant", "version": __version__, "command": cmd,
                      "config_hash": cfg.digest, "order": order}}
    doc.update(payload)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def _emit_rows(out_dir, name, cmd, cfg, order, columns, rows):
    if cfg.output["format"] == "json":
        path = os.path.join(out_dir, name + ".json")
        write_json(path, cmd, cfg, order, {"columns": list(columns),
                                           "rows": [[None if isinstance(v, float) and math.isnan(v) else v
                                                     for v in r] for r in rows]})
    else:
        path = os.path.join(out_dir, name + ".csv")
        write_table(path, cmd, cfg, order, columns, rows)
    return path


def _pool_map(fn, items, threads):
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


# --------------------------------------------------------------- commands

def _safe(fn):
    try:
        return fn(), None
    except (NoThresholdError, NumericError) as exc:
        return float("nan"), str(exc)


def cmd_threshold(cfg: RunConfig, out_dir: str, order=None, threads: int = 1):
    if cfg.model["name"] != "kapitza":
        raise UsageError("threshold needs model.name = 'kapitza'")
    if cfg.window["kind"] != "gaussian":
        raise UsageError("threshold scans use a gaussian window")
    sw = cfg.sweep
    gammas, betas = sw.get("gamma") or [], sw.get("beta") or []
    orders = [order] if order else (sw.get("orders") or [cfg.engine["order"]])
    if not gammas or not betas or not orders:
        raise UsageError("empty sweep grid (sweep.gamma, sweep.beta, sweep.orders)")
    if any(int(o) != o or o < 1 for o in orders):
        raise UsageError("sweep.orders must be positive integers")
    tau = float(cfg.window["tau"])
    points = [(float(g), float(b)) for g in gammas for b in betas]

    def per_point(gb):
        g, b = gb
        lc, e1 = _safe(lambda: lambda_c_first_order(g, b).lambda_star)
        fl, e2 = _safe(lambda: floquet_threshold(g, b, "lower").lambda_star)
        fu, e3 = _safe(lambda: floquet_threshold(g, b, "upper").lambda_star)
        rows = []
        errs = [e for e in (e1, e2, e3) if e]
        for n in orders:
            l0, e = _safe(lambda: lambda0_threshold(g, b, int(n), tau=tau).lambda_star)
            if e:
                errs.append(e)
            rows.append((g, b, int(n), l0, lc, fl, fu))
        return rows, errs

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        results = _pool_map(per_point, points, threads)
    rows = [r for rs, _ in results for r in rs]
    errors = [e for _, es in results for e in es]
    cols = ("gamma", "beta", "order", "lambda0", "lambda_c1", "lambda_floquet_lower",
            "lambda_floquet_upper")
    ostr = ",".join(str(int(o)) for o in orders)
    path = _emit_rows(out_dir, "threshold", "threshold", cfg, ostr, cols, rows)
    write_json(os.path.join(out_dir, "threshold_summary.json"), "threshold", cfg, ostr,
               {"rows": len(rows), "warnings": len(errors), "messages": errors})
    return [path]


def _setup_from(cfg: RunConfig) -> ModulatedSetup:
    m, sim = cfg.model, cfg.sim
    params = KapitzaParams(gamma=math.sqrt(m["gamma2"]), lam=m["lam"], beta=m["beta"], nu=m["nu"])
    mod = ModulationParams(amplitude=m["amplitude"], period=m["period"])
    win = WindowSpec(cfg.window["kind"], float(cfg.window["tau"]))
    return ModulatedSetup(params, mod, win, t_start=sim["t_start"], t_end=sim["t_end"],
                          init=(sim["theta0"], sim["p0"]), steps_per_period=sim["steps_per_period"])


def cmd_phase_space(cfg: RunConfig, out_dir: str, order=None, threads: int = 1):
    if cfg.model["name"] != "modulated-kapitza":
        raise UsageError("phase-space needs model.name = 'modulated-kapitza'")
    et = cfg.engine.get("tau")
    if et is not None and float(et) != float(cfg.window["tau"]):
        raise UsageError(f"engine.tau = {et} differs from window.tau = {cfg.window['tau']}; "
                         "the filter and the engine must share one window")
    n = int(order or cfg.engine["order"])
    setup = _setup_from(cfg)
    orders = (1,) if n == 1 else (1, n)
    t_end = float(cfg.sim["t_end"])
    out, reports = modulated_comparison(setup, orders, (0.0, t_end))
    files = []
    hdr = [f"opcumulant {__version__} phase-space config_hash={cfg.digest} order={n}"]
    for key, name in [("filtered", "exact_filtered")] + [(k, f"effective_order{k}") for k in orders]:
        path = os.path.join(out_dir, name + ".csv")
        out[key].to_csv(path, hdr)
        files.append(path)
    # area of a small loop around the origin: full vs Hamiltonian-only field
    dt = setup_grid(setup)[0] * setup.effective_stride
    poly = circle_polygon((0.0, 0.0), cfg.sim["seed_radius"], cfg.sim["seed_vertices"])
    span = (0.0, dt * math.ceil(t_end / dt - 1e-9))
    every = max(1, int(round(0.05 / dt)))
    full = phase_space_area(modulated_field(setup, n), poly, span, dt, every=every)
    ham = phase_space_area(modulated_field(setup, n, "hamiltonian"), poly, span, dt, every=every)
    rows = list(zip(full.times, full.areas, full.relative, ham.areas, ham.relative))
    cols = ("t", "area", "area_rel", "area_hamiltonian", "area_hamiltonian_rel")
    files.append(_emit_rows(out_dir, "area", "phase-space", cfg, n, cols, rows))
    payload = {f"order{k}": reports[k].as_dict() for k in orders}
    payload["max_abs_theta"] = {f"order{k}": float(np.max(np.abs(out[k].theta))) for k in orders}
    payload["max_abs_theta"]["filtered"] = float(np.max(np.abs(out["filtered"].theta)))
    payload["window"] = {"kind": setup.window.kind, "tau": setup.window.tau}
    path = os.path.join(out_dir, "report.json")
    write_json(path, "phase-space", cfg, n, payload)
    files.append(path)
    return files


def coupling(omega1: float, omega2: float, win: WindowSpec, t: float = 0.0):
    """(U_12, U_21, g, gamma) for two harmonic letters e^{-i w t}."""
    if omega1 == omega2:
        u = complex(cumulant_table([ExpPoly.harmonic(omega1)], win)[(0, 0)](t))
        return u, u, 0.0, abs(u)
    tab = cumulant_table([ExpPoly.harmonic(omega1), ExpPoly.harmonic(omega2)], win)
    u12, u21 = complex(tab[(0, 1)](t)), complex(tab[(1, 0)](t))
    return u12, u21, abs(u12 - u21) / 2, abs(u12 + u21) / 2


def cmd_couplings(cfg: RunConfig, out_dir: str, order=None, threads: int = 1):
    if cfg.model["name"] != "parametric-oscillator":
        raise UsageError("couplings needs model.name = 'parametric-oscillator'")
    w1s, w2s = cfg.sweep.get("omega1") or [], cfg.sweep.get("omega2") or []
    if not w1s or not w2s:
        raise UsageError("empty sweep grid (sweep.omega1, sweep.omega2)")
    win = WindowSpec(cfg.window["kind"], float(cfg.window["tau"]))
    grid = [(float(a), float(b)) for a in w1s for b in w2s]

    def row(ab):
        u12, u21, g, gam = coupling(ab[0], ab[1], win)
        return (ab[0], ab[1], u12.real, u12.imag, u21.real, u21.imag, g, gam)

    rows = _pool_map(row, grid, threads)
    cols = ("omega1", "omega2", "u12_re", "u12_im", "u21_re", "u21_im", "g", "gamma")
    return [_emit_rows(out_dir, "couplings", "couplings", cfg, 2, cols, rows)]


# --------------------------------------------------------------- selftest

def _golden_default():
    return resources.files("opcumulant").joinpath("data/selftest_golden.json")


def selftest_checks():
    """Fast checks; each returns (name, value, reference, tolerance, relative)."""
    from .analysis import closed_form_lambda0
    from .freewords import all_words, dynkin_apply, dynkin_expand
    from .models import ct_first_order_printed, ct_frame, kapitza
    from .cumulants import TruncationPolicy, effective_generator

    out = []
    for n in (3, 5):
        v = lambda0_threshold(0.1, 0.02, n).lambda_star
        out.append((f"lambda0_order{n}", v, closed_form_lambda0(n, 0.1, 0.02), 1e-4, True))
    out.append(("lambda_c1_limit", lambda_c_first_order(0.0, 0.0).lambda_star, 0.454163, 1e-5, False))
    p = KapitzaParams(gamma=0.1, lam=0.3, beta=0.05)
    for frame in (1, 2):
        ser = effective_generator(ct_frame(frame, p, 1.0), WindowSpec("gaussian", 12.0),
                                  TruncationPolicy(n_max=1))
        M, Z0 = ct_first_order_printed(frame, p, 1.0)
        A = ser.element(0.0).m
        err = max(np.max(np.abs(A[:2, :2] + M)), np.max(np.abs(A[:2, 2] - M @ Z0)))
        out.append((f"ct{frame}_first_order", err, 0.0, 1e-9, False))
    ser = effective_generator(kapitza(p, "matrix"), WindowSpec("gaussian", 0.4), TruncationPolicy(n_max=2))
    out.append(("kapitza_U2_vanishes", float(np.max(np.abs(ser.order_element(2, 0.0).m))), 0.0, 1e-12, False))
    worst = 0.0
    for n in range(1, 5):
        for w in all_words(2, n):
            once = dynkin_expand(w)
            twice = dynkin_apply(once)
            worst = max(worst, max((abs(float(once.get(k, 0) - twice.get(k, 0))) for k in set(once) | set(twice)),
                                   default=0.0))
    out.append(("dynkin_idempotent", worst, 0.0, 0.0, False))
    return out


def golden_checks(path):
    """Frozen reference values; any unreadable or mismatching entry is a named failure."""
    try:
        with open(path) as fh:
            gold = json.load(fh)
        entries = gold["entries"]
    except (OSError, ValueError, KeyError, TypeError) as exc:
        return [(f"golden:{os.path.basename(str(path))}", False, f"unreadable ({type(exc).__name__})")]
    compute = {
        "lambda0_order7_g0.1_b0": lambda: lambda0_threshold(0.1, 0.0, 7).lambda_star,
        "lambda_c1_g0.1_b0.05": lambda: lambda_c_first_order(0.1, 0.05).lambda_star,
        "coupling_gamma_w1_w1_tau1": lambda: coupling(1.0, 1.0, WindowSpec("gaussian", 1.0))[3],
    }
    res = []
    for name in sorted(compute):
        ent = entries.get(name) if isinstance(entries, dict) else None
        try:
            ref, tol = float(ent["value"]), float(ent["tol"])
        except (TypeError, KeyError, ValueError):
            res.append((f"golden:{name}", False, "missing or malformed entry"))
            continue
        v = compute[name]()
        ok = abs(v - ref) <= tol * max(1.0, abs(ref))
        res.append((f"golden:{name}", ok, f"value={v:.12g} ref={ref:.12g}"))
    return res


def cmd_selftest(golden=None, stream=None) -> int:
    stream = stream or sys.stdout
    rows = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for name, v, ref, tol, rel in selftest_checks():
            err = abs(v - ref) / (abs(ref) if rel else 1.0)
            rows.append((name, err <= tol, f"err={err:.3e} tol={tol:.1e}"))
        rows += golden_checks(golden or _golden_default())
    width = max(len(r[0]) for r in rows)
    for name, ok, detail in rows:
        stream.write(f"{'PASS' if ok else 'FAIL'}  {name:<{width}}  {detail}\n")
    bad = sum(not ok for _, ok, _ in rows)
    stream.write(f"{len(rows) - bad}/{len(rows)} checks passed\n")
    return EXIT_OK if bad == 0 else EXIT_SELFTEST


# ------------------------------------------------------------------- main

COMMANDS = {"threshold": cmd_threshold, "phase-space": cmd_phase_space, "couplings": cmd_couplings}


def build_parser():
    ap = _Parser(prog="opcumulant", description="Time-coarse-grained effective generators")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="cmd", required=True, parser_class=_Parser)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True)
        sp.add_argument("--out", default=None)
        sp.add_argument("--order", type=int, default=None)
        sp.add_argument("--threads", type=int, default=1)
    st = sub.add_parser("selftest")
    st.add_argument("--golden", default=None)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.cmd == "selftest":
        return cmd_selftest(args.golden)
    try:
        if args.order is not None and args.order < 1:
            raise UsageError("--order must be >= 1")
        if args.threads < 1:
            raise UsageError("--threads must be >= 1")
        cfg = load(args.config)
        out_dir = args.out or cfg.output["path"]
        os.makedirs(out_dir, exist_ok=True)
        files = COMMANDS[args.cmd](cfg, out_dir, args.order, args.threads)
    except (ConfigError, UsageError) as exc:
        print(f"opcumulant: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericError, NoThresholdError, DivergenceError, FloatingPointError) as exc:
        print(f"opcumulant: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    for f in files:
        print(f)
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
