"""Command line experiment runner.

Every subcommand writes ``<out>/<name>.csv`` (columns documented in
schema.json) and ``<out>/<name>.json`` holding every computed scalar and
the fully resolved config.  Parameters come from built-in defaults, then
an optional YAML/JSON config file, then command-line flags.

Exit codes: 0 success, 1 validation error, 2 solver failure, 3 I/O failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import yaml

from . import __version__
from .aubry import (NonConvergence, RotationSymbol, UnresolvedGap, WindowTooSmall,
                    barrier_profile, irrational_barrier, minimal_periodic_orbit)
from .herman import (BallDoesNotFit, NonzeroMean, make_T_analytic, make_T_smooth,
                     smooth_threshold, toy_family)
from .melnikov import (MelnikovParams, OutOfBracket, PendulumParams, QuadratureFailure,
                       energy_time_law, melnikov_closed_form, melnikov_quadrature,
                       separatrix, time_of_flight)
from .perturb import (AnalyticPerturbParams, DegreeOverflow, SmoothBumpParams, SupportTooWide,
                      make_analytic_v, make_bump_v, make_u, norm_report)
from .rotation import is_rational_at_precision, rescale_problem
from .trigapprox import jackson_report, periodic_bspline, periodic_bspline_sup
from .twistmap import (GeneratingFunction, OrbitEscaped, PhasePoint, ZeroPotential, orbit,
                       stationarity_residual)

EXIT_OK, EXIT_VALIDATION, EXIT_SOLVER, EXIT_IO = 0, 1, 2, 3
SOLVER_ERRORS = (NonConvergence, WindowTooSmall, UnresolvedGap, QuadratureFailure, OutOfBracket,
                 DegreeOverflow, OrbitEscaped, BallDoesNotFit, NonzeroMean, ArithmeticError)
FAMILIES = ("zero", "u", "cinf", "analytic", "toy")


class ValidationError(ValueError):
    def __init__(self, problems):
        super().__init__("; ".join(problems))
        self.problems = list(problems)


# ------------------------------------------------------------ parameters

def _floats(text) -> list:
    if isinstance(text, (list, tuple)):
        return [float(t) for t in text]
    return [float(t) for t in str(text).split(",") if t.strip()]



COMMON = {
    "out": (str, "out", "output directory"),
    "name": (str, None, "base name of the artifacts (default: subcommand)"),
    "workers": (int, 1, "worker processes"),
    "tol": (float, 1e-8, "verdict threshold / tolerance"),
    "seed": (int, 0, "random seed (randomised restarts only)"),
}

FAMILY = {
    "family": (str, "cinf", "potential family: " + ", ".join(FAMILIES)),
    "n": (int, 2, "family index n"),
    "a": (float, 1.0, "exponent a"),
    "k": (int, 2, "smoothness / Jackson order k"),
    "sigma": (float, 0.3, "slack sigma of the analytic family"),
}

PARAMS: dict = {
    "barrier": {**FAMILY,
                "symbol": (str, "0+", "rotation symbol: p/q, p/q+, p/q-, golden or a decimal"),
                "xi_grid": (int, 64, "number of xi samples in one period"),
                "window": (int, 1, "initial truncation window (periods)"),
                "max_q": (int, 100, "largest convergent denominator for irrational symbols")},
    "orbit": {**FAMILY,
              "x0": (float, 0.0, "initial lift coordinate"),
              "y0": (float, 0.3, "initial momentum"),
              "steps": (int, 1000, "number of map iterations"),
              "p": (int, None, "periodic orbit numerator (with q: minimal periodic orbit)"),
              "q": (int, None, "periodic orbit denominator")},
    "construct": {**FAMILY,
                  "orders": (_floats, [0.0, 1.0, 2.0], "norm orders r (comma separated)"),
                  "rescale": (int, 1, "rescaling factor q for Q = q^-2 P(q x)"),
                  "n_equals_q": (bool, False, "use n = rescale (the convergent sequence)"),
                  "strip_r": (float, None, "strip half-width for trig-polynomial norms")},
    "approx": {"function": (str, "bspline", "test function: bspline, expcos"),
               "d": (int, 1, "dimension"),
               "m": (int, 16, "order m (all axes)"),
               "r": (int, 5, "derivative order r"),
               "grid": (int, 2 ** 14, "samples per axis")},
    "herman": {"mode": (str, "toy", "toy, smooth or analytic"),
               "n": (int, 4, "index n"),
               "d": (int, 2, "dimension (smooth/analytic)"),
               "c": (float, 4.0, "ball amplitude factor (smooth)"),
               "radius_factor": (float, None, "ball radius factor"),
               "k": (int, 6, "Jackson order (analytic)"),
               "eps": (float, 0.2, "epsilon (analytic)"),
               "sigma": (float, 0.1, "approximation slack (analytic)"),
               "grid": (int, 256, "samples per axis")},
    "melnikov": {"delta": (float, 0.04, "pendulum stiffness delta"),
                 "omega2": (float, 1.0, "frequency omega_2"),
                 "q2": (float, 0.0, "phase q_2(t_1)"),
                 "window_mult": (float, 40.0, "quadrature half-window in units of 1/sqrt(delta)"),
                 "q2_grid": (int, 16, "number of phases in the CSV table")},
    "sweep": {"run": (str, "construct", "subcommand run at each point"),
              "over": (list, [], "KEY=V1,V2,... ranges (repeatable)"),
              "set": (list, [], "KEY=VALUE fixed parameters (repeatable)"),
              "fit_x": (str, None, "swept key used as fit abscissa"),
              "fit_y": (list, [], "summary keys to fit against fit_x (repeatable)"),
              "loglog": (bool, True, "fit log|y| against log x")},
}


def defaults(sub: str) -> dict:
    out = {k: v[1] for k, v in COMMON.items()}
    out.update({k: v[1] for k, v in PARAMS[sub].items()})
    return out


def coerce(sub: str, key: str, value):
    table = {**COMMON, **PARAMS[sub]}
    if key not in table:
        raise ValidationError([f"unknown parameter '{key}' for {sub}"])
    typ = table[key][0]
    if value is None:
        return None
    if typ is bool:
        if isinstance(value, str):
            return value.lower() in ("1", "true", "yes", "on")
        return bool(value)
    if typ is list:
        return list(value) if isinstance(value, (list, tuple)) else [value]
    try:
        return typ(value)
    except (TypeError, ValueError) as exc:
        raise ValidationError([f"{key}: cannot read {value!r} ({exc})"])


@dataclass
class ExperimentConfig:
    subcommand: str
    params: dict = field(default_factory=dict)

    def resolved(self) -> dict:
        return {"subcommand": self.subcommand, "version": __version__, **self.params}


def load_config_file(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise IOError(f"cannot read config {path}: {exc}")
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ValidationError([f"config {path} must hold a mapping"])
    return data


def build_config(sub: str, file_data: dict, flags: dict) -> ExperimentConfig:
    params = defaults(sub)
    nested = file_data.get("params", file_data)
    problems = []
    for key, val in nested.items():
        if key in ("subcommand", "params", "version"):
            continue
        key = key.replace("-", "_")
        try:
            params[key] = coerce(sub, key, val)
        except ValidationError as exc:
            problems.extend(exc.problems)
    for key, val in flags.items():
        if val is not None:
            try:
                params[key] = coerce(sub, key, val)
            except ValidationError as exc:
                problems.extend(exc.problems)
    if problems:
        raise ValidationError(problems)
    return ExperimentConfig(sub, params)


# ------------------------------------------------------------ validation

def _family_problems(p: dict) -> list:
    out = []
    fam = p.get("family")
    if fam not in FAMILIES:
        out.append(f"family must be one of {FAMILIES}, got {fam!r}")
        return out
    if fam == "zero":
        return out
    if p.get("n") is None or p["n"] < 1:
        out.append("n must be a positive integer")
    if fam in ("u", "cinf", "analytic") and not (p.get("a") or 0) > 0:
        out.append("a must be positive")
    if out:
        return out
    if fam == "cinf":
        out.extend(SmoothBumpParams(p["n"], p["a"], p["k"]).violations())
    if fam == "analytic":
        out.extend(AnalyticPerturbParams(p["n"], p["a"], p["k"], p["sigma"]).violations())
    return out


def validate(cfg: ExperimentConfig) -> list:
    p, sub = cfg.params, cfg.subcommand
    out = []
    if p["workers"] < 1:
        out.append("workers must be >= 1")
    if not p["tol"] > 0:
        out.append("tol must be positive")
    if sub in ("barrier", "orbit", "construct"):
        out.extend(_family_problems(p))
    if sub == "barrier":
        try:
            RotationSymbol.parse(p["symbol"])
        except ValueError as exc:
            out.append(f"symbol: {exc}")
        if p["xi_grid"] < 1:
            out.append("xi_grid must be >= 1")
        if p["window"] < 1:
            out.append("window must be >= 1")
    if sub == "orbit":
        if p["steps"] < 1:
            out.append("steps must be >= 1")
        if (p["p"] is None) != (p["q"] is None):
            out.append("p and q must be given together")
        elif p["q"] is not None:
            if p["q"] < 1 or math.gcd(p["p"], p["q"]) != 1:
                out.append("need q >= 1 and gcd(p, q) = 1")
    if sub == "construct":
        if p["rescale"] < 1:
            out.append("rescale must be >= 1")
        if any(r < 0 for r in p["orders"]) or not p["orders"]:
            out.append("orders must be a nonempty list of nonnegative reals")
        if p["strip_r"] is not None and p["family"] not in ("analytic", "toy"):
            out.append("strip_r needs a trig-polynomial family (analytic or toy)")
    if sub == "approx":
        if p["function"] not in ("bspline", "expcos"):
            out.append("function must be bspline or expcos")
        if p["d"] not in (1, 2):
            out.append("d must be 1 or 2")
        if p["m"] < 1 or p["r"] < 1:
            out.append("m and r must be >= 1")
        if p["function"] == "bspline" and p["r"] > 5:
            out.append("bspline has a bounded derivative only up to order 5")
        if p["grid"] < 8 * p["m"]:
            out.append(f"grid must have at least 8 m = {8 * p['m']} samples")
    if sub == "herman":
        if p["mode"] not in ("toy", "smooth", "analytic"):
            out.append("mode must be toy, smooth or analytic")
        if p["n"] < 1:
            out.append("n must be >= 1")
        if p["mode"] != "toy" and p["d"] < 1:
            out.append("d must be >= 1")
        if p["mode"] == "analytic" and not 0 < p["eps"] < 1:
            out.append("eps must lie in (0, 1)")
        if p["grid"] < 16 or p["grid"] & (p["grid"] - 1):
            out.append("grid must be a power of two >= 16")
    if sub == "melnikov":
        if not p["delta"] > 0:
            out.append("delta must be positive")
        if p["omega2"] == 0:
            out.append("omega2 must be nonzero")
        if p["q2_grid"] < 1:
            out.append("q2_grid must be >= 1")
    if sub == "sweep":
        if p["run"] not in PARAMS or p["run"] == "sweep":
            out.append(f"run must name a subcommand other than sweep, got {p['run']!r}")
        if not p["over"]:
            out.append("sweep needs at least one --over range")
        for item in p["over"]:
            key, _, vals = str(item).partition("=")
            if not vals.strip():
                out.append(f"range '{item}' is empty")
        if p["fit_x"] is not None and p["fit_x"] not in [str(i).partition("=")[0] for i in p["over"]]:
            out.append("fit_x must be one of the swept keys")
    return out


# ------------------------------------------------------------- families

def build_potential(p: dict):
    fam = p["family"]
    if fam == "zero":
        return ZeroPotential()
    if fam == "toy":
        from .herman import toy_potential
        return toy_potential(p["n"])
    u = make_u(p["n"], p["a"])
    if fam == "u":
        return u
    if fam == "cinf":
        return u + make_bump_v(SmoothBumpParams(p["n"], p["a"], p["k"]))
    return u + make_analytic_v(AnalyticPerturbParams(p["n"], p["a"], p["k"], p["sigma"])).v


# ---------------------------------------------------------- subcommands

@dataclass
class Result:
    columns: list
    rows: list
    summary: dict


def run_barrier(p: dict) -> Result:
    h = GeneratingFunction(build_potential(p))
    sym = RotationSymbol.parse(p["symbol"])
    L = h.period
    xi = L * np.arange(p["xi_grid"]) / p["xi_grid"]
    summary: dict = {"period": L, "symbol": str(sym)}
    if sym.kind == "irrational":
        if is_rational_at_precision(sym.omega):
            raise ValidationError([f"omega {sym.omega} is rational at working precision"])
        vals, pairs, spread = irrational_barrier(h, sym.omega, xi, max_q=p["max_q"])
        est = vals[-1]
        q_last = pairs[-1][1]
        rows = [(float(x), float(v), q_last, float(s)) for x, v, s in zip(xi, est, spread)]
        summary["convergents"] = [list(pq) for pq in pairs]
        summary["max_spread"] = float(np.max(spread))
        values = est
    else:
        prof = barrier_profile(h, sym, xi, window=p["window"], workers=p["workers"])
        rows = [(float(x), float(v), int(w), float(r))
                for x, v, w, r in zip(xi, prof.values, prof.windows, prof.residuals)]
        values = prof.values
        summary["max_window_change"] = float(np.max(prof.residuals))
    j = int(np.argmax(values))
    summary.update({"sup_barrier": float(values[j]), "witness_xi": float(xi[j]),
                    "min_barrier": float(np.min(values)),
                    "verdict": "destroyed" if values[j] > p["tol"] else "exists-compatible"})
    return Result(["xi", "barrier", "window", "residual"], rows, summary)


def run_orbit(p: dict) -> Result:
    h = GeneratingFunction(build_potential(p))
    if p["q"] is not None:
        c = minimal_periodic_orbit(h, p["p"], p["q"])
        rows = [(i, float(x)) for i, x in enumerate(c.values)]
        return Result(["i", "x"], rows, {
            "p": p["p"], "q": p["q"], "action": float(c.action),
            "stationarity_residual": stationarity_residual(h, c), "period": h.period})
    xs = orbit(h, PhasePoint(p["x0"], p["y0"]), p["steps"])
    # momentum attached to x_i: y_i = y_0 + sum_{j <= i} V'(x_j)
    ys = np.empty_like(xs)
    ys[0] = p["y0"]
    ys[1:] = ys[0] + np.cumsum(h.V.deriv(xs[1:], 1))
    rows = [(i, float(x), float(y)) for i, (x, y) in enumerate(zip(xs, ys))]
    N = p["steps"]
    half = (xs[N // 2] - xs[0]) / (N // 2) if N >= 2 else float("nan")
    return Result(["i", "x", "y"], rows, {
        "rotation_number": float((xs[-1] - xs[0]) / N),
        "rotation_number_half": float(half),
        "rotation_number_units_of_period": float((xs[-1] - xs[0]) / N / h.period)})


def run_construct(p: dict) -> Result:
    if p["n_equals_q"]:
        p = {**p, "n": p["rescale"]}
        bad = _family_problems(p)
        if bad:
            raise ValidationError(bad)
    P = build_potential(p)
    Q = rescale_problem(P, p["rescale"])
    rep = norm_report(Q, p["orders"], strip_r=p["strip_r"] if p["rescale"] == 1 else None)
    rows = [(float(r), float(rep.norms[r])) for r in p["orders"]]
    summary = {f"norm_r{r:g}": float(rep.norms[r]) for r in p["orders"]}
    summary.update({f"sup_d{j}": float(v) for j, v in rep.sup_derivs.items()})
    summary["period"] = Q.period
    if p["family"] in ("u", "cinf", "analytic"):
        summary["value_at_half"] = float(P(0.5))
    if p["family"] == "cinf":
        v = make_bump_v(SmoothBumpParams(p["n"], p["a"], p["k"]))
        summary.update({"bump_peak": float(v(0.5)), "s": (p["k"] + 2) * p["a"],
                        "bump_Ck_norm": float(norm_report(v, [p["k"]]).norms[p["k"]])})
    if p["family"] == "analytic":
        av = make_analytic_v(AnalyticPerturbParams(p["n"], p["a"], p["k"], p["sigma"]))
        summary.update({"N": av.N, "degree": av.v.degree, "log_scale": av.v.log_scale,
                        "p_error": av.p_error, "log_on_bump_max": av.log_on_bump_max,
                        "C_off": av.C_off, "C_degree": av.C_degree})
    if rep.strip is not None:
        summary.update({f"strip_{k}": v for k, v in rep.strip.items()})
    return Result(["order", "norm"], rows, summary)


def run_approx(p: dict) -> Result:
    d, m, r = p["d"], p["m"], p["r"]
    shape = [p["grid"]] * d if d == 1 else [min(p["grid"], 512)] * d
    if p["function"] == "bspline":
        if d == 1:
            f = lambda x: periodic_bspline(x)
        else:
            f = lambda x, y: periodic_bspline(x) * periodic_bspline(y)
        # spectral derivatives of a spline are unreliable; use exact sups
        sup0 = periodic_bspline_sup(0) if d == 2 else 1.0
        norms = [periodic_bspline_sup(r) * sup0] * d
        rep = jackson_report(f, [m] * d, [r] * d, shape=shape, deriv_norms=norms)
    else:
        if d == 1:
            f = lambda x: np.exp(np.cos(x))
        else:
            f = lambda x, y: np.exp(np.cos(x)) * np.exp(np.cos(y))
        rep = jackson_report(f, [m] * d, [r] * d, shape=shape)
    rows = [(j, m, r, float(t)) for j, t in enumerate(rep.bound_terms)]
    return Result(["axis", "m", "r", "term"], rows, {
        "achieved_error": rep.achieved_error, "C_d": rep.C_d, "bound": rep.bound,
        "sum_terms": float(sum(rep.bound_terms))})


def run_herman(p: dict) -> Result:
    mode = p["mode"]
    if mode == "toy":
        model = toy_family(p["n"])
        r = model.report
        x = model.potential.period * np.arange(64) / 64
        rows = [(float(t), float(model.phi(t)), float(model.dphi(t))) for t in x]
        summary = {"min": r.min_T, "max": r.max_T, "lhs": r.lhs, "rhs": r.rhs, "holds": r.holds,
                   "margin": r.margin, "lipschitz_bound_G": r.lipschitz_bound_G,
                   "argmin": model.argmin, "argmax": model.argmax}
        return Result(["x", "phi", "dphi"], rows, summary)
    if mode == "smooth":
        kw = {} if p["radius_factor"] is None else {"radius_factor": p["radius_factor"]}
        s = make_T_smooth(p["n"], p["d"], p["c"], grid=p["grid"], **kw)
        thr, ladder = smooth_threshold(p["d"], p["c"], n_max=max(p["n"], 1024), grid=p["grid"], **kw)
        r = s.report
        rows = [(n, bool(h), float(mg)) for n, h, mg in ladder]
        summary = {"min": r.min_T, "max": r.max_T, "lhs": r.lhs, "rhs": r.rhs, "holds": r.holds,
                   "margin": r.margin, "mean": s.field.mean, "beta": s.beta, "radius": s.radius,
                   "denominator_collapse": r.denominator_collapse, "threshold_n": thr,
                   "scri_lhs": r.scri_lhs, "scri_rhs": r.scri_rhs}
        return Result(["n", "holds", "margin"], rows, summary)
    a = make_T_analytic(p["n"], p["d"], p["k"], p["eps"], sigma=p["sigma"], grid=p["grid"],
                        radius_factor=p["radius_factor"])
    r = a.report
    t = 2 * math.pi * np.arange(128) / 128
    diag = a.poly(np.stack([t] * p["d"], axis=-1))
    rows = [(float(ti), float(v)) for ti, v in zip(t, diag)]
    summary = {"min": r.min_T, "max": r.max_T, "lhs": r.lhs, "rhs": r.rhs, "holds": r.holds,
               "margin": r.margin, "N": a.N, "approx_error": a.approx_error, "beta": a.beta,
               "radius": a.radius, "C_nn": a.C_nn, "threshold_n": a.threshold,
               "min_scaled": r.min_T * p["n"] ** (1 - p["eps"]),
               "max_scaled": r.max_T * p["n"] ** (2 - p["eps"]), "mean": a.poly.mean}
    return Result(["t", "T_diagonal"], rows, summary)


def run_melnikov(p: dict) -> Result:
    m = MelnikovParams(p["delta"], p["omega2"], p["q2"])
    cf = melnikov_closed_form(m)
    qd = melnikov_quadrature(m, p["window_mult"])
    rows = []
    for j in range(p["q2_grid"]):
        q2 = 2 * math.pi * j / p["q2_grid"]
        mj = MelnikovParams(p["delta"], p["omega2"], q2)
        rows.append((q2, melnikov_closed_form(mj), melnikov_quadrature(mj, p["window_mult"])))
    pend = PendulumParams(p["delta"])
    _, _, fit = energy_time_law(pend)
    q, qdot = separatrix(pend, 0.0)
    return Result(["q2", "closed_form", "quadrature"], rows, {
        "closed_form": cf, "quadrature": qd,
        "rel_err": abs(cf - qd) / abs(cf) if cf != 0 else abs(qd),
        "gap": 2 * abs(melnikov_closed_form(MelnikovParams(p["delta"], p["omega2"], 0.0))),
        "separatrix_q0": q, "separatrix_qdot0": qdot,
        "time_of_flight_e_sigma": time_of_flight(pend, p["delta"]),
        "energy_time_slope": fit.slope, "energy_time_intercept": fit.intercept,
        "energy_time_rel_residual": fit.relative_residual})


RUNNERS: dict = {"barrier": run_barrier, "orbit": run_orbit, "construct": run_construct,
                 "approx": run_approx, "herman": run_herman, "melnikov": run_melnikov}


# ---------------------------------------------------------------- sweep

def _parse_ranges(items) -> list:
    out = []
    for item in items:
        key, _, vals = str(item).partition("=")
        out.append((key.strip().replace("-", "_"), [v.strip() for v in vals.split(",") if v.strip()]))
    return out


def _sweep_point(args):
    idx, sub, params = args
    try:
        res = RUNNERS[sub](params)
        return idx, res, None
    except ValidationError as exc:
        return idx, None, "validation: " + str(exc)
    except SOLVER_ERRORS as exc:
        return idx, None, f"{type(exc).__name__}: {exc}"
    except ValueError as exc:
        return idx, None, f"{type(exc).__name__}: {exc}"


def fit_line(x, y, loglog: bool) -> dict:
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if loglog:
        x, y = np.log(x), np.log(np.abs(y))
    if x.size < 2:
        return {"slope": None, "intercept": None, "max_residual": None}
    A = np.vstack([x, np.ones_like(x)]).T
    (m, b), *_ = np.linalg.lstsq(A, y, rcond=None)
    return {"slope": float(m), "intercept": float(b), "max_residual": float(np.max(np.abs(y - m * x - b)))}


def run_sweep(p: dict):
    sub = p["run"]
    base = defaults(sub)
    for k in COMMON:
        base[k] = p[k]
    for item in p["set"]:
        key, _, val = str(item).partition("=")
        key = key.strip().replace("-", "_")
        base[key] = coerce(sub, key, val)
    ranges = _parse_ranges(p["over"])
    points = []
    for combo in itertools.product(*[vals for _, vals in ranges]):
        q = dict(base)
        for (key, _), val in zip(ranges, combo):
            q[key] = coerce(sub, key, val)
        q["workers"] = 1
        points.append(q)
    problems = []
    for q in points:
        problems.extend(validate(ExperimentConfig(sub, q)))
    # an invalid point is recorded, not fatal; only structural problems stop the sweep
    tasks = [(i, sub, q) for i, q in enumerate(points)]
    if p["workers"] > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(p["workers"]) as ex:
            results = list(ex.map(_sweep_point, tasks))
    else:
        results = [_sweep_point(t) for t in tasks]
    results.sort(key=lambda r: r[0])
    keys = [k for k, _ in ranges]
    lines, rows, columns = [], [], None
    for (idx, res, err), q in zip(results, points):
        swept = {k: q[k] for k in keys}
        lines.append({"index": idx, "params": swept, "ok": err is None,
                      "error": err, "summary": res.summary if res else None})
        if res is not None:
            if columns is None:
                columns = ["index"] + keys + res.columns
            for row in res.rows:
                rows.append((idx, *[swept[k] for k in keys], *row))
    summary = {"points": len(points), "failed": sum(1 for l in lines if not l["ok"])}
    if p["fit_x"] is not None:
        fits = {}
        for yk in p["fit_y"]:
            xs, ys = [], []
            for l in lines:
                if l["ok"] and yk in l["summary"] and l["summary"][yk] is not None:
                    xs.append(float(l["params"][p["fit_x"]]))
                    ys.append(float(l["summary"][yk]))
            fits[yk] = fit_line(xs, ys, p["loglog"])
        summary["fits"] = fits
    return Result(columns or ["index"] + keys, rows, summary), lines


# ---------------------------------------------------------------- output

def format_json(obj, indent: Optional[int] = 0) -> str:
    """JSON with floats at 17 significant digits; non-finite floats become strings.

    ``indent=None`` gives a single line (used for JSON lines).
    """
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return '"nan"'
        if math.isinf(v):
            return '"inf"' if v > 0 else '"-inf"'
        return "%.17g" % v
    if isinstance(obj, str):
        return json.dumps(obj)
    compact = indent is None
    nxt = None if compact else indent + 1
    pad = "" if compact else "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{json.dumps(str(k))}: {format_json(v, nxt)}" for k, v in obj.items()]
        if compact:
            return "{" + ", ".join(items) + "}"
        return "{\n" + ",\n".join(pad + "  " + i for i in items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        items = list(obj)
        if not items:
            return "[]"
        flat = all(not isinstance(i, (dict, list, tuple, np.ndarray)) for i in items)
        if compact or flat:
            return "[" + ", ".join(format_json(i, None) for i in items) + "]"
        return "[\n" + ",\n".join(pad + "  " + format_json(i, nxt) for i in items) + "\n" + pad + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _csv_cell(v):
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    return str(v)


def write_artifacts(out_dir: str, name: str, res: Result, cfg: ExperimentConfig,
                    lines: Optional[list] = None):
    os.makedirs(out_dir, exist_ok=True)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(res.columns)
    for row in res.rows:
        w.writerow([_csv_cell(v) for v in row])
    with open(os.path.join(out_dir, name + ".csv"), "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())
    doc = {"config": cfg.resolved(), "results": res.summary}
    with open(os.path.join(out_dir, name + ".json"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_json(doc) + "\n")
    if lines is not None:
        with open(os.path.join(out_dir, name + ".jsonl"), "w", encoding="utf-8", newline="\n") as fh:
            for l in lines:
                fh.write(format_json(l, None) + "\n")


def run(cfg: ExperimentConfig) -> int:
    """Validate, compute and write artifacts; returns the exit status."""
    problems = validate(cfg)
    if problems:
        for prob in problems:
            print(f"validation error: {prob}", file=sys.stderr)
        return EXIT_VALIDATION
    p = cfg.params
    lines = None
    try:
        if cfg.subcommand == "sweep":
            res, lines = run_sweep(p)
        else:
            res = RUNNERS[cfg.subcommand](dict(p))
    except ValidationError as exc:
        for prob in exc.problems:
            print(f"validation error: {prob}", file=sys.stderr)
        return EXIT_VALIDATION
    except (SupportTooWide,) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except SOLVER_ERRORS as exc:
        print(f"solver failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    try:
        write_artifacts(p["out"], p["name"] or cfg.subcommand, res, cfg, lines)
    except OSError as exc:
        print(f"I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


# ---------------------------------------------------------------- argv

def _add_params(sp: argparse.ArgumentParser, table: dict):
    for key, (typ, default, helptext) in table.items():
        flag = "--" + key.replace("_", "-")
        if typ is bool:
            sp.add_argument(flag, dest=key, nargs="?", const="true", default=None, help=helptext)
        elif typ is list:
            sp.add_argument(flag, dest=key, action="append", default=None, help=helptext)
        else:
            sp.add_argument(flag, dest=key, default=None, help=f"{helptext} (default: {default})")


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="conversekam", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=__version__)
    subs = ap.add_subparsers(dest="subcommand", required=True)
    for sub, table in PARAMS.items():
        sp = subs.add_parser(sub, help=f"{sub} experiment")
        sp.add_argument("--config", default=None, help="YAML or JSON config file")
        _add_params(sp, COMMON)
        _add_params(sp, table)
        if sub == "herman":
            for mode in ("toy", "smooth", "analytic"):
                sp.add_argument("--" + mode, dest="mode", action="store_const", const=mode,
                                help=f"shorthand for --mode {mode}")
    return ap


def main(argv=None) -> int:
    ap = make_parser()
    args = ap.parse_args(argv)
    sub = args.subcommand
    flags = {k: v for k, v in vars(args).items() if k not in ("subcommand", "config")}
    try:
        file_data = load_config_file(args.config) if args.config else {}
        if file_data.get("subcommand", sub) != sub:
            raise ValidationError([f"config is for '{file_data['subcommand']}', not '{sub}'"])
        cfg = build_config(sub, file_data, flags)
    except ValidationError as exc:
        for prob in exc.problems:
            print(f"validation error: {prob}", file=sys.stderr)
        return EXIT_VALIDATION
    except IOError as exc:
        print(f"I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
