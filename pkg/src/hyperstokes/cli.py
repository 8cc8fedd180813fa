"""Command line driver: configuration, orchestration and reports.

Configuration is a flat ``key = value`` file.  Values are overridden by
``HYPERSTOKES_<KEY>`` environment variables and then by command line flags.
Radii are geodesic.  Exit codes: 0 all checks passed, 1 a numerical check
failed (the report is still written), 2 configuration or solver error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from .calculus import curl_inner, norms
from .divsolve import CompatibilityError
from .fields import FieldError, HarmonicSpec, harmonic_pair
from .hypgeom import DomainSpec, GeometryError
from .mesh import GridError, build_annulus_grid, dump_csv
from .modal import SolverError
from .navierstokes import (ExhaustionSchedule, SmallnessError, SolverOptions,
                           assemble_psi_phi, check_apriori_bound, check_energy_identity,
                           estimate_constants, exhaust_domains, ingredients, solve_ns_annulus)
from .stokes import (assemble_solution, full_pressure, solve_stokes, stokes_rhs,
                     weak_residual)
from .verify import inequality_suite, nontriviality, nonzero_solution, potential_flow_test

SCHEMA = 1
ENV_PREFIX = "HYPERSTOKES_"

DEFAULTS = {
    "a": 1.0,
    "R0": 1.0,
    "n": 1,
    "c": 1.0,
    "phase": 0.0,
    "N_r": 128,
    "N_th": 128,
    "R_max": 12.0,
    "profile": "exponential",
    "seed": 0,
    "samples": 100,
    "dF_fraction": 0.05,
    "schedule": "",
    "density": 8,
    "schedule_N_th": 64,
    "lambda_schedule": "0.25,0.5,0.75,1.0",
    "picard_tol": 1e-10,
    "picard_max_iters": 50,
    "damping": 1.0,
    "residual_tol": 1e-8,
    "gap_tol": 0.005,
}

TYPES = {k: type(v) for k, v in DEFAULTS.items()}


class ConfigError(ValueError):
    pass


CONFIG_ERRORS = (ConfigError, GeometryError, GridError, FieldError, CompatibilityError,
                 SmallnessError, SolverError, ValueError)


# ---------------------------------------------------------------------------
# configuration

def parse_config_text(text: str) -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        out[key] = val
    return out


def _coerce(key, val):
    if key not in TYPES:
        raise ConfigError(f"unknown configuration key {key!r}")
    t = TYPES[key]
    try:
        if t is int:
            f = float(val)
            if f != int(f):
                raise ValueError
            return int(f)
        return t(val)
    except (TypeError, ValueError):
        raise ConfigError(f"{key} = {val!r} is not a valid {t.__name__}") from None


def load_config(path=None, overrides=None, environ=None) -> dict:
    cfg = dict(DEFAULTS)
    raw = {}
    if path is not None:
        raw.update(parse_config_text(Path(path).read_text()))
    env = os.environ if environ is None else environ
    for k in DEFAULTS:
        if ENV_PREFIX + k in env:
            raw[k] = env[ENV_PREFIX + k]
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    for k, v in raw.items():
        cfg[k] = _coerce(k, v)
    validate_config(cfg)
    return cfg


def _floats(s):
    return tuple(float(x) for x in str(s).split(",") if x.strip())


def validate_config(cfg):
    """Fail fast on anything a solver would reject later."""
    spec = DomainSpec(cfg["a"], cfg["R0"])
    HarmonicSpec(cfg["n"], cfg["c"], cfg["phase"])
    if cfg["R_max"] < 4 * spec.R0:
        raise ConfigError(
            f"R_max = {cfg['R_max']:g} < 4 R0 = {4 * spec.R0:g}: the cutoff support "
            "[cutoff-support] does not fit inside the computational annulus")
    build_annulus_grid(spec, spec.R0, cfg["R_max"], cfg["N_r"], cfg["N_th"])
    SolverOptions(_floats(cfg["lambda_schedule"]), cfg["picard_tol"],
                  cfg["picard_max_iters"], cfg["damping"])
    if cfg["schedule"]:
        ExhaustionSchedule(_floats(cfg["schedule"]), cfg["density"],
                           cfg["schedule_N_th"]).validate(spec)
    if cfg["samples"] < 1:
        raise ConfigError("samples must be positive")
    if not (0 < cfg["dF_fraction"]):
        raise ConfigError("dF_fraction must be positive")


# ---------------------------------------------------------------------------
# reports

def _num(x):
    if isinstance(x, (np.floating, np.integer)):
        x = x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return repr(x)
    return x


def _jsonable(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: _jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    return _num(obj)


class Report:
    def __init__(self, mode, cfg):
        self.data = {"schema": SCHEMA, "mode": mode, "config": dict(cfg),
                     "scalars": {}, "checks": {}}

    def scalar(self, name, value, anchor):
        self.data["scalars"][name] = {"value": _num(value), "anchor": anchor}

    def check(self, name, value, limit, passed, anchor):
        self.data["checks"][name] = {"value": _num(value), "limit": _num(limit),
                                     "passed": bool(passed), "anchor": anchor}

    def extra(self, name, obj):
        self.data[name] = _jsonable(obj)

    @property
    def passed(self):
        return all(c["passed"] for c in self.data["checks"].values())

    def dumps(self):
        return json.dumps(self.data, indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# pipelines

def _setup(cfg):
    spec = DomainSpec(cfg["a"], cfg["R0"])
    grid = build_annulus_grid(spec, spec.R0, cfg["R_max"], cfg["N_r"], cfg["N_th"])
    harm = HarmonicSpec(cfg["n"], cfg["c"], cfg["phase"])
    return spec, grid, harm


def stokes_pipeline(cfg, rep: Report):
    spec, g, harm = _setup(cfg)
    F, dF, eta, w = ingredients(spec, harm, g, cfg["profile"])
    T = stokes_rhs(eta, dF, w, g)
    wt, P, srep = solve_stokes(g, T)
    u = assemble_solution(eta, dF, w, wt)
    p = full_pressure(P, F)
    res = weak_residual(u, p) / srep.T_dual
    nu = norms(u)
    rep.scalar("T_dual", srep.T_dual, "forcing")
    rep.scalar("u_H1", nu["H1_full"], "solution-norm")
    rep.scalar("u_L2", nu["L2"], "solution-norm")
    rep.scalar("du_L2", math.sqrt(curl_inner(u, u)), "vorticity")
    rep.check("stokes_residual", res, cfg["residual_tol"], res <= cfg["residual_tol"],
              "weak-stokes-system")
    rep.check("divergence_w_tilde", srep.divergence_max, 1e-8, srep.divergence_max <= 1e-8,
              "divergence-constraint")
    inner = u.boundary_max("inner")
    rep.check("inner_trace", inner, 1e-13, inner <= 1e-13, "obstacle-boundary-condition")
    nt = nontriviality(w, dF, eta, u, g, harm)
    rep.scalar("pairing", nt.pairing, "pairing-identity")
    rep.scalar("eta_energy", nt.eta_energy, "pairing-identity")
    rep.check("pairing_negative", nt.pairing, 0.0, nt.pairing < 0, "pairing-sign")
    rep.check("pairing_gap", nt.relative_gap, cfg["gap_tol"],
              nt.relative_gap <= cfg["gap_tol"], "pairing-identity")
    return {"spec": spec, "grid": g, "harmonic": harm, "F": F, "dF": dF, "eta": eta,
            "w": w, "w_tilde": wt, "P": P, "p": p, "u": u}


def _dump_fields(out, fields):
    if out is None:
        return
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    for name, f in fields.items():
        with open(out / f"{name}.csv", "w", newline="\n") as fh:
            dump_csv(f, fh)


def run_stokes(cfg, rep, out=None):
    st = stokes_pipeline(cfg, rep)
    _dump_fields(out, {k: st[k] for k in ("u", "w", "w_tilde", "P", "p")})
    return st


def run_verify(cfg, rep, out=None):
    st = run_stokes(cfg, rep, out)
    g = st["grid"]
    nz = nonzero_solution(st["u"], st["dF"], st["w"], st["w_tilde"], st["eta"])
    rep.extra("nonzero", nz)
    rep.check("nonzero_solution", nz.h1_norm, 0.0, nz.ok, "nonzero-solution")
    pf = potential_flow_test(st["u"], g)
    rep.extra("potential_flow", {"vorticity_l2": pf.vorticity_l2,
                                 "vorticity_ratio": pf.vorticity_ratio,
                                 "best_potential_residual": pf.best_potential_residual})
    rep.check("vorticity_ratio", pf.vorticity_ratio, 1e-3, pf.vorticity_ratio >= 1e-3,
              "non-potential-flow")
    rep.check("potential_residual", pf.best_potential_residual, 0.05,
              pf.best_potential_residual >= 0.05, "non-potential-flow")
    iq = inequality_suite(g, cfg["seed"], cfg["samples"])
    rep.extra("inequalities", iq)
    rep.check("poincare", iq.poincare_pass, iq.count, iq.poincare_pass == iq.count,
              "poincare-inequality")
    rep.check("ladyzhenskaya", iq.ladyzhenskaya_max, "finite", iq.ladyzhenskaya_finite,
              "ladyzhenskaya-inequality")
    return st


def run_ns(cfg, rep, out=None, allow_large=False):
    spec, g, harm = _setup(cfg)
    opts = SolverOptions(_floats(cfg["lambda_schedule"]), cfg["picard_tol"],
                         cfg["picard_max_iters"], cfg["damping"],
                         allow_large_data=allow_large)
    C = estimate_constants(g, cfg["samples"], cfg["seed"], spec, harm)
    rep.extra("constants", C)
    if cfg["dF_fraction"] > 0 and "c" not in cfg.get("_explicit", ()):
        c = cfg["dF_fraction"] * C.dF_threshold / math.sqrt(math.pi * harm.n)
        harm = HarmonicSpec(harm.n, c, harm.phase)
    rep.scalar("c", harm.c, "data-scale")
    rep.scalar("dF_norm", harm.dF_norm(), "smallness-condition")
    rep.scalar("dF_threshold", C.dF_threshold, "smallness-condition")
    F, dF, eta, w = ingredients(spec, harm, g, cfg["profile"])
    Psi, Phi = assemble_psi_phi(eta, dF, w, g)
    wR, P, tr = solve_ns_annulus(g, Psi, Phi, opts, harm.dF_norm(), C)
    rep.extra("picard", {"increments": {str(k): v for k, v in tr.increments.items()},
                         "iterations": {str(k): v for k, v in tr.iterations.items()},
                         "contraction": {str(k): v for k, v in tr.contraction.items()}})
    rep.check("picard_iterations", tr.total_iterations, cfg["picard_max_iters"],
              tr.total_iterations <= cfg["picard_max_iters"], "picard-convergence")
    en = check_energy_identity(wR, Psi, Phi)
    rep.extra("energy_identity", en)
    rep.check("energy_identity", en.residual, 1e-8, en.residual <= 1e-8, "energy-identity")
    canc = max(abs(en.b_psi_w_w), abs(en.b_w_w_w)) / max(en.energy, 1e-300)
    rep.check("trilinear_cancellation", canc, 1e-10, canc <= 1e-10, "trilinear-cancellation")
    ap = check_apriori_bound(wR, harm.dF_norm(), C)
    rep.extra("apriori", ap)
    rep.check("apriori_bound", ap.lhs, ap.rhs, ap.satisfied, "a-priori-bound")
    u = Psi + wR
    res = weak_residual(u, P, "navier_stokes") / max(Phi.dual_norm(), 1e-300)
    rep.check("ns_residual", res, cfg["residual_tol"], res <= cfg["residual_tol"],
              "weak-navier-stokes-system")
    _dump_fields(out, {"u": u, "w_R": wR, "P": P})
    if cfg["schedule"]:
        sch = ExhaustionSchedule(_floats(cfg["schedule"]), cfg["density"], cfg["schedule_N_th"])
        ex = exhaust_domains(spec, sch, harm, opts, samples=max(cfg["samples"] // 5, 1),
                             seed=cfg["seed"])
        rep.extra("exhaustion", {"deltas": ex.deltas, "glue_gaps": ex.glue_gaps,
                                 "iterations": [s.trace.total_iterations for s in ex.stages]})
        dec = all(b < a for a, b in zip(ex.deltas, ex.deltas[1:]))
        rep.check("cauchy_decreasing", ex.deltas, "decreasing", dec, "domain-exhaustion")
        gap = max(ex.glue_gaps)
        rep.check("glue_gap", gap, 1e-8, gap <= 1e-8, "pressure-gluing")
    return wR


SWEEP_PARAMS = ("grid", "R_max", "c", "n")


def run_sweep(cfg, rep, parameter, values):
    if parameter not in SWEEP_PARAMS:
        raise ConfigError(f"sweep parameter must be one of {SWEEP_PARAMS}")
    if not values:
        raise ConfigError("sweep needs at least one value")
    rows = []
    for v in values:
        c = dict(cfg)
        if parameter == "grid":
            c["N_r"] = c["N_th"] = int(v)
        elif parameter == "n":
            c["n"] = int(v)
        else:
            c[parameter] = float(v)
        sub = Report("stokes", c)
        row = {"value": v}
        try:
            validate_config(c)
            run_stokes(c, sub)
            row.update({k: s["value"] for k, s in sub.data["scalars"].items()})
            row["pairing_gap"] = sub.data["checks"]["pairing_gap"]["value"]
            row["passed"] = sub.passed
        except CONFIG_ERRORS as exc:
            row.update({"passed": False, "error": str(exc)})
        rows.append(row)
    ok = [r for r in rows if "error" not in r]
    orders = []
    for r0, r1 in zip(ok, ok[1:]):
        if parameter == "grid" and r0["pairing_gap"] > 0 and r1["pairing_gap"] > 0:
            ratio = float(r1["value"]) / float(r0["value"])
            orders.append(math.log(r0["pairing_gap"] / r1["pairing_gap"]) / math.log(ratio))
    changes = {}
    if len(ok) >= 2:
        for k in ("pairing", "u_H1", "du_L2"):
            a, b = ok[-2][k], ok[-1][k]
            changes[k] = abs(b - a) / abs(b)
    rep.extra("rows", rows)
    rep.extra("orders", orders)
    rep.extra("relative_changes", changes)
    rep.check("rows_passed", sum(r["passed"] for r in rows), len(rows),
              all(r["passed"] for r in rows), "sweep")
    if parameter == "grid" and orders:
        rep.check("pairing_gap_order", min(orders), 1.0, min(orders) >= 1.0, "pairing-identity")
    if parameter == "R_max" and changes:
        m = max(changes.values())
        rep.check("truncation_sensitivity", m, 0.01, m <= 0.01, "truncation")


# ---------------------------------------------------------------------------
# entry point

def build_parser():
    p = argparse.ArgumentParser(prog="hyperstokes", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("solve-stokes", "solve-ns", "verify", "sweep"):
        s = sub.add_parser(name)
        s.add_argument("--config", type=Path)
        s.add_argument("--out", type=Path)
        s.add_argument("--seed", type=int)
        s.add_argument("--reproducible", action="store_true",
                       help="omit timings so identical inputs give identical reports")
        s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one configuration value")
        if name == "solve-ns":
            s.add_argument("--unsafe-allow-large-data", action="store_true")
        if name == "sweep":
            s.add_argument("--parameter", required=True, choices=SWEEP_PARAMS)
            s.add_argument("--values", required=True,
                           help="comma separated list of parameter values")
    return p


def run(argv=None, stdout=None) -> int:
    stdout = stdout or sys.stdout
    args = build_parser().parse_args(argv)
    t0 = time.perf_counter()
    try:
        overrides = dict(parse_config_text("\n".join(args.set)))
        if args.seed is not None:
            overrides["seed"] = args.seed
        cfg = load_config(args.config, overrides)
        explicit = set(overrides)
        if args.config is not None:
            explicit |= set(parse_config_text(Path(args.config).read_text()))
        explicit |= {k for k in DEFAULTS if ENV_PREFIX + k in os.environ}
        mode = args.command
        rep = Report(mode, cfg)
        if mode == "solve-stokes":
            run_stokes(cfg, rep, args.out)
        elif mode == "verify":
            run_verify(cfg, rep, args.out)
        elif mode == "solve-ns":
            cfg = dict(cfg, _explicit=tuple(sorted(explicit)))
            run_ns(cfg, rep, args.out, args.unsafe_allow_large_data)
        else:
            vals = [v.strip() for v in args.values.split(",") if v.strip()]
            run_sweep(cfg, rep, args.parameter, vals)
    except SmallnessError as exc:
        print(f"error [smallness-condition]: {exc}", file=sys.stderr)
        return 2
    except CONFIG_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if not args.reproducible:
        rep.data["elapsed_seconds"] = time.perf_counter() - t0
    text = rep.dumps()
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "report.json").write_text(text)
    stdout.write(text)
    for name, c in rep.data["checks"].items():
        if not c["passed"]:
            print(f"check failed [{c['anchor']}]: {name} = {c['value']} (limit {c['limit']})",
                  file=sys.stderr)
    return 0 if rep.passed else 1


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
