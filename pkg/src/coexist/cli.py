"""``coexist`` command line: analyze, optimize, simulate, sweep, casestudy, replay."""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Optional, Sequence

import jsonschema
import numpy as np

from . import __version__
from .analytic import CHAIN_SOLVE, CLOSED_FORM, throughput_report
from .casestudy import (DeploymentInput, SweepRow, analytic_row, derive_deployment, robustness_lw,
                        robustness_nw, rows_to_csv, simulate_row)
from .model import ModelError, SystemConfig, q_from_rho
from .optimizer import OptimizationError, OptimizationSpec, closed_form_optimum, optimize
from .simulator import SimConfig, WifiLteConfig, run

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2
EXIT_DISAGREE = 3
EXIT_INFEASIBLE = 4

AGREE_TOL = 1e-9
SWEEP_SUCCESS_FRACTION = 0.9
SEED_ENV = "COEXIST_SEED"


class ConfigError(ValueError):
    pass


# --- schemas / json ----------------------------------------------------------------

def load_schema(name: str) -> dict:
    text = resources.files("coexist.schemas").joinpath(f"{name}.v1.json").read_text()
    return json.loads(text)


def validate(doc: Any, name: str) -> None:
    jsonschema.validate(doc, load_schema(name))


def clean(obj):
    """Make ``obj`` strict-JSON: numpy scalars to python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def dumps(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True)


# --- run context / manifest ---------------------------------------------------------

@dataclass
class Run:
    subcommand: str
    argv: list
    out: Optional[Path]
    config: dict = field(default_factory=dict)
    seeds: list = field(default_factory=list)
    outputs: list = field(default_factory=list)
    started: float = field(default_factory=time.perf_counter)

    def write(self, name: str, text: str) -> Path:
        assert self.out is not None
        self.out.mkdir(parents=True, exist_ok=True)
        path = self.out / name
        path.write_text(text)
        self.outputs.append(str(path))
        return path

    def manifest(self, exit_code: int) -> dict:
        return clean({"schema": "coexist.manifest/v1", "subcommand": self.subcommand,
                      "argv": self.argv, "config": self.config, "seeds": self.seeds,
                      "version": __version__, "outputs": self.outputs,
                      "wall_clock_s": time.perf_counter() - self.started, "exit_code": exit_code})

    def finish(self, exit_code: int) -> int:
        if self.out is not None:
            m = self.manifest(exit_code)
            validate(m, "manifest")
            self.out.mkdir(parents=True, exist_ok=True)
            (self.out / f"{self.subcommand}.manifest.json").write_text(dumps(m))
        return exit_code


def emit(run_: Run, doc: dict, schema: str) -> None:
    doc = clean(doc)
    validate(doc, schema)
    text = dumps(doc)
    print(text)
    if run_.out is not None:
        run_.write(f"{run_.subcommand}.json", text + "\n")


# --- config resolution ----------------------------------------------------------------

def read_config(path: Optional[str]) -> dict:
    if not path:
        return {}
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        validate(doc, "config")
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"invalid config {path}: {exc.message}") from exc
    return doc


def pick(flag, section: dict, key: str, default=None):
    if flag is not None:
        return flag
    return section.get(key, default)


def _prob(args, section, n, qname, rname, label):
    q = pick(getattr(args, qname), section, qname)
    rho = pick(getattr(args, rname), section, rname)
    if q is not None and rho is not None:
        raise ConfigError(f"both {qname} and {rname} given for {label}; pass one")
    if rho is not None:
        return q_from_rho(rho, n)
    if q is None:
        raise ConfigError(f"{label} needs {qname} or {rname}")
    return q


def resolve_system(args, cfg: dict) -> SystemConfig:
    sec = cfg.get("system", {})
    try:
        n_A = pick(args.nA, sec, "n_A")
        n_C = pick(args.nC, sec, "n_C")
        S = pick(args.S, sec, "S")
        l_C = pick(args.lC, sec, "l_C")
        missing = [k for k, v in (("nA", n_A), ("nC", n_C), ("S", S), ("lC", l_C)) if v is None]
        if missing:
            raise ConfigError("missing system parameters: " + ", ".join(missing))
        q_A = _prob(args, sec, n_A, "q_A", "rho_A", "Aloha")
        q_C = _prob(args, sec, n_C, "q_C", "rho_C", "CSMA")
        return SystemConfig(n_A, n_C, q_A, q_C, S, l_C)
    except ModelError as exc:
        raise ConfigError(str(exc)) from exc


def resolve_seed(args, cfg: dict) -> int:
    if args.seed is not None:
        return args.seed
    if "seed" in cfg.get("sim", {}):
        return cfg["sim"]["seed"]
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env!r}") from exc
    return 0


def parse_int_list(text: Optional[str]) -> Optional[list[int]]:
    if text is None:
        return None
    return [int(v) for v in parse_range(text)]


def parse_range(text: str) -> list[float]:
    """``"a,b,c"`` or ``"start:stop:step"`` (stop inclusive); empty string gives []."""
    text = text.strip()
    if not text:
        return []
    try:
        if ":" in text:
            start, stop, step = (float(t) for t in text.split(":"))
            if step <= 0:
                raise ConfigError("range step must be positive")
            n = int(math.floor((stop - start) / step + 1e-9)) + 1
            vals = [start + i * step for i in range(max(n, 0))]
        else:
            vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad range {text!r}") from exc
    return [int(v) if float(v).is_integer() else v for v in vals]


# --- analyze ---------------------------------------------------------------------------

def cmd_analyze(args, run_: Run) -> int:
    cfg = read_config(args.config)
    system = resolve_system(args, cfg)
    run_.config = {"system": system.to_dict()}
    closed = throughput_report(system, CLOSED_FORM)
    chain, err, diff = None, None, None
    try:
        chain = throughput_report(system, CHAIN_SOLVE)
        diff = max(abs(closed.lambda_A - chain.lambda_A), abs(closed.lambda_C - chain.lambda_C),
                   abs(closed.alpha_C - chain.alpha_C))
    except Exception as exc:  # state cap or singular chain: closed form still stands
        err = f"{type(exc).__name__}: {exc}"
    agree = diff is None or diff <= AGREE_TOL
    doc = {"schema": "coexist.analyze/v1", "system": system.to_dict(),
           "closed_form": closed.to_dict(), "chain_solve": chain.to_dict() if chain else None,
           "difference": diff, "agree": agree}
    if err:
        doc["chain_error"] = err
    emit(run_, doc, "analyze")
    if args.csv and run_.out is not None:
        rows = [SweepRow(0, r.lambda_A, r.lambda_C, r.lambda_total,
                         r.lambda_A / r.lambda_C if r.lambda_C > 0 else math.inf, r.provenance)
                for r in (closed, chain) if r is not None]
        run_.write("analyze.csv", rows_to_csv(rows))
    return EXIT_OK if agree else EXIT_DISAGREE


# --- optimize --------------------------------------------------------------------------

def verify_optimum(res, n_A, n_C, S) -> Optional[dict]:
    if not res.feasible or not (0 < res.rho_A_opt < 1 and 0 < res.rho_C_opt < 1):
        return None
    rep = throughput_report(SystemConfig.from_rho(n_A, n_C, res.rho_A_opt, res.rho_C_opt, S, res.l_C_opt))
    ratio = rep.lambda_A / rep.lambda_C if rep.lambda_C > 0 else math.inf
    return {"lambda_A": rep.lambda_A, "lambda_C": rep.lambda_C, "lambda_total": rep.lambda_total,
            "ratio": ratio, "ratio_error": abs(ratio - res.gamma)}


def cmd_optimize(args, run_: Run) -> int:
    sec = read_config(args.config).get("optimize", {})
    gamma = pick(args.gamma, sec, "gamma")
    if gamma is None:
        raise ConfigError("--gamma is required")
    form = pick(args.closed_form, sec, "closed_form")
    S = pick(args.S, sec, "S", 20 if form else None)
    n_A = pick(args.nA, sec, "n_A", 1)
    n_C = pick(args.nC, sec, "n_C", 20)
    cands = parse_int_list(args.lc_set) if args.lc_set is not None else sec.get("l_C_candidates")
    if S is None:
        raise ConfigError("--S is required")
    run_.config = {"optimize": {"gamma": gamma, "n_A": n_A, "n_C": n_C, "S": S,
                                "l_C_candidates": cands, "closed_form": form}}
    try:
        if form:
            res = closed_form_optimum(gamma, form, S)
            n_A = 1 if form == "nA1" else n_A
        else:
            res = optimize(OptimizationSpec(gamma=gamma, n_A=n_A, n_C=n_C, S=S, l_C_candidates=cands))
    except (ValueError, ModelError) as exc:
        raise ConfigError(str(exc)) from exc
    except OptimizationError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    # the n_A >> 1 forms describe the many-node limit; verify those numerically at the given n_A
    doc = {"schema": "coexist.optimize/v1", "result": res.to_dict(),
           "verification": verify_optimum(res, n_A, n_C, S)}
    emit(run_, doc, "optimize")
    return EXIT_OK if res.feasible else EXIT_INFEASIBLE


# --- simulate --------------------------------------------------------------------------

def resolve_wifi(args, cfg: dict) -> WifiLteConfig:
    sec = cfg.get("system", {})
    vals = {k: pick(getattr(args, a), sec, k) for a, k in
            (("nW", "n_W"), ("CW", "CW"), ("lW", "l_W"), ("qL", "q_L"))}
    missing = [k for k, v in vals.items() if v is None]
    if missing:
        raise ConfigError("wifi-lte mode needs " + ", ".join(missing))
    S = pick(args.S, sec, "S", 112)
    try:
        return WifiLteConfig(S=S, **vals)
    except ModelError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_simulate(args, run_: Run) -> int:
    cfg = read_config(args.config)
    sim = cfg.get("sim", {})
    mode = pick(args.mode, sim, "mode", "generic")
    system = resolve_wifi(args, cfg) if mode == "wifi-lte" else resolve_system(args, cfg)
    T = pick(args.T, sim, "T")
    if T is None:
        raise ConfigError("--T is required")
    seed = resolve_seed(args, cfg)
    try:
        sc = SimConfig(system, int(T), seed, mode, pick(args.trace, sim, "trace_cap", 0))
    except ModelError as exc:
        raise ConfigError(str(exc)) from exc
    run_.config = sc.to_dict()
    run_.seeds = [seed]
    res = run(sc)
    emit(run_, {"schema": "coexist.simulate/v1", "system": system.to_dict(), "result": res.to_dict()},
         "simulate")
    return EXIT_OK


# --- sweep -----------------------------------------------------------------------------

def _safe(task):
    fn, kw = task
    try:
        return fn(**kw), None
    except Exception as exc:
        return None, f"{type(exc).__name__}: {exc}"


def _row_lc(system: dict, value, against, T, seed):
    cfg = SystemConfig(**{**system, "l_C": int(value)})
    if against == "analytic":
        rep = throughput_report(cfg)
        return SweepRow(value, rep.lambda_A, rep.lambda_C, rep.lambda_total,
                        rep.lambda_A / rep.lambda_C if rep.lambda_C > 0 else math.inf, "analytic")
    res = run(SimConfig(cfg, T, seed))
    return SweepRow(value, res.lambda_A_hat, res.lambda_C_hat, res.lambda_total, res.ratio,
                    "simulation", seed)


def _row_rho_a(system: dict, value, against, T, seed):
    cfg = SystemConfig.from_rho(system["n_A"], system["n_C"], value, system["rho_C"], system["S"], system["l_C"])
    d = cfg.to_dict()
    row = _row_lc(d, d["l_C"], against, T, seed)
    row.parameter = value
    return row


def _row_gamma(n_A, n_C, S, cands, value, against, T, seed):
    res = optimize(OptimizationSpec(gamma=value, n_A=n_A, n_C=n_C, S=S, l_C_candidates=cands))
    if not res.feasible:
        raise OptimizationError(f"infeasible at gamma={value}")
    cfg = SystemConfig.from_rho(n_A, n_C, res.rho_A_opt, res.rho_C_opt, S, res.l_C_opt)
    row = _row_lc(cfg.to_dict(), res.l_C_opt, against, T, seed)
    row.parameter = value
    return row


def _row_case(inp: dict, axis, value, against, T, seed):
    dep = derive_deployment(DeploymentInput(**inp))
    kw = {"n_W": int(value)} if axis == "nW" else {"l_W": int(value)}
    if against == "analytic":
        return analytic_row(dep, value, **kw)
    return simulate_row(dep, value, T=T, seed=seed, **kw)


def run_rows(tasks: list, jobs: int) -> list:
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_safe, tasks))  # map keeps parameter order
    return [_safe(t) for t in tasks]


FIG7A_LC = (1, 5, 10, 15, 30)
FIG9A_LC = (40, 112, 224)


def _write_rows(run_: Run, name: str, results, params) -> tuple[list, list]:
    rows, errors = [], []
    for p, (row, err) in zip(params, results):
        if err is None:
            rows.append(row)
        else:
            rows.append(SweepRow(p, math.nan, math.nan, math.nan, math.nan, "error"))
            errors.append({"file": name, "parameter": p, "error": err})
    text = rows_to_csv(rows)
    if run_.out is not None:
        run_.write(name, text)
    else:
        sys.stdout.write(text)
    return rows, errors


def sweep_plan(args, cfg: dict) -> list[tuple[str, Callable, list, list]]:
    """(csv name, row function, kwargs template, parameter list) per output curve."""
    T = pick(args.T, cfg.get("sim", {}), "T", 10**6)
    seed = resolve_seed(args, cfg)
    against = args.against
    base = dict(against=against, T=T, seed=seed)
    if args.preset == "fig7a":
        rho = parse_range(args.range) if args.range is not None else [round(0.05 * i, 2) for i in range(1, 20)]
        plans = []
        for rho_C in (0.5, 1.0):
            for l_C in FIG7A_LC:
                sysd = {"n_A": 20, "n_C": 20, "S": 10, "l_C": l_C, "rho_C": rho_C}
                plans.append((f"fig7a_rhoC{rho_C:g}_lC{l_C}.csv", _row_rho_a, dict(system=sysd, **base), rho))
        return plans
    if args.preset == "fig9a":
        gam = parse_range(args.range) if args.range is not None else [0.1, 0.3, 1, 3, 10]
        n_W = args.nW or 20
        plans = [(f"fig9a_lC{l}.csv", _row_gamma,
                  dict(n_A=1, n_C=n_W, S=112, cands=[l], **base), gam) for l in FIG9A_LC]
        plans.append(("fig9a_lCopt.csv", _row_gamma, dict(n_A=1, n_C=n_W, S=112, cands=None, **base), gam))
        return plans
    if args.vary is None or args.range is None:
        raise ConfigError("sweep needs --preset or both --vary and --range")
    values = parse_range(args.range)
    if args.vary == "lC":
        system = resolve_system(args, cfg).to_dict()
        return [("sweep.csv", _row_lc, dict(system=system, **base), values)]
    if args.vary == "gamma":
        S = pick(args.S, cfg.get("optimize", {}), "S")
        if S is None:
            raise ConfigError("--S is required")
        return [("sweep.csv", _row_gamma, dict(n_A=args.nA or 1, n_C=args.nC or 20, S=S,
                                               cands=parse_int_list(args.lc_set), **base), values)]
    sec = cfg.get("casestudy", {})
    n_W = pick(args.nW, sec, "n_W")
    gamma = pick(args.gamma, sec, "gamma")
    if n_W is None or gamma is None:
        raise ConfigError(f"--vary {args.vary} needs --nW and --gamma")
    inp = {"n_W": n_W, "gamma": gamma, "S": pick(args.S, sec, "S", 112)}
    return [("sweep.csv", _row_case, dict(inp=inp, axis=args.vary, **base), values)]


def cmd_sweep(args, run_: Run) -> int:
    cfg = read_config(args.config)
    plans = sweep_plan(args, cfg)
    if args.against == "sim":
        run_.seeds = [resolve_seed(args, cfg)]
    run_.config = {"preset": args.preset, "vary": args.vary, "range": args.range, "against": args.against,
                   "curves": {name: {"params": params, **{k: v for k, v in kw.items()}}
                              for name, _, kw, params in plans}}
    total, errors, files = 0, [], []
    for name, fn, kw, params in plans:
        tasks = [(fn, dict(kw, value=p)) for p in params]
        results = run_rows(tasks, args.jobs)
        _, errs = _write_rows(run_, name, results, params)
        total += len(params)
        errors += errs
        files.append(name)
    summary = clean({"schema": "coexist.sweep/v1", "vary": args.vary or "", "against": args.against,
                     "rows": total, "failed": len(errors), "errors": errors, "files": files,
                     "figure": args.preset})
    validate(summary, "sweep")
    if run_.out is not None:
        run_.write("sweep.json", dumps(summary) + "\n")
        if args.preset:
            run_.write(f"{args.preset}.figure.json", dumps({"figure": args.preset, "files": files}) + "\n")
    for e in errors:
        print(f"row failed: {e}", file=sys.stderr)
    ok = total == 0 or (total - len(errors)) / total >= SWEEP_SUCCESS_FRACTION
    return EXIT_OK if ok else EXIT_FAIL


# --- casestudy -------------------------------------------------------------------------

def cmd_casestudy(args, run_: Run) -> int:
    cfg = read_config(args.config)
    sec = cfg.get("casestudy", {})
    n_W = pick(args.nW, sec, "n_W")
    gamma = pick(args.gamma, sec, "gamma")
    if n_W is None or gamma is None:
        raise ConfigError("--nW and --gamma are required")
    try:
        inp = DeploymentInput(n_W, gamma, pick(args.S, sec, "S", 112), sec.get("l_W_max"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    T = pick(args.T, sec, "T", 10**7)
    seed = resolve_seed(args, cfg)
    robust = pick(args.robust, sec, "robust")
    run_.config = {"casestudy": {"n_W": n_W, "gamma": gamma, "S": inp.S, "l_W_max": inp.l_W_max,
                                 "robust": robust, "T": T}}
    run_.seeds = [seed]
    try:
        dep = derive_deployment(inp)
    except OptimizationError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    simulated = None if args.no_sim else run(SimConfig(dep.wifi_lte(), T, seed)).to_dict()
    rows = []
    if robust == "lw":
        vals = parse_range(args.range) if args.range else \
            sorted({max(7, dep.l_W_opt - 8), dep.l_W_opt - 4, dep.l_W_opt, *range(dep.l_W_opt + 2, dep.S + 1, 2)})
        rows = robustness_lw(dep, [int(v) for v in vals if v <= dep.S], T=T, seed=seed)
    elif robust == "nw":
        vals = parse_range(args.range) if args.range else list(range(10, 41, 5))
        rows = robustness_nw(dep, [int(v) for v in vals], T=T, seed=seed)
    doc = {"schema": "coexist.casestudy/v1", "deployment": dep.to_dict(), "simulated": simulated,
           "robust": robust, "rows": len(rows)}
    emit(run_, doc, "casestudy")
    if robust:
        text = rows_to_csv(rows)
        if run_.out is not None:
            run_.write(f"robust_{robust}.csv", text)
        else:
            sys.stderr.write(text)
    return EXIT_OK


# --- replay ----------------------------------------------------------------------------

def cmd_replay(args, run_: Run) -> int:
    m = json.loads(Path(args.manifest).read_text())
    validate(m, "manifest")
    argv = list(m["argv"])
    if args.out is not None:
        argv = _replace_out(argv, args.out)
    return main(argv)


def _replace_out(argv: list, out: str) -> list:
    res, skip = [], False
    for a in argv:
        if skip:
            skip = False
            continue
        if a == "--out":
            skip = True
            continue
        if a.startswith("--out="):
            continue
        res.append(a)
    return res + ["--out", out]


# --- parser ----------------------------------------------------------------------------

def _system_flags(p):
    g = p.add_argument_group("system")
    g.add_argument("--nA", type=int)
    g.add_argument("--nC", type=int)
    g.add_argument("--S", type=int)
    g.add_argument("--lC", type=int)
    g.add_argument("--qA", dest="q_A", type=float)
    g.add_argument("--qC", dest="q_C", type=float)
    g.add_argument("--rhoA", dest="rho_A", type=float)
    g.add_argument("--rhoC", dest="rho_C", type=float)


def _common(p):
    p.add_argument("--config", help="JSON config file with system/sim/optimize/casestudy sections")
    p.add_argument("--out", help="directory for JSON/CSV outputs and the run manifest")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="coexist", description="Aloha/CSMA coexistence model toolkit")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("analyze", help="closed-form and chain-solve throughputs")
    _common(p)
    _system_flags(p)
    p.add_argument("--csv", action="store_true", help="also write analyze.csv to --out")

    p = sub.add_parser("optimize", help="maximize total throughput at a throughput ratio")
    _common(p)
    p.add_argument("--gamma", type=float)
    p.add_argument("--nA", type=int)
    p.add_argument("--nC", type=int)
    p.add_argument("--S", type=int)
    p.add_argument("--lc-set", dest="lc_set", help="candidate l_C values, e.g. 10,20,30 or 1:60:1")
    p.add_argument("--closed-form", dest="closed_form", choices=("nA1", "nAlarge"))

    p = sub.add_parser("simulate", help="mini-slot simulation")
    _common(p)
    _system_flags(p)
    p.add_argument("--mode", choices=("generic", "wifi-lte"))
    p.add_argument("--T", type=int, help="duration in mini-slots")
    p.add_argument("--seed", type=int)
    p.add_argument("--trace", type=int, help="keep the first N transmissions in the output")
    p.add_argument("--nW", type=int)
    p.add_argument("--CW", type=int)
    p.add_argument("--lW", type=int)
    p.add_argument("--qL", type=float)

    p = sub.add_parser("sweep", help="one-axis parameter sweep to CSV")
    _common(p)
    _system_flags(p)
    p.add_argument("--vary", choices=("lC", "gamma", "nW", "lW"))
    p.add_argument("--range", help="comma list or start:stop:step (inclusive)")
    p.add_argument("--against", choices=("analytic", "sim"), default="analytic")
    p.add_argument("--preset", choices=("fig7a", "fig9a"))
    p.add_argument("--gamma", type=float)
    p.add_argument("--nW", type=int)
    p.add_argument("--lc-set", dest="lc_set")
    p.add_argument("--T", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("casestudy", help="LTE-U/WiFi deployment parameters and robustness tables")
    _common(p)
    p.add_argument("--nW", type=int)
    p.add_argument("--gamma", type=float)
    p.add_argument("--S", type=int)
    p.add_argument("--robust", choices=("lw", "nw"))
    p.add_argument("--range")
    p.add_argument("--T", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--no-sim", dest="no_sim", action="store_true")

    p = sub.add_parser("replay", help="rerun the command recorded in a manifest")
    p.add_argument("manifest")
    p.add_argument("--out")
    return ap


COMMANDS = {"analyze": cmd_analyze, "optimize": cmd_optimize, "simulate": cmd_simulate,
            "sweep": cmd_sweep, "casestudy": cmd_casestudy, "replay": cmd_replay}


def _recorded_argv(argv: list, args, run_: Run) -> list:
    # pin the seed so the manifest replays identically whatever the environment says
    if run_.seeds and getattr(args, "seed", None) is None:
        return argv + ["--seed", str(run_.seeds[0])]
    return argv


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    out = Path(args.out) if getattr(args, "out", None) else None
    if args.cmd == "simulate" and out is None:
        out = Path(".")  # simulation runs always leave a manifest
    run_ = Run(args.cmd, argv, None if args.cmd == "replay" else out)
    try:
        code = COMMANDS[args.cmd](args, run_)
    except (ConfigError, ModelError, jsonschema.ValidationError) as exc:
        print(f"error: {getattr(exc, 'message', exc)}", file=sys.stderr)
        code = EXIT_CONFIG
    if args.cmd == "replay":
        return code
    run_.argv = _recorded_argv(argv, args, run_)
    return run_.finish(code)


if __name__ == "__main__":
    sys.exit(main())
