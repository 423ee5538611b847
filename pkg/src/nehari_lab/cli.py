"""Command-line front end: ``nehari-lab {verify,fiber,extremal,solve,sweep}``.

Exit codes: 0 success, 1 a verification suite failed, 2 invalid
configuration or flags, 3 pair outside the coupling cone, 4 extremal
estimation failed, 5 solver failed.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import config as cfgmod
from . import extremal as ex
from . import fibering as fb
from . import io
from . import solver as sv
from .energy import Branch
from .exceptions import (BranchFailureError, ConfigError, DegenerateInputError, DomainError,
                         NoProjectionError, SamplerError)
from .fields import FieldPair, coefficients_of, gaussian_pair
from .verify import run_all

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_CONE, EXIT_EXTREMAL, EXIT_SOLVER = 0, 1, 2, 3, 4, 5
THREADS_ENV = "NEHARI_LAB_THREADS"
BRANCHES = {"plus": Branch.PLUS, "minus": Branch.MINUS}

log = logging.getLogger("nehari_lab")


class CommandError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nehari-lab", description=__doc__.splitlines()[0])
    ap.add_argument("verb", choices=("verify", "fiber", "extremal", "solve", "sweep"))
    ap.add_argument("--config", type=Path, help="INI experiment config (defaults if omitted)")
    ap.add_argument("--seed", type=int, help="override [run] seed")
    ap.add_argument("--out", type=Path, help="override [run] out directory")
    ap.add_argument("--lambda", dest="lam", type=float, help="override the lambda of the verb")
    ap.add_argument("--branch", choices=tuple(BRANCHES), help="solve one branch only")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def load_config(args) -> cfgmod.ExperimentConfig:
    cfg = cfgmod.load(args.config) if args.config else cfgmod.parse("")
    if args.seed is not None:
        cfg = cfg.with_value("run", "seed", args.seed)
    if args.out is not None:
        cfg = cfg.with_value("run", "out", str(args.out))
    if args.lam is not None:
        if not args.lam > 0:
            raise ConfigError(f"assumption (P) requires lambda > 0, got {args.lam}")
        cfg = cfg.with_value("solve", "lambda", args.lam)
        cfg = cfg.with_value("fiber", "lambda", args.lam)
    return cfg


def thread_cap() -> int | None:
    raw = os.environ.get(THREADS_ENV)
    if raw is None or raw == "":
        return None
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return n


def _stamp(cfg, payload: dict) -> dict:
    return {**payload, "config_hash": cfgmod.config_hash(cfg), "seed": cfg.seed}


def _out_dir(cfg) -> Path:
    out = Path(cfg["run"]["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


# --- verbs ---------------------------------------------------------------------

def cmd_verify(cfg) -> int:
    results = run_all(cfg.problem(cfg["fiber"]["lambda"]), cfg.seed)
    width = max(len(r.name) for r in results)
    print(f"{'suite':<{width}}  {'worst':>10}  {'tol':>8}  status")
    for r in results:
        print(f"{r.name:<{width}}  {r.worst:10.3e}  {r.tol:8.1e}  {'pass' if r.passed else 'FAIL'}")
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} suites passed")
    return EXIT_OK if failed == 0 else EXIT_VERIFY


def fiber_coefficients(cfg) -> fb.FiberingCoefficients:
    F = cfg["fiber"]
    params = cfg.problem(F["lambda"])
    if F["source"] == "coefficients":
        co = fb.FiberingCoefficients(F["a"], F["b"], F["c"], F["d"], cfg.exponents())
    else:
        if F["source"] == "gaussian":
            pair = gaussian_pair(params.grid, F["offset"], F["width"], F["ratio"])
        else:
            u, gu = io.read_field(F["u_path"])
            v, gv = io.read_field(F["v_path"])
            if gu != gv or gu != params.grid:
                raise ConfigError("field files must share the configured grid")
            pair = FieldPair(u, v, gu)
        try:
            co = coefficients_of(pair, params)
        except DegenerateInputError as exc:
            raise CommandError(f"{exc}: outside the cone A", EXIT_CONE) from None
    if not co.in_cone:
        raise CommandError("pair has zero coupling integral: outside the cone A", EXIT_CONE)
    return co


def fiber_table(co: fb.FiberingCoefficients, lam: float, points: int):
    t_n, t_e = fb.find_t_n(co), fb.find_t_e(co)
    markers = {"t_max": t_n, "t_e": t_e}
    try:
        cp = fb.solve_projections(co, lam)
        markers["t_plus"], markers["t_minus"] = cp.t_plus, cp.t_minus
    except NoProjectionError:
        pass
    lo, hi = min(markers.values()) / 10, max(markers.values()) * 10
    ts = {float(t): "" for t in np.geomspace(lo, hi, points)}
    for name, t in markers.items():
        ts[t] = name if t not in ts or not ts[t] else f"{ts[t]}+{name}"
    rows = [(t, fb.q_n(co, t), fb.q_e(co, t), fb.dq_e(co, t), ts[t]) for t in sorted(ts)]
    return rows, markers


def cmd_fiber(cfg) -> int:
    F = cfg["fiber"]
    co = fiber_coefficients(cfg)
    rows, markers = fiber_table(co, F["lambda"], F["points"])
    out = _out_dir(cfg)
    io.write_csv(out / "fiber.csv", ("t", "Q_n", "Q_e", "dQ_e_dt", "marker"), rows)
    summary = {"lambda": F["lambda"], "markers": markers, "Lambda_n": fb.lambda_n_value(co),
               "Lambda_e": fb.lambda_e_value(co),
               "coefficients": {"a": co.a, "b": co.b, "c": co.c, "d": co.d}}
    io.write_json(out / "fiber.json", _stamp(cfg, summary))
    order = sorted(markers, key=markers.get)
    print("markers: " + " < ".join(f"{k}={markers[k]:.6g}" for k in order))
    return EXIT_OK


def run_extremal(cfg):
    params = cfg.problem()
    sampler, settings = cfg.sampler(), cfg.search()
    try:
        est_n = ex.estimate_lambda_star(params, sampler, settings)
        est_e = ex.estimate_lambda_lower_star(params, sampler, settings)
    except (SamplerError, DegenerateInputError, NoProjectionError) as exc:
        raise CommandError(f"extremal estimation failed: {exc}", EXIT_EXTREMAL) from None
    if not 0 < est_e.value < est_n.value:
        raise CommandError(
            f"extremal invariant 0 < lambda_* < lambda^* violated: "
            f"{est_e.value} vs {est_n.value}", EXIT_EXTREMAL)
    return est_n, est_e


def cmd_extremal(cfg) -> int:
    est_n, est_e = run_extremal(cfg)
    out = _out_dir(cfg)
    io.write_csv(out / "extremal_starts.csv", ("start_id", "functional", "lambda_value", "iterations"),
                 [tuple(r.values()) for r in est_n.rows() + est_e.rows()])
    summary = ex.summary(est_n, est_e, cfg.seed)
    summary["el_residual"] = ex.el_residual(cfg.problem(), est_n.argmin_pair, est_n.value)
    io.write_json(out / "extremal.json", _stamp(cfg, summary))
    print(f"lambda_star_hat = {est_n.value:.10g}  lambda_lower_star_hat = {est_e.value:.10g}")
    return EXIT_OK


def _solve_one(cfg, lam, branch, est_n, est_e):
    params = cfg.problem(lam)
    sc = cfg.solve_config(lam, branch, est_n.value, est_e.value)
    try:
        return sv.minimize_branch(params, sc)
    except (BranchFailureError, DomainError, NoProjectionError) as exc:
        raise CommandError(f"solver failed on {branch.value}: {exc}", EXIT_SOLVER) from None


def cmd_solve(cfg, branch: str | None = None) -> int:
    est_n, est_e = run_extremal(cfg)
    S = cfg["solve"]
    lam = S["lambda"] if S["lambda"] is not None else S["lambda_fraction"] * est_n.value
    branches = [BRANCHES[branch]] if branch else [Branch.PLUS, Branch.MINUS]
    out = _out_dir(cfg)
    for br in branches:
        rep = _solve_one(cfg, lam, br, est_n, est_e)
        payload = {**rep.summary(), "lambda_star_hat": est_n.value,
                   "lambda_lower_star_hat": est_e.value, "t_history": rep.t_history,
                   "stationarity_residual": fb.stationarity_coupling_residual(
                       _tn_projected(cfg.problem(lam), rep.pair), "n")}
        stem = f"solve_{br.value}"
        io.write_json(out / f"{stem}.json", _stamp(cfg, payload))
        io.write_pair(out, rep.pair, stem)
        print(f"{br.value}: lambda={lam:.10g} energy={rep.energy:.10g} "
              f"grad_norm={rep.grad_norm:.3e} class={rep.nehari_class.tag}")
    return EXIT_OK


def _tn_projected(params, pair):
    co = coefficients_of(pair, params)
    return co.at(fb.find_t_n(co))


def cmd_sweep(cfg) -> int:
    est_n, est_e = run_extremal(cfg)
    W = cfg["sweep"]
    lambdas = np.linspace(W["fraction_min"], W["fraction_max"], W["points"]) * est_n.value
    base = cfg.solve_config(float(lambdas[0]), Branch.MINUS, est_n.value, est_e.value)
    rows = sv.lambda_sweep(cfg.problem(float(lambdas[0])), lambdas, base)
    out = _out_dir(cfg)
    io.write_csv(out / "sweep.csv", sv.SWEEP_COLUMNS, rows)
    energies = [r.energy for r in rows]
    crossing = sv.zero_crossing(lambdas, energies)
    summary = {"lambda_star_hat": est_n.value, "lambda_lower_star_hat": est_e.value,
               "sign_changes": sv.sign_changes(energies), "zero_crossing": crossing,
               "crossing_relative_error": abs(crossing - est_e.value) / est_e.value,
               "failures": sum(1 for r in rows if r.error)}
    io.write_json(out / "sweep.json", _stamp(cfg, summary))
    print(f"sign changes = {summary['sign_changes']}  zero crossing = {crossing:.6g}  "
          f"lambda_lower_star_hat = {est_e.value:.6g}")
    return EXIT_OK


def dispatch(args) -> int:
    cfg = load_config(args)
    verb = args.verb
    if verb == "verify":
        return cmd_verify(cfg)
    if verb == "fiber":
        return cmd_fiber(cfg)
    if verb == "extremal":
        return cmd_extremal(cfg)
    if verb == "solve":
        return cmd_solve(cfg, args.branch)
    return cmd_sweep(cfg)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cap = thread_cap()
        with threadpool_limits(limits=cap):
            return dispatch(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CommandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
