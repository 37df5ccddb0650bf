"""Command-line batch runner: ``bdsde-lab --config run.json --out out/``.

Each run writes the results table (CSV or JSON), ``summary.json`` with the
pass/fail verdict and scalar diagnostics, ``manifest.json`` with the config
echo, seed, version and wall time, and ``run.log``.  Results and summary are
byte-identical across reruns with the same config and seed; timestamps live
only in the manifest.

Exit status: 0 when the experiment's check passes, 2 when it runs but the
check fails, 1 on any error.
"""

import argparse
import csv
import datetime as _dt
import hashlib
import io
import json
import logging
import math
import os
import subprocess
import sys
import time
import traceback
from pathlib import Path

import numpy as np

from . import __version__
from .comparison import ComparisonSetup, check_g_componentwise, check_h4_sampled, compare
from .config import build_problem, build_problems, parse_config
from .core import Dimensions, TimeGrid, check_h2_sampled, check_h3
from .exceptions import BDSDEError
from .expr import compile_scalar, parse_coefficient
from .horizon import GronwallProblem, choose_truncation, gronwall_bounds, gronwall_verify
from .oracle import LinearExampleSpec, derived_linear_solution, paper_explicit_form
from .solver import SolverConfig, solve
from .stoch_calc import ItoQuadruple, generate_bundle, ito_check

__all__ = ["main", "run", "version_string"]

logger = logging.getLogger("bdsde_lab")

SCHEMAS = {
    "solve": ("t", "component", "y_mean", "y_stderr", "z_mean", "z_stderr"),
    "compare": ("t", "component", "gap_mean", "gap_min", "gap_stderr"),
    "gronwall": ("t", "bound"),
    "ito_check": ("N", "pathwise_rms", "expectation_residual"),
    "oracle_diff": ("t", "solver_value", "derived_oracle", "paper_formula", "ratio"),
    "assumptions": ("check", "target", "value", "pass"),
}


def version_string():
    """``git describe`` of the source tree when available, else ``v<version>``."""
    here = Path(__file__).resolve().parent
    try:
        out = subprocess.run(
            ["git", "describe", "--tags", "--always", "--dirty"],
            cwd=here,
            capture_output=True,
            text=True,
            timeout=5,
            check=True,
        ).stdout.strip()
        if out:
            return f"v{__version__}-{out}" if not out.startswith("v") else out
    except (OSError, subprocess.SubprocessError):
        pass
    return f"v{__version__}"


# -- experiments ---------------------------------------------------------


def _solver_config(cfg):
    return SolverConfig(n_paths=cfg["mc"]["paths"], seed=cfg["mc"]["seed"], **cfg["solver"])


def _grid(cfg, weights):
    g = cfg["grid"]
    T = g["T"] if g["T"] is not None else choose_truncation(weights, g["tail_budget"])
    logger.info("horizon T = %g (%s)", T, "given" if g["T"] is not None else f"tail_budget {g['tail_budget']:g}")
    if g["kind"] == "uniform":
        return TimeGrid.uniform(T, g["steps"])
    if g["kind"] == "log":
        return TimeGrid.log_uniform(T, g["steps"])
    return TimeGrid.adapted(weights, T, g["steps"])


def _run_solve(cfg):
    problem = build_problem(cfg["problem"])
    grid = _grid(cfg, problem.weights)
    sol, diag = solve(problem, grid, _solver_config(cfg))
    y_mean, y_se = sol.y_stats()
    z_mean, z_se = sol.z_stats()
    k, d = problem.dims.k, problem.dims.d
    rows = []
    for i, t in enumerate(grid.points):
        for j in range(k):
            for m in range(d):
                label = str(j + 1) if d == 1 else f"{j + 1}.{m + 1}"
                rows.append((t, label, y_mean[i, j], y_se[i, j], z_mean[i, j, m], z_se[i, j, m]))
    summary = {
        "pass": bool(diag.converged),
        "T": grid.T,
        "N": grid.N,
        "y0_mean": y_mean[0].tolist(),
        "y0_stderr": y_se[0].tolist(),
        "picard_deltas": list(diag.picard_deltas),
        "n_sweeps": diag.n_sweeps,
    }
    return rows, summary


def _run_compare(cfg):
    p1, p2 = build_problems(cfg["problems"])
    grid = _grid(cfg, p1.weights)
    setup = ComparisonSetup(p1, p2, grid, _solver_config(cfg))
    c = cfg["compare"]
    report = compare(setup, violation_budget=c["violation_budget"], scheme_tol=c["scheme_tol"])
    rows = []
    for i, t in enumerate(report.times):
        for j in range(report.gap_mean.shape[1]):
            rows.append((t, str(j + 1), report.gap_mean[i, j], report.gap_min[i, j], report.gap_stderr[i, j]))
    summary = {
        "pass": report.passed,
        "min_gap_per_component": report.min_gap_per_component.tolist(),
        "violation_fraction": report.violation_fraction,
        "stderr": report.stderr.tolist(),
        "scheme_tol": report.scheme_tol.tolist(),
        "T": grid.T,
        "N": grid.N,
    }
    return rows, summary


def _run_ito(cfg):
    s = cfg["ito"]
    funcs = {key: compile_scalar(s[key]) for key in ("alpha0", "beta", "gamma", "delta")}
    dims = Dimensions(1, 1, 1)
    rows, reports = [], []
    for idx, N in enumerate(s["steps"]):
        grid = TimeGrid.uniform(s["T"], N)
        # a fresh seed per resolution keeps the runs independent
        bundle = generate_bundle(grid, dims, cfg["mc"]["paths"], cfg["mc"]["seed"] + idx)
        values = {key: np.array([f(t) for t in grid.points]) for key, f in funcs.items() if key != "alpha0"}
        q = ItoQuadruple.dual_adapted(
            [funcs["alpha0"](0.0)],
            values["beta"][:, None],
            values["gamma"][:, None, None],
            values["delta"][:, None, None],
            bundle,
        )
        rep = ito_check(q, bundle)
        reports.append(rep)
        rows.append((N, rep.pathwise_residual_rms, rep.expectation_residual))
    within = [abs(r.expectation_residual) <= 3.0 * r.expectation_stderr for r in reports]
    rms = [r.pathwise_residual_rms for r in reports]
    monotone = all(b <= a for a, b in zip(rms, rms[1:]))
    summary = {
        "pass": bool(all(within) and monotone),
        "within_3_stderr": within,
        "expectation_stderr": [r.expectation_stderr for r in reports],
        "rms_nonincreasing": monotone,
    }
    return rows, summary


def _run_gronwall(cfg):
    s = cfg["gronwall"]
    r = compile_scalar(s["r"])
    m = compile_scalar(s["m"]) if s["m"] is not None else None
    env = compile_scalar(s["r_envelope"]) if s["r_envelope"] is not None else None
    p = GronwallProblem(A=float(s["A"]), M=float(s["M"]), r=r, m=m, r_envelope=env)
    if s["times"] is not None:
        times = sorted(float(t) for t in s["times"])
    else:
        times = np.linspace(0.0, float(s["t_max"]), s["points"]).tolist()
    bounds = gronwall_bounds(p, times)
    rows = list(zip(times, bounds))
    summary = {"pass": True, "bound_at_first_time": bounds[0]}
    if m is not None:
        rep = gronwall_verify(p, times)
        summary.update(
            {
                "pass": bool(rep.conclusion_holds or not rep.hypothesis_holds),
                "hypothesis_holds": rep.hypothesis_holds,
                "conclusion_holds": rep.conclusion_holds,
                "printed_hypothesis_holds": rep.printed_hypothesis_holds,
                "worst_conclusion_ratio": rep.worst_conclusion_ratio,
            }
        )
    return rows, summary


def _xi_for_oracle(xi):
    if isinstance(xi, (int, float)):
        return float(xi)
    expr = parse_coefficient(xi, Dimensions(1, 1, 1), "terminal")

    def func(w):
        return np.broadcast_to(np.asarray(expr.evaluate(W1=w), dtype=float), np.shape(w))

    return func


def _run_oracle(cfg):
    problem = build_problem(cfg["problem"])
    o = cfg["oracle"]
    coarse_grid = _grid(cfg, problem.weights)
    scfg = _solver_config(cfg)
    if o["refine"]:
        fine_grid = coarse_grid.refine()
        bundle = generate_bundle(fine_grid, problem.dims, scfg.n_paths, scfg.seed)
        fine, _ = solve(problem, fine_grid, scfg, bundle=bundle)
        coarse, _ = solve(problem, coarse_grid, scfg, bundle=bundle.coarsen())
    else:
        fine_grid = coarse_grid
        bundle = generate_bundle(fine_grid, problem.dims, scfg.n_paths, scfg.seed)
        fine, _ = solve(problem, fine_grid, scfg, bundle=bundle)
        coarse = None
    spec = LinearExampleSpec(
        xi=_xi_for_oracle(cfg["problem"]["xi"]),
        grid=fine_grid,
        n_outer=o["n_outer"],
        n_inner=o["n_inner"],
        inner_seed=o["inner_seed"],
    )
    n_outer = min(o["n_outer"], bundle.n_paths)
    rows, rel = [], []
    for t in o["times"]:
        ic = coarse_grid.index_of(t)
        t_node = float(coarse_grid.points[ic])
        i_f = 2 * ic if o["refine"] else ic
        y_fine = fine.Y[:n_outer, i_f, 0].mean()
        value = 2.0 * y_fine - coarse.Y[:n_outer, ic, 0].mean() if o["refine"] else y_fine
        derived = float(derived_linear_solution(spec, bundle, t_node).mean())
        printed = float(paper_explicit_form(spec, bundle, t_node).mean())
        ratio = printed / derived if derived != 0 else math.nan
        logger.info("t=%g solver=%.6g derived=%.6g printed-form ratio=%.6g", t_node, value, derived, ratio)
        rows.append((t_node, value, derived, printed, ratio))
        rel.append(abs(value / derived - 1.0) if derived != 0 else math.inf)
    summary = {
        "pass": bool(all(r <= o["rtol"] for r in rel)),
        "relative_error": rel,
        "rtol": o["rtol"],
        "T": coarse_grid.T,
        "N_fine": fine_grid.N,
    }
    return rows, summary


def _run_assumptions(cfg):
    a = cfg["assumptions"]
    kwargs = dict(n_samples=a["n_samples"], box=a["box"], seed=cfg["mc"]["seed"], t_max=a["t_max"])
    if "problems" in cfg.sections:
        problems = list(build_problems(cfg["problems"]))
        names = ["problems[0]", "problems[1]"]
    else:
        problems = [build_problem(cfg["problem"])]
        names = ["problem"]
    rows = []
    for name, p in zip(names, problems):
        h3 = check_h3(p.weights)
        rows.append(("H3.v_integral", name, h3.v_integral, h3.passed))
        rows.append(("H3.u2_integral", name, h3.u2_integral, h3.passed))
        h2 = check_h2_sampled(p.coefficients, p.dims, **kwargs)
        rows.append(("H2.max_violation", name, h2.max_violation, h2.passed))
    if len(problems) == 2:
        grid = _grid(cfg, problems[0].weights)
        setup = ComparisonSetup(problems[0], problems[1], grid)
        h4 = check_h4_sampled(setup, **kwargs)
        rows.append(("H4.max_violation", "problems", h4.max_violation, h4.passed))
        rows.append(("H4.terminal_violation", "problems", h4.terminal_violation, h4.passed))
        gs = check_g_componentwise(setup, **kwargs)
        rows.append(("g.cross_dependence", "problems", gs.max_cross_dependence, gs.passed))
    summary = {"pass": bool(all(r[3] for r in rows))}
    return rows, summary


EXPERIMENTS = {
    "solve": _run_solve,
    "compare": _run_compare,
    "ito_check": _run_ito,
    "gronwall": _run_gronwall,
    "oracle_diff": _run_oracle,
    "assumptions": _run_assumptions,
}


# -- output --------------------------------------------------------------


def _cell(value):
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else repr(value)
    return value


def _dump_json(obj):
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _write_results(path, fmt, columns, rows, summary):
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(v) for v in row])
        text = buf.getvalue()
    else:
        records = [dict(zip(columns, row)) for row in rows]
        text = _dump_json({"columns": list(columns), "rows": records, "summary": summary})
    path.write_text(text, encoding="utf-8")
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def run(config, out_dir="out"):
    """Execute a validated config, write its artifacts to ``out_dir`` and return the exit status."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    started = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    t0 = time.perf_counter()
    status, summary, digests, error = 1, {}, {}, None
    try:
        rows, summary = EXPERIMENTS[config.experiment](config)
        columns = SCHEMAS[config.experiment]
        fmt = config["output"]["format"]
        results = out / config["output"]["path"]
        digests[results.name] = _write_results(results, fmt, columns, rows, summary)
        summary_text = _dump_json({"experiment": config.experiment, **summary})
        (out / "summary.json").write_text(summary_text, encoding="utf-8")
        digests["summary.json"] = hashlib.sha256(summary_text.encode("utf-8")).hexdigest()
        status = 0 if summary.get("pass", False) else 2
        logger.info("%s finished: %s", config.experiment, "pass" if status == 0 else "checked failure")
    except (BDSDEError, ArithmeticError, ValueError, KeyError) as exc:
        error = _qualified(exc)
        logger.error("%s", error)
    manifest = {
        "config": config.to_dict(),
        "seed": config.seed,
        "version": version_string(),
        "started_at": started,
        "wall_time_s": round(time.perf_counter() - t0, 6),
        "defaults_applied": list(config.defaults_applied),
        "exit_status": status,
        "files": digests,
    }
    if error:
        manifest["error"] = error
    (out / "manifest.json").write_text(_dump_json(manifest), encoding="utf-8")
    return status


def _qualified(exc):
    """``module: Type: message`` with the module where the exception was raised."""
    tb = exc.__traceback__
    module = type(exc).__module__
    while tb is not None:
        module = tb.tb_frame.f_globals.get("__name__", module)
        tb = tb.tb_next
    return f"{module}: {type(exc).__name__}: {exc}"


def _parser():
    p = argparse.ArgumentParser(prog="bdsde-lab", description="Run a BDSDE experiment from a JSON config.")
    p.add_argument("--config", required=True, help="path to the JSON experiment config")
    p.add_argument("--out", default="./out", help="output directory (default: ./out)")
    p.add_argument("--seed", type=int, default=None, help="override mc.seed from the config")
    p.add_argument("--quiet", action="store_true", help="only log warnings and errors to stderr")
    return p


def main(argv=None):
    args = _parser().parse_args(argv)
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"bdsde-lab: cannot create {out}: {exc}", file=sys.stderr)
        return 1
    handlers = _configure_logging(out / "run.log", args.quiet)
    try:
        try:
            text = Path(args.config).read_bytes()
            config = parse_config(text)
        except (OSError, BDSDEError, ValueError) as exc:
            logger.error("%s", _qualified(exc))
            return 1
        if args.seed is not None:
            if args.seed < 0:
                logger.error("--seed must be nonnegative")
                return 1
            config = config.with_seed(args.seed)
            logger.info("seed overridden from the command line: %d", args.seed)
        try:
            return run(config, out)
        except Exception as exc:  # anything unexpected still maps to status 1
            logger.error("%s\n%s", _qualified(exc), traceback.format_exc())
            return 1
    finally:
        for h in handlers:
            logging.getLogger("bdsde_lab").removeHandler(h)
            h.close()


def _configure_logging(log_path, quiet):
    root = logging.getLogger("bdsde_lab")
    root.setLevel(logging.INFO)
    root.propagate = False
    fmt = logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s")
    console = logging.StreamHandler(sys.stderr)
    console.setLevel(logging.WARNING if quiet else logging.INFO)
    console.setFormatter(fmt)
    logfile = logging.FileHandler(os.fspath(log_path), mode="w", encoding="utf-8")
    logfile.setLevel(logging.INFO)
    logfile.setFormatter(fmt)
    root.addHandler(console)
    root.addHandler(logfile)
    return [console, logfile]


if __name__ == "__main__":
    sys.exit(main())
