"""Command-line entry point.

``bmeigen <command> --config cfg.json [--out DIR] [--h H] [--seed S] [--threads N] [--format json|csv|both]``
runs one pipeline; ``bmeigen reproduce <suite>`` runs an acceptance suite.

Every run writes ``manifest.json`` (config hash, seed, versions, wall
time) and ``report.json`` (deterministic: no timings or paths) plus CSV
tables and grid dumps under ``--out``.  Exit codes: 0 all checks passed,
2 checks ran with failures, 1 execution or configuration error.
"""
from __future__ import annotations

import argparse
import logging
import os
import platform
import sys
import time
from importlib import metadata
from pathlib import Path

import numpy as np

from . import io
from .bmcheck import BMConfig, bm_verify
from .config import COMMANDS, ConfigError, ExperimentConfig, load_config
from .convexity import divergence_at_boundary_check, infimal_convolution, log_concavity_check, neg_log_transform
from .eigensolver import NonConvergenceError, principal_eigenpair
from .geometry import DomainError, ResourceError, bounding_box, is_convex, minkowski_combine, rasterize
from .operators import check_convexity_in_X, check_ellipticity, check_homogeneity

log = logging.getLogger("bmeigen")

THREADS_ENV = "BMEIGEN_THREADS"
EXIT_OK, EXIT_ERROR, EXIT_FAILED = 0, 1, 2


def _versions() -> dict:
    out = {"python": platform.python_version()}
    for dist in ("artifact", "numpy", "scipy", "numba"):
        try:
            out[dist] = metadata.version(dist)
        except metadata.PackageNotFoundError:
            out[dist] = None
    return out


def _set_threads(n) -> int | None:
    if n is None:
        env = os.environ.get(THREADS_ENV)
        if env is None:
            return None
        try:
            n = int(env)
        except ValueError:
            raise ConfigError(THREADS_ENV, f"expected an integer, got {env!r}") from None
    if n < 1:
        raise ConfigError("--threads", "must be a positive integer")
    import numba

    n = min(n, numba.config.NUMBA_NUM_THREADS)
    numba.set_num_threads(n)
    return n


# -- pipelines: each returns (passed, report, csv rows, grid dumps) ---------

def _eigen(cfg: ExperimentConfig):
    r = principal_eigenpair(cfg.operator, cfg.domain, cfg.h, cfg.solver, raise_on_failure=False)
    rep = {"eigen": r.summary()}
    return r.converged, rep, [_flat(r.summary())], {"u": (r.eigenfunction.values, r.grid, "u")}


def _flat(d: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in d.items():
        if isinstance(v, dict):
            out.update(_flat(v, f"{prefix}{k}."))
        else:
            out[f"{prefix}{k}"] = v
    return out


def _minkowski(cfg: ExperimentConfig):
    dom = minkowski_combine(cfg.domains, cfg.weights)
    grid, sdf = rasterize(dom, cfg.h)
    rep = {"minkowski": {"weights": cfg.weights, "convex": is_convex(dom), "bounding_box": list(bounding_box(dom)),
                         "interior_nodes": int(grid.n_interior), "area_estimate": float(grid.n_interior * grid.h ** 2),
                         "grid_shape": list(grid.shape)}}
    return True, rep, [_flat(rep["minkowski"])], {"sdf": (sdf, grid, "sdf")}


def _infconv(cfg: ExperimentConfig):
    t = cfg.t
    r0 = principal_eigenpair(cfg.operator, cfg.domain0, cfg.h, cfg.solver)
    r1 = principal_eigenpair(cfg.operator, cfg.domain1, cfg.h, cfg.solver)
    v0, v1 = neg_log_transform(r0.eigenfunction), neg_log_transform(r1.eigenfunction)
    dom_t = minkowski_combine([cfg.domain0, cfg.domain1], [1 - t, t])
    out, _ = rasterize(dom_t, cfg.h)
    res = infimal_convolution(v0, v1, t, out)
    div = divergence_at_boundary_check(res, dom_t, [cfg.domain0, cfg.domain1], [v0, v1])
    rep = {"infconv": {"t": t, "lambda0": r0.lam, "lambda1": r1.lam, "unreachable": res.unreachable,
                       "max_gap": float(np.max(res.gap)) if res.gap.size else 0.0, "divergence": div}}
    rows = [dict(zip(("x", "y", "x0", "y0", "x1", "y1", "w"), map(float, row))) for row in res.witness_table()]
    return bool(div.get("passed", False)), rep, rows, {"w": (res.w.values, out, "v")}


def _bm_check(cfg: ExperimentConfig):
    bm = BMConfig(cfg.operator, cfg.domain0, cfg.domain1, ts=cfg.ts, h=cfg.h, params=cfg.solver, **cfg.bm)
    reports = bm_verify(bm)
    rep = {"bm": [r.to_dict() for r in reports]}
    passed = all(r.passed and r.complete for r in reports)
    return passed, rep, [r.csv_row() for r in reports], {}


def _log_concavity(cfg: ExperimentConfig):
    r = principal_eigenpair(cfg.operator, cfg.domain, cfg.h, cfg.solver)
    lc = log_concavity_check(r.eigenfunction, samples=cfg.samples, seed=cfg.seed)
    rep = {"eigen": r.summary(), "log_concavity": lc}
    return lc["passed"], rep, [_flat(lc)], {"u": (r.eigenfunction.values, r.grid, "u")}


def _validate_operator(cfg: ExperimentConfig):
    op, n, seed = cfg.operator, cfg.samples, cfg.seed
    hom = check_homogeneity(op, n, seed=seed)
    c_est, C_est = check_ellipticity(op, n, seed)
    c, C = op.ellipticity
    ell_ok = bool(c_est >= c * (1 - 1e-10) and C_est <= C * (1 + 1e-10))
    cvx = check_convexity_in_X(op, n, seed=seed)
    rep = {"operator": op.to_dict(), "samples": n, "homogeneity": hom.to_dict(),
           "ellipticity": {"estimate": [c_est, C_est], "bounds": [c, C], "passed": ell_ok},
           "convexity": cvx.to_dict()}
    rows = [{"check": "homogeneity", "passed": hom.passed, "violations": hom.violations},
            {"check": "ellipticity", "passed": ell_ok, "violations": int(not ell_ok)},
            {"check": "convexity", "passed": cvx.passed, "violations": cvx.violations}]
    return hom.passed and ell_ok and cvx.passed, rep, rows, {}


PIPELINES = {"eigen": _eigen, "minkowski": _minkowski, "infconv": _infconv, "bm-check": _bm_check,
             "log-concavity": _log_concavity, "validate-operator": _validate_operator}


def _formats(flag, cfg_formats) -> tuple:
    if flag is None:
        return tuple(cfg_formats)
    return ("json", "csv") if flag == "both" else (flag,)


def run(args) -> int:
    t0 = time.perf_counter()
    cfg = load_config(args.config)
    if cfg.command != args.command:
        raise ConfigError("command", f"config is for {cfg.command!r} but {args.command!r} was requested")
    if args.h is not None:
        if not 0 < args.h <= 1:
            raise ConfigError("--h", "must lie in (0, 1]")
        cfg.h = args.h
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed", "must be a nonnegative integer")
        cfg.seed = args.seed
    threads = _set_threads(args.threads)
    formats = _formats(args.format, cfg.formats)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    passed, body, rows, grids = PIPELINES[cfg.command](cfg)
    stamp = {"config_sha256": cfg.sha256, "seed": cfg.seed}
    report = {**stamp, "command": cfg.command, "h": cfg.h, "passed": bool(passed), "result": body}
    artifacts = []
    if "json" in formats:
        artifacts.append(io.write_json(out / "report.json", report).name)
    if "csv" in formats and rows:
        artifacts.append(io.write_csv(out / "table.csv", [{**stamp, **r} for r in rows]).name)
    for name, (vals, grid, role) in grids.items():
        io.dump_grid(vals, grid, out / name, role, csv_table="csv" in formats)
        artifacts.append(f"{name}.json")
    manifest = {**stamp, "command": cfg.command, "config": str(Path(args.config).resolve()), "h": cfg.h,
                "threads": threads, "formats": list(formats), "versions": _versions(), "artifacts": artifacts,
                "passed": bool(passed), "wall_time_s": time.perf_counter() - t0}
    io.write_json(out / "manifest.json", manifest)
    print(f"{cfg.command}: {'PASS' if passed else 'FAIL'} (report in {out})")
    return EXIT_OK if passed else EXIT_FAILED


def reproduce(args) -> int:
    from .suites import SUITES, run_suite

    if args.suite not in SUITES:
        print(f"error: unknown suite {args.suite!r}; expected one of {', '.join(SUITES)}", file=sys.stderr)
        return EXIT_ERROR
    _set_threads(args.threads)
    t0 = time.perf_counter()
    results = run_suite(args.suite, progress=lambda r: print(r.line(), flush=True))
    passed = all(r.passed for r in results)
    out = Path(args.out)
    io.write_json(out / "report.json", {"suite": args.suite, "passed": passed,
                                        "criteria": [{k: v for k, v in r.to_dict().items() if k != "runtime"}
                                                     for r in results]})
    io.write_csv(out / "summary.csv", [{"criterion": r.name, "passed": r.passed, "runtime_s": round(r.runtime, 2),
                                        "budget_s": r.budget} for r in results])
    io.write_json(out / "manifest.json", {"suite": args.suite, "versions": _versions(), "passed": passed,
                                          "wall_time_s": time.perf_counter() - t0})
    print(f"{sum(r.passed for r in results)}/{len(results)} criteria passed")
    return EXIT_OK if passed else EXIT_FAILED


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bmeigen", description="Principal eigenvalues of fully nonlinear operators "
                                "and discrete Brunn-Minkowski checks.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default="out", help="output directory (default: ./out)")
    common.add_argument("--threads", type=int, default=None,
                        help=f"numba worker threads (default: ${THREADS_ENV}, else numba's default)")
    for cmd in COMMANDS:
        s = sub.add_parser(cmd, parents=[common], help=f"run the {cmd} pipeline from a JSON config")
        s.add_argument("--config", required=True, help="JSON configuration (schema in bmeigen.config)")
        s.add_argument("--h", type=float, default=None, help="grid spacing override")
        s.add_argument("--seed", type=int, default=None, help="random seed override")
        s.add_argument("--format", choices=("json", "csv", "both"), default=None, help="report formats")
    r = sub.add_parser("reproduce", parents=[common], help="run an acceptance suite")
    r.add_argument("suite", help="operators, consistency, eigen-oracles, infconv, bm, bm-smoke, logconcavity, "
                                 "barrier or all")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "reproduce":
            return reproduce(args)
        return run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
    except (DomainError, ResourceError, NonConvergenceError, OSError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
