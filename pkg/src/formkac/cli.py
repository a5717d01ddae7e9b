"""Command line entry point: ``formkac run | list-models | selftest``."""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .config import load_config
from .errors import ConfigError
from .experiments import CSV_HEADER, algebra_pinning, form_identities, run_experiment
from .geometry import catalog

SCHEMA_NAME = "summary-v1.schema.json"


def load_schema() -> dict:
    return json.loads(resources.files("formkac").joinpath("data", SCHEMA_NAME).read_text())


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in o]
    if isinstance(o, (bool, np.bool_)):
        return bool(o)
    if isinstance(o, (int, np.integer)):
        return int(o)
    if isinstance(o, (float, np.floating)):
        return float(o) if math.isfinite(o) else None
    return o


def write_results(path: Path, results) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for res in results:
            for row in res.rows:
                writer.writerow([_cell(v) for v in row])


def build_summary(cfg, results, threads, wall) -> dict:
    exps = [
        {
            "name": r.name,
            "kind": r.kind,
            "seed": int(r.seed),
            "passed": bool(r.passed),
            "verdicts": {k: bool(v) for k, v in r.verdicts.items()},
            "estimates": _jsonable(r.estimates),
            "wall_time": float(r.wall_time),
            "n_rows": len(r.rows),
        }
        for r in results
    ]
    return {
        "schema_version": "1",
        "config": cfg.path,
        "seed": int(cfg.seed),
        "threads": int(threads),
        "failures": sum(not e["passed"] for e in exps),
        "wall_time": float(wall),
        "experiments": exps,
    }


def _threads(arg) -> int:
    if arg is not None:
        n = int(arg)
    else:
        n = int(os.environ.get("FORMKAC_THREADS", "1"))
    if n < 1:
        raise ConfigError("threads must be >= 1")
    return n


def cmd_run(args) -> int:
    path = args.config or args.config_pos
    if path is None:
        raise ConfigError("no config given (use --config)")
    cfg = load_config(path, args.seed_override)
    threads = _threads(args.threads)
    out = Path(args.out or cfg.out or "formkac-out")
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    results = []
    for exp in cfg.experiments:
        res = run_experiment(exp, threads)
        results.append(res)
        status = "PASS" if res.passed else "FAIL"
        print(f"{status} {exp.name} ({exp.kind}) {res.wall_time:.1f}s")
    write_results(out / "results.csv", results)
    summary = build_summary(cfg, results, threads, time.perf_counter() - start)
    jsonschema.validate(summary, load_schema())
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return 0 if summary["failures"] == 0 else 2


def cmd_list_models(args) -> int:
    cat = catalog()
    if args.json:
        print(json.dumps(_jsonable(cat), indent=2))
        return 0
    print(f"{'model':<16} {'dims':<6} {'boundary':<9} {'curvature':<10} params")
    for m in cat:
        params = ", ".join(
            f"{k}={v['default']} in ({v['min_exclusive']}, {v['max_exclusive']})" for k, v in m["params"].items()
        )
        dims = f"{m['dims'][0]}-{m['dims'][1]}"
        print(f"{m['model']:<16} {dims:<6} {str(m['has_boundary']).lower():<9} {m['sectional_curvature']:<10g} {params or '-'}")
    return 0


def selftest_checks() -> dict:
    """Fast deterministic identity checks: ``{name: (defect, tolerance)}``."""
    from . import oracles, spin
    from .experiments import random_intfor_pair
    from .geometry import make_model

    out = {}
    for k, v in {**algebra_pinning(), **form_identities()}.items():
        out[k] = (v, 1e-12)
    for k, v in spin.algebra_suite(n_xi=100).items():
        out[f"spin_{k}"] = (v, 1e-12)
    out["neumann_kernel_mass"] = (abs(oracles.halfspace_evolve("neumann", 1.0, 0.3, lambda y: 1.0) - 1), 1e-10)
    g = np.linspace(0, 8, 401)
    u = oracles.pde_solve_1d(oracles.GridField(g, np.exp(-g * g), "dirichlet"), 0.5, 5000)
    exact = oracles.halfspace_evolve("dirichlet", 0.5, 1.0, lambda y: math.exp(-y * y))
    out["crank_nicolson_vs_image"] = (abs(u.at(1.0) - exact), 1e-3)
    ball = make_model("ball", 3)
    f, omega = random_intfor_pair(np.random.default_rng(0), ball, 1)
    out["intfor_residual"] = (oracles.intfor_check(ball, f, omega, oracles.Quadrature(2, 8), 1e-3).residual, 1e-5)
    return out


def cmd_selftest(args) -> int:
    failures = 0
    for name, (defect, tol) in selftest_checks().items():
        ok = defect < tol
        failures += not ok
        print(f"{'ok  ' if ok else 'FAIL'} {name:<28} {defect:.3e} (< {tol:g})")
    print(f"{failures} failure(s)")
    return 0 if failures == 0 else 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="formkac", description="Feynman-Kac Monte Carlo for differential forms with absolute boundary conditions.")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run the experiments of a config file")
    run.add_argument("config_pos", nargs="?", metavar="CONFIG")
    run.add_argument("--config", help="experiment config (TOML)")
    run.add_argument("--out", help="output directory (default: config 'out' or ./formkac-out)")
    run.add_argument("--threads", type=int, help="worker threads (default: $FORMKAC_THREADS or 1)")
    run.add_argument("--seed-override", type=int, help="replace every seed in the config")
    run.set_defaults(func=cmd_run)
    lm = sub.add_parser("list-models", help="print the model catalog")
    lm.add_argument("--json", action="store_true", help="machine-readable output")
    lm.set_defaults(func=cmd_list_models)
    st = sub.add_parser("selftest", help="run fast identity checks")
    st.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
