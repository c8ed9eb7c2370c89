"""Command-line experiment runner.

    mirrorctl run CONFIG.json [--out DIR] [--parallel]
    mirrorctl catalog [--json]

Exit codes for ``run``: 0 when every check passed, 1 when any failed,
2 on configuration errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import verify
from .config import (
    CHECK_MODELS,
    ExperimentConfig,
    build_instance,
    build_law,
    load_config,
    sde_config,
)
from .cost import ProblemInstance
from .dynamics import write_trajectories
from .errors import ConfigError
from .objectives import OBJECTIVE_KINDS
from .potentials import POTENTIAL_KINDS
from .verify import CheckResult

log = logging.getLogger("mirrorctl")

SEED_ENV = "MIRRORCTL_SEED"


def _task(check, pi: ProblemInstance, x0: np.ndarray, seed: int):
    """Bind one configured check to a zero-argument callable."""
    name = check.name
    if name == "check_lemma1":
        return lambda: verify.check_lemma1(pi, check.samples, seed)
    if name == "check_hjb":
        return lambda: verify.check_hjb(
            pi, check.grid_points, check.time_points, check.controls_per_point, seed
        )
    if name == "check_theorem1":
        laws = [build_law(c, pi, x0) for c in check.laws]
        return lambda: verify.check_theorem1(pi, x0, laws, check.step_h, check.tolerance)
    if name == "check_theorem2_convex":
        return lambda: verify.check_theorem2_convex(pi, x0, check.times, check.step_h)
    if name == "check_theorem2_strongly_convex":
        return lambda: verify.check_theorem2_strongly_convex(
            pi, x0, check.mu, check.times, check.step_h, seed
        )
    cfg = sde_config(check, pi.horizon_T, seed)
    if name == "check_theorem4":
        return lambda: verify.check_theorem4(
            pi, x0, cfg, check.mu, check.check_times, check.export_paths
        )
    if name == "check_theorem5_tracking":
        return lambda: verify.check_theorem5_tracking(pi, x0, check.eps_list, cfg)
    raise ConfigError(f"unknown check {name!r}")


def run_experiment(cfg: ExperimentConfig, out_dir: Path, parallel: bool = False) -> list[CheckResult]:
    pi = build_instance(cfg)
    x0 = np.asarray(cfg.x0, dtype=float)
    tasks = [(c.name, _task(c, pi, x0, cfg.seed)) for c in cfg.checks]
    echo = {"instance": pi.to_config(), "x0": cfg.x0}

    def execute(item):
        name, fn = item
        log.info("running %s", name)
        return verify.run_safely(name, echo, fn)

    if parallel and len(tasks) > 1:
        with ThreadPoolExecutor() as pool:
            results = list(pool.map(execute, tasks))
    else:
        results = [execute(t) for t in tasks]

    out_dir.mkdir(parents=True, exist_ok=True)
    if cfg.export_trajectories:
        totals = Counter(r.check_name for r in results)
        seen: Counter = Counter()
        for r in results:
            seen[r.check_name] += 1
            stem = r.check_name if totals[r.check_name] == 1 else f"{r.check_name}{seen[r.check_name]}"
            write_trajectories(r.trajectories, out_dir, stem)
    report = {"checks": [r.to_dict() for r in results]}
    (out_dir / "report.json").write_text(json.dumps(report, indent=2) + "\n")
    return results


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
        seed_env = os.environ.get(SEED_ENV)
        if seed_env is not None:
            try:
                seed = int(seed_env)
            except ValueError:
                raise ConfigError(f"{SEED_ENV}={seed_env!r} is not an integer") from None
            if seed < 0:
                raise ConfigError(f"{SEED_ENV} must be nonnegative")
            cfg = cfg.model_copy(update={"seed": seed})
        out_dir = Path(args.out if args.out is not None else cfg.output_dir)
        results = run_experiment(cfg, out_dir, parallel=args.parallel)
    except ConfigError as exc:
        print(f"ConfigError: {exc}", file=sys.stderr)
        return 2
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        detail = f" ({r.error})" if r.error else ""
        print(f"{status} {r.check_name}: margin={r.margin:.6g} tol={r.tolerance:.3g}{detail}")
    print(f"report: {out_dir / 'report.json'}")
    return 0 if all(r.passed for r in results) else 1


def catalog_data() -> dict:
    return {
        "objectives": sorted(OBJECTIVE_KINDS),
        "potentials": sorted(POTENTIAL_KINDS),
        "checks": {name: model.model_json_schema() for name, model in CHECK_MODELS.items()},
        "config_schema": ExperimentConfig.model_json_schema(),
    }


def cmd_catalog(args) -> int:
    data = catalog_data()
    if args.json:
        print(json.dumps(data, indent=2, sort_keys=True))
        return 0
    print("objective kinds: " + ", ".join(data["objectives"]))
    print("potential kinds: " + ", ".join(data["potentials"]))
    print("checks:")
    for name, schema in data["checks"].items():
        print(f"  {name}")
        for field, spec in schema.get("properties", {}).items():
            if field == "name":
                continue
            kind = spec.get("type") or "/".join(
                s.get("type", "?") for s in spec.get("anyOf", [])
            ) or "object"
            if "default" in spec:
                note = f"default {json.dumps(spec['default'])}"
            elif field in schema.get("required", ()):
                note = "required"
            else:
                note = "optional"
            print(f"    {field}: {kind} ({note})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mirrorctl",
        description="Mirror descent as optimal control: simulate and verify.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the checks described by a JSON config")
    p_run.add_argument("config")
    p_run.add_argument("--out", default=None, help="output directory (overrides output_dir)")
    p_run.add_argument("--parallel", action="store_true", help="run checks concurrently")
    p_run.set_defaults(func=cmd_run)

    p_cat = sub.add_parser("catalog", help="list objective/potential kinds and checks")
    p_cat.add_argument("--json", action="store_true", help="dump the JSON schema")
    p_cat.set_defaults(func=cmd_catalog)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
