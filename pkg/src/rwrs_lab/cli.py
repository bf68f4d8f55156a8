"""Reproducible experiment runner.

``run`` executes every experiment named in the config, writes one output
directory per run (named by config hash + timestamp) containing the manifest,
the resolved config, and per-experiment JSON/CSV reports.  Exit codes: 0 all
verdicts pass, 2 some verdict failed, 1 configuration or runtime error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from datetime import datetime, timezone

from . import __version__
from .analysis import (EnsembleConfig, annealed_variance_experiment,
                       covariance_structure_experiment, geometric_grid,
                       influence_experiment, lemma_suite,
                       marginal_normality_experiment,
                       quenched_concentration_experiment, truncation_experiment)
from .config import (ConfigError, RunPlan, build_plan, canonical_toml,
                     config_hash, grid_for, parse_config)
from .parallel import resolve_workers
from .reports import emit_plots, write_report


def _ensemble(plan: RunPlan, experiment: str, **overrides) -> EnsembleConfig:
    run_cfg = plan.resolved["run"]
    base = dict(
        model=plan.model,
        scenery=plan.scenery,
        n_values=grid_for(plan.resolved, experiment),
        grid_ratio=plan.resolved["grid"]["b"],
        T=run_cfg["horizon_T"],
        master_seed=run_cfg["master_seed"],
        workers=resolve_workers(run_cfg["threads"]),
    )
    base.update(overrides)
    return EnsembleConfig(**base)


def _run_experiment(plan: RunPlan, name: str):
    cfg = plan.resolved[f"experiments.{name}"]
    if name == "variance":
        ens = _ensemble(plan, name, replicas=cfg["replicas"])
        return annealed_variance_experiment(ens, rel_tolerance=cfg["rel_tolerance"])
    if name == "normality":
        ens = _ensemble(plan, name, replicas=cfg["replicas"])
        return marginal_normality_experiment(ens, alpha=cfg["alpha"])
    if name == "covariance":
        ens = _ensemble(plan, name, replicas=cfg["replicas"])
        return covariance_structure_experiment(
            ens, time_pairs=cfg["time_pairs"], ratio_band=tuple(cfg["ratio_band"]))
    if name == "concentration":
        ens = _ensemble(plan, name, sceneries=cfg["sceneries"],
                        walks_per_scenery=cfg["walks_per_scenery"],
                        functional_ids=(cfg["functional"],))
        return quenched_concentration_experiment(
            ens, min_sigma_drop=cfg["min_sigma_drop"])
    if name == "lemmas":
        ens = _ensemble(plan, name)
        exit_ns = None
        if "exit_j_values" in cfg:
            exit_ns = geometric_grid(plan.resolved["grid"]["b"],
                                     cfg["exit_j_values"])
        return lemma_suite(
            ens, pairs=cfg["pairs"], exit_replicas=cfg["exit_replicas"],
            exit_n_values=exit_ns,
            local_time_band=tuple(cfg["local_time_band"]),
            exit_constancy=cfg["exit_constancy"],
            intersection_bound=cfg["intersection_bound"])
    if name == "truncation":
        ens = _ensemble(plan, name)
        return truncation_experiment(ens, replicas=cfg["replicas"],
                                     drift_bound=cfg["drift_bound"])
    if name == "influence":
        n_used = geometric_grid(plan.resolved["grid"]["b"], [cfg["j"]])[0]
        ens = _ensemble(plan, name,
                        functional_ids=("endpoint_cos", "capped_sup",
                                        "clipped_mean"))
        return influence_experiment(ens, couplings=cfg["couplings"], n=n_used)
    raise ConfigError(f"experiments.{name}: no runner registered")


def _make_out_dir(root: str, digest: str) -> str:
    stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%SZ")
    base = os.path.join(root, f"{digest[:12]}-{stamp}")
    path, k = base, 1
    while os.path.exists(path):
        path = f"{base}-{k}"
        k += 1
    os.makedirs(path)
    return path


def run_command(config_path: str) -> int:
    try:
        resolved = parse_config(config_path)
        plan = build_plan(resolved)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    digest = config_hash(resolved)
    out_dir = _make_out_dir(resolved["run"]["output_dir"], digest)
    with open(os.path.join(out_dir, "resolved.toml"), "w", encoding="utf-8") as fh:
        fh.write(canonical_toml(resolved))

    manifest = {
        "artifact_version": __version__,
        "config_hash": digest,
        "created_utc": datetime.now(timezone.utc).isoformat(),
        "resolved_config": canonical_toml(resolved),
        "experiments": {},
        "report_files": [],
    }
    all_passed = True
    for name in plan.experiments:
        t0 = time.perf_counter()
        try:
            report = _run_experiment(plan, name)
        except Exception as exc:  # partial outputs plus a failure marker
            marker = {"experiment": name, "error": f"{type(exc).__name__}: {exc}"}
            with open(os.path.join(out_dir, "FAILED.json"), "w",
                      encoding="utf-8") as fh:
                json.dump(marker, fh, indent=2)
                fh.write("\n")
            _write_manifest(out_dir, manifest, overall=False)
            print(f"error: experiment {name} failed: {exc}", file=sys.stderr)
            return 1
        files = write_report(report, out_dir)
        manifest["report_files"].extend(files)
        manifest["experiments"][name] = {
            "seed": report.seed,
            "passed": report.passed,
            "wall_clock_seconds": time.perf_counter() - t0,
        }
        all_passed &= report.passed
        for v in report.verdicts:
            status = "PASS" if v.passed else "FAIL"
            print(f"[{name}] {status} {v.name}: {v.observed} ({v.criterion})")
    _write_manifest(out_dir, manifest, overall=all_passed)
    print(f"reports written to {out_dir}")
    return 0 if all_passed else 2


def _write_manifest(out_dir: str, manifest: dict, overall: bool) -> None:
    manifest["overall_passed"] = overall
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def validate_command(config_path: str) -> int:
    try:
        resolved = parse_config(config_path)
        plan = build_plan(resolved)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"config ok: hash {config_hash(resolved)}")
    print(f"model: {plan.model.name}; scenery: {plan.scenery.distribution.name}; "
          f"experiments: {', '.join(plan.experiments)}")
    return 0


def plots_command(report_dir: str) -> int:
    try:
        written = emit_plots(report_dir)
    except (FileNotFoundError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {len(written)} plot files to {os.path.join(report_dir, 'plots')}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="rwrs-lab",
        description="Monte Carlo experiments for random walks in random sceneries",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run the experiments named in a config")
    p_run.add_argument("config")
    p_val = sub.add_parser("validate", help="parse and audit a config")
    p_val.add_argument("config")
    p_plot = sub.add_parser("plots", help="emit plot-ready CSVs from reports")
    p_plot.add_argument("report_dir")
    args = parser.parse_args(argv)
    if args.command == "run":
        return run_command(args.config)
    if args.command == "validate":
        return validate_command(args.config)
    return plots_command(args.report_dir)


if __name__ == "__main__":
    sys.exit(main())
