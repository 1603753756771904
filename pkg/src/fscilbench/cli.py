"""Command-line front end.

Four subcommands, all config-driven and deterministic:

  run             one protocol per (mode, epsilon, seed) cell
  sweep-smoothing NONPC protocols across a label-smoothing grid
  compare-modes   several modes branched from one shared base checkpoint
                  per seed
  report          print the final-session summary from an output directory

Every experiment command writes the same artifact set into --out:
manifest.json plus reports.csv, aggregate.csv, logit_profiles.csv, and
row_norms.csv, each keyed by leading (mode, epsilon) columns. Artifacts are
byte-identical across reruns with the same config.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import os
import sys

from . import __version__, engine, reportio
from .config import ExperimentConfig, load_config, materialize_data
from .engine import UpdateMode
from .errors import ConfigError, FormatError, FscilError, InputError, ParseError, TrainingError
from .evaluation import aggregate

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_TRAINING = 3

DEFAULT_SWEEP_GRID = tuple(round(0.1 * i, 1) for i in range(10))
DEFAULT_COMPARE_MODES = ("M1", "M2", "M3", "M4", "M5")

ARTIFACT_NAMES = ("reports.csv", "aggregate.csv", "logit_profiles.csv", "row_norms.csv")


def _parse_int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip() != ""]
    except ValueError:
        raise ConfigError(f"expected a comma-separated integer list, got {text!r}")


def _parse_float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip() != ""]
    except ValueError:
        raise ConfigError(f"expected a comma-separated float list, got {text!r}")


def _prepare_out_dir(out: str, overwrite: bool):
    if os.path.isdir(out) and os.listdir(out) and not overwrite:
        raise ConfigError(
            f"output directory {out!r} is not empty; pass --overwrite to replace artifacts"
        )
    os.makedirs(out, exist_ok=True)


def _run_cell(payload):
    """One independent protocol: (mode, epsilon, seed) -> EvalReport."""
    cfg, full, mode, eps, seed = payload
    base_cfg = cfg.base_cfg_with_smoothing(eps)
    return engine.run_single(
        cfg.plan, full, base_cfg, cfg.novel_cfg, mode, seed,
        cfg.arch(full.input_dim),
    )


def _compare_cell(payload):
    """One seed of compare-modes: shared base checkpoint, one branch per mode."""
    cfg, full, modes, eps, seed = payload
    base_cfg = cfg.base_cfg_with_smoothing(eps)
    checkpoint, _ = engine.train_base_for_seed(
        cfg.plan, full, base_cfg, seed, cfg.arch(full.input_dim)
    )
    results = []
    for mode in modes:
        model = engine.prepare_session0(checkpoint.clone(), full, cfg.plan, mode)
        results.append(engine.run_sessions(model, cfg.plan, full, cfg.novel_cfg, mode, seed))
    return results


def _map_cells(worker, payloads, jobs: int):
    if jobs <= 1:
        return [worker(p) for p in payloads]
    with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(worker, payloads))


def _keyed(rows: list[dict], mode: UpdateMode, eps: float) -> list[dict]:
    return [{"mode": mode.value, "epsilon": eps, **row} for row in rows]


def _write_artifacts(out: str, command: str, cfg: ExperimentConfig,
                     grouped: list[tuple[UpdateMode, float, list]]):
    """grouped: (mode, epsilon, reports-over-seeds) in deterministic order."""
    report_rows, agg_rows, prof_rows, norm_rows = [], [], [], []
    for mode, eps, reports in grouped:
        for report in reports:
            report_rows.extend(_keyed(reportio.report_rows(report), mode, eps))
            prof_rows.extend(_keyed(reportio.profile_rows(report), mode, eps))
            norm_rows.extend(_keyed(reportio.row_norm_rows(report), mode, eps))
        agg_rows.extend(_keyed(reportio.aggregate_rows(aggregate(reports)), mode, eps))

    key = ("mode", "epsilon")
    reportio.write_csv(os.path.join(out, "reports.csv"),
                       key + reportio.REPORT_FIELDS, report_rows)
    reportio.write_csv(os.path.join(out, "aggregate.csv"),
                       key + reportio.AGGREGATE_FIELDS, agg_rows)
    reportio.write_csv(os.path.join(out, "logit_profiles.csv"),
                       key + reportio.PROFILE_FIELDS, prof_rows)
    reportio.write_csv(os.path.join(out, "row_norms.csv"),
                       key + reportio.ROW_NORM_FIELDS, norm_rows)

    manifest = {
        "format_version": 1,
        "tool": {"name": "fscilbench", "version": __version__},
        "command": command,
        "config": cfg.resolved,
    }
    with open(os.path.join(out, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")


def cmd_run(cfg: ExperimentConfig, out: str, jobs: int) -> int:
    full = materialize_data(cfg)
    cells = [
        (cfg, full, mode, eps, seed)
        for mode in cfg.modes
        for eps in cfg.epsilons
        for seed in cfg.seeds
    ]
    reports = _map_cells(_run_cell, cells, jobs)
    grouped = []
    idx = 0
    for mode in cfg.modes:
        for eps in cfg.epsilons:
            grouped.append((mode, eps, reports[idx:idx + len(cfg.seeds)]))
            idx += len(cfg.seeds)
    _write_artifacts(out, "run", cfg, grouped)
    return EXIT_OK


def cmd_sweep_smoothing(cfg: ExperimentConfig, out: str, jobs: int) -> int:
    """One NONPC protocol per epsilon; the base session is retrained per value."""
    full = materialize_data(cfg)
    mode = UpdateMode.NONPC
    cells = [(cfg, full, mode, eps, seed) for eps in cfg.epsilons for seed in cfg.seeds]
    reports = _map_cells(_run_cell, cells, jobs)
    grouped = []
    idx = 0
    for eps in cfg.epsilons:
        grouped.append((mode, eps, reports[idx:idx + len(cfg.seeds)]))
        idx += len(cfg.seeds)
    _write_artifacts(out, "sweep-smoothing", cfg, grouped)
    return EXIT_OK


def cmd_compare_modes(cfg: ExperimentConfig, out: str, jobs: int) -> int:
    full = materialize_data(cfg)
    eps = cfg.epsilons[0]
    if len(cfg.epsilons) != 1:
        raise ConfigError("compare-modes uses a single label-smoothing value")
    cells = [(cfg, full, cfg.modes, eps, seed) for seed in cfg.seeds]
    per_seed = _map_cells(_compare_cell, cells, jobs)
    grouped = [
        (mode, eps, [per_seed[s][m] for s in range(len(cfg.seeds))])
        for m, mode in enumerate(cfg.modes)
    ]
    _write_artifacts(out, "compare-modes", cfg, grouped)
    return EXIT_OK


def cmd_report(out: str) -> int:
    path = os.path.join(out, "aggregate.csv")
    if not os.path.exists(path):
        raise ConfigError(f"no aggregate.csv under {out!r}; run an experiment first")
    rows = reportio.read_csv(path)
    if not rows:
        raise ConfigError(f"{path} holds no rows")
    final: dict[tuple[str, str], dict] = {}
    for row in rows:
        key = (row["mode"], row["epsilon"])
        if key not in final or int(row["session"]) > int(final[key]["session"]):
            final[key] = row
    header = f"{'mode':<20} {'epsilon':<8} {'session':<8} {'base':<28} {'novel':<28} {'weighted':<28}"
    print(header)
    print("-" * len(header))
    for (mode, eps), row in sorted(final.items()):
        novel = (
            f"{row['novel_acc_mean']} ± {row['novel_acc_std']}"
            if row["novel_acc_mean"] != "" else "-"
        )
        print(
            f"{mode:<20} {eps:<8} {row['session']:<8} "
            f"{row['base_acc_mean']} ± {row['base_acc_std']:<10} "
            f"{novel:<28} "
            f"{row['weighted_acc_mean']} ± {row['weighted_acc_std']}"
        )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fscilbench",
        description="Few-shot class-incremental learning workbench",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True, help="path to a JSON config or manifest")
        p.add_argument("--out", required=True, help="output directory for artifacts")
        p.add_argument("--seeds", help="override seeds, e.g. 1,2,3,4,5")
        p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
        p.add_argument("--overwrite", action="store_true",
                       help="allow writing into a non-empty output directory")

    add_common(sub.add_parser("run", help="run the configured protocols"))
    p_sweep = sub.add_parser("sweep-smoothing", help="NONPC across a smoothing grid")
    add_common(p_sweep)
    p_sweep.add_argument("--epsilons", help="override grid, e.g. 0.0,0.1,0.2")
    p_cmp = sub.add_parser("compare-modes", help="modes from a shared base checkpoint")
    add_common(p_cmp)
    p_cmp.add_argument("--modes", help="override mode list, e.g. M1,M2,M5")

    p_rep = sub.add_parser("report", help="summarize an output directory")
    p_rep.add_argument("--config", help="ignored; accepted for symmetry")
    p_rep.add_argument("--out", required=True)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "report":
            return cmd_report(args.out)

        cfg = load_config(args.config)
        if args.seeds:
            cfg.seeds = _parse_int_list(args.seeds)
            cfg.resolved["seeds"] = cfg.seeds
        if args.command == "sweep-smoothing":
            if getattr(args, "epsilons", None):
                grid = _parse_float_list(args.epsilons)
            elif cfg.epsilons_explicit:
                grid = cfg.epsilons
            else:
                grid = list(DEFAULT_SWEEP_GRID)
            for eps in grid:
                if not 0.0 <= eps < 1.0:
                    raise ConfigError(f"label smoothing {eps} outside [0, 1)")
            cfg.epsilons = list(grid)
            cfg.resolved["epsilons"] = cfg.epsilons
            cfg.resolved["modes"] = [UpdateMode.NONPC.value]
        if args.command == "compare-modes":
            if getattr(args, "modes", None):
                cfg.modes = [UpdateMode.from_string(m) for m in args.modes.split(",")]
            elif cfg.resolved["modes"] == ["NONPC"]:
                cfg.modes = [UpdateMode.from_string(m) for m in DEFAULT_COMPARE_MODES]
            cfg.resolved["modes"] = [m.value for m in cfg.modes]

        _prepare_out_dir(args.out, args.overwrite)
        if args.command == "run":
            return cmd_run(cfg, args.out, args.jobs)
        if args.command == "sweep-smoothing":
            return cmd_sweep_smoothing(cfg, args.out, args.jobs)
        return cmd_compare_modes(cfg, args.out, args.jobs)
    except (ConfigError, InputError, ParseError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingError as exc:
        print(f"training error: {exc}", file=sys.stderr)
        return EXIT_TRAINING
    except FscilError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
