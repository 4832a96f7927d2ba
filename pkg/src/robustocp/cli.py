"""Command-line front end.

Subcommands::

    robustocp solve       run local reduction, write decision/scenarios/history
    robustocp validate    Monte Carlo validation of a decision file
    robustocp worst-case  one multistart worst-case search for a decision file
    robustocp list-presets

The configuration comes from ``--config FILE``, ``--preset NAME`` or, by
default, the preset matching ``--model``/``--scale``; the remaining flags
override individual fields.

Exit codes: ``solve`` 0 on success, 2 on stall or iteration limit;
``validate`` and ``worst-case`` 0 iff the largest ``G`` found is at most
``tol_G``, 2 otherwise; 1 on any error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
import time
from pathlib import Path

from .artifacts import (
    ArtifactError,
    read_decision,
    write_candidates_csv,
    write_decision,
    write_history_csv,
    write_scenario_set,
)
from .config import ConfigError, RunConfig, build_problem, default_preset, list_presets, load_config, load_preset
from .reduction import RunStatus, WorstCaseSearchError, find_worst_case, run
from .validation import validate, write_report_csv, write_trajectories_csv

logger = logging.getLogger("robustocp")

EXIT_OK, EXIT_ERROR, EXIT_NOT_ROBUST = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_argument_group("configuration")
    src.add_argument("--config", help="TOML run configuration")
    src.add_argument("--preset", help="named preset (see list-presets)")
    src.add_argument("--model", choices=("building", "compressor", "example1"))
    src.add_argument("--scale", choices=("paper", "desk"))
    src.add_argument("--epsilon", type=float, help="scenario similarity threshold")
    src.add_argument("--tol", type=float, help="violation tolerance tol_G")
    src.add_argument("--max-iter", type=int, help="outer iteration limit")
    src.add_argument("--multistarts", type=int, help="start points of the worst-case search")
    src.add_argument("--samples", type=int, help="validation sample count")
    src.add_argument("--seed", type=int, help="seed for worst-case starts and validation samples")
    src.add_argument("--threads", type=int, help="worker threads for the worst-case search")
    src.add_argument("--out", help="output directory")
    src.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    parser = argparse.ArgumentParser(prog="robustocp", description="Robust optimal control by local reduction.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("solve", parents=[common], help="run local reduction")
    p = sub.add_parser("validate", parents=[common], help="Monte Carlo validation of a decision")
    p.add_argument("--decision", required=True, help="decision JSON file")
    p.add_argument("--trajectories", type=int, help="dump trajectories of the first N samples")
    p = sub.add_parser("worst-case", parents=[common], help="worst-case search for a decision")
    p.add_argument("--decision", required=True, help="decision JSON file")
    sub.add_parser("list-presets", help="list built-in presets")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Base configuration from file/preset/model, then flag overrides."""
    if args.config:
        cfg = load_config(args.config)
    elif args.preset:
        cfg = load_preset(args.preset)
    elif args.model:
        cfg = load_preset(default_preset(args.model, args.scale or "desk"))
    else:
        raise ConfigError("one of --config, --preset or --model is required")
    if args.model:
        cfg.model = args.model
    if args.scale:
        cfg.scale = args.scale
    changes = {
        "epsilon": args.epsilon,
        "tol_G": args.tol,
        "max_iterations": args.max_iter,
        "multistarts": args.multistarts,
        "seed": args.seed,
        "threads": args.threads,
    }
    changes = {k: v for k, v in changes.items() if v is not None}
    try:
        cfg.reduction = dataclasses.replace(cfg.reduction, **changes)
    except ValueError as exc:
        raise ConfigError(str(exc), field="command line") from None
    if args.samples is not None:
        if args.samples < 1:
            raise ConfigError("must be at least 1", field="--samples")
        cfg.samples = args.samples
    if args.seed is not None:
        cfg.validation_seed = args.seed
    if args.out:
        cfg.out = args.out
    if getattr(args, "trajectories", None) is not None:
        cfg.trajectories = args.trajectories
    return cfg


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_solve(cfg: RunConfig) -> int:
    problem = build_problem(cfg)
    out = _out_dir(cfg)
    handler = logging.FileHandler(out / "run.log", mode="w")
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
    logging.getLogger("robustocp").addHandler(handler)
    try:
        t0 = time.perf_counter()
        result = run(problem, cfg.reduction)
        elapsed = time.perf_counter() - t0
    finally:
        logging.getLogger("robustocp").removeHandler(handler)
        handler.close()
    write_decision(result.decision, out / "decision.json", model=problem.name)
    write_scenario_set(result.scenario_set, out / "scenarios.json")
    write_history_csv(result.history, out / "history.csv")
    summary = {
        "model": problem.name,
        "status": result.status.value,
        "iterations": len(result.history),
        "scenario_count": len(result.scenario_set),
        "final_g_max": result.history[-1].g_max if result.history else None,
        "gamma": result.decision.gamma,
        "elapsed_s": elapsed,
        "reduction": dataclasses.asdict(cfg.reduction),
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=1) + "\n")
    print(
        f"{problem.name}: {result.status.value} after {len(result.history)} iterations, "
        f"{len(result.scenario_set)} scenarios, gamma = {result.decision.gamma:.10g} ({elapsed:.1f} s)"
    )
    return EXIT_OK if result.status is RunStatus.SUCCESS else EXIT_NOT_ROBUST


def cmd_validate(cfg: RunConfig, decision_path: str) -> int:
    problem = build_problem(cfg)
    decision = read_decision(decision_path, problem)
    out = _out_dir(cfg)
    report = validate(problem, decision, cfg.samples, cfg.validation_seed)
    write_report_csv(report, out / "validation.csv")
    summary = report.summary()
    summary["worst_d"] = report.worst_scenario.d.tolist()
    (out / "validation_summary.json").write_text(json.dumps(summary, indent=1) + "\n")
    if cfg.trajectories:
        write_trajectories_csv(problem, decision, out / "trajectories.csv", min(cfg.trajectories, cfg.samples), cfg.validation_seed)
    print(
        f"{problem.name}: max violation {report.max_violation:.6g} over {report.n_samples} samples "
        f"(rate {report.violation_rate:.4f}, diverged {report.diverged})"
    )
    return EXIT_OK if report.max_violation <= cfg.reduction.tol_G else EXIT_NOT_ROBUST


def cmd_worst_case(cfg: RunConfig, decision_path: str) -> int:
    problem = build_problem(cfg)
    decision = read_decision(decision_path, problem)
    out = _out_dir(cfg)
    candidates = find_worst_case(problem, decision, cfg.reduction)
    write_candidates_csv(candidates, out / "candidates.csv")
    write_scenario_set([c.scenario for c in candidates], out / "candidates.json", epsilon=cfg.reduction.epsilon)
    top = candidates[0]
    print(f"{problem.name}: top G = {top.G:.10g} ({top.component}), d = {top.scenario.d.tolist()}")
    return EXIT_OK if top.G <= cfg.reduction.tol_G else EXIT_NOT_ROBUST


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "list-presets":
        for name in list_presets():
            print(name)
        return EXIT_OK
    if args.verbose:
        logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    logging.getLogger("robustocp").setLevel(logging.INFO)
    try:
        cfg = resolve_config(args)
        if args.command == "solve":
            return cmd_solve(cfg)
        if args.command == "validate":
            return cmd_validate(cfg, args.decision)
        return cmd_worst_case(cfg, args.decision)
    except (ConfigError, ArtifactError, WorstCaseSearchError) as exc:
        print(f"error: {exc}", file=sys.stderr)
    except OSError as exc:
        print(f"error: {exc.filename or ''}: {exc.strerror}", file=sys.stderr)
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
