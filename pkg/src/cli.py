"""Command-line entry point: ``python -m src.cli <command> [options]``.

Exit codes: 0 on success, 2 for configuration errors, 3 for I/O failures.
Diagnostics go to stderr; stdout carries a single summary line.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .errors import ConfigError
from .evaluation.eval_metrics import format_summary, load_trajectory, save_step_log, save_summary, write_summary_section
from .harness.config import (
    PROJECT_ROOT,
    apply_overrides,
    parse_config,
    parse_pairs,
    read_params,
    read_paths,
    resolve_output_dir,
)
from .harness.demos import SHARED_STRATEGIES, demo_oco_counterexample, demo_shared_controls
from .harness.experiment import run_experiment, run_replicas, write_run
from .harness.regret import measure_regret_terms, offline_optimal_dac

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mactrl", description="Multi-agent regret-minimizing control experiments.")
    parser.add_argument("--verbose", "-v", action="store_true", help="debug logging on stderr")
    commands = parser.add_subparsers(dest="command", required=True)

    def common(sub: argparse.ArgumentParser) -> None:
        sub.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
        sub.add_argument("--output-dir", type=Path, default=None)

    run = commands.add_parser("run", help="run one configured experiment")
    run.add_argument("--config", type=Path, required=True, help="flat key = value run file")
    run.add_argument("--scenario", default=None)
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--replicas", type=int, default=1)
    common(run)

    admire = commands.add_parser("admire", help="ADMIRE aircraft preset")
    admire.add_argument("--config", type=Path, default=None)
    admire.add_argument("--seed", type=int, default=None)
    admire.add_argument("--replicas", type=int, default=1)
    common(admire)

    oco = commands.add_parser("demo-oco", help="two-player counterexample game")
    common(oco)

    shared = commands.add_parser("demo-shared-controls", help="regret without shared controls")
    shared.add_argument("--strategy", choices=sorted(SHARED_STRATEGIES), default="constant_0.5")
    common(shared)

    regret = commands.add_parser("regret-report", help="regret decomposition of a learned run")
    regret.add_argument("--trajectory", type=Path, default=None)
    regret.add_argument("--config", type=Path, default=None)
    regret.add_argument("--seed", type=int, default=None)
    common(regret)
    return parser


def _read_text(path: Optional[Path]) -> str:
    if path is None:
        return ""
    if not path.exists():
        raise ConfigError(f"Configuration file {path} does not exist.")
    return path.read_text(encoding="utf-8")


def _load_config(args: argparse.Namespace, scenario: Optional[str] = None):
    cfg = parse_config(_read_text(args.config), scenario=scenario)
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.output_dir is not None:
        overrides.append(f"output_dir={args.output_dir}")
    return apply_overrides(cfg, overrides)


def _demo_options(overrides: Sequence[str], allowed: dict) -> dict:
    pairs = parse_pairs("\n".join(overrides))
    unknown = sorted(set(pairs) - set(allowed))
    if unknown:
        raise ConfigError(f"Unknown option(s) for this demo: {', '.join(unknown)}.")
    options = dict(allowed)
    try:
        options.update({key: type(allowed[key])(value) for key, value in pairs.items()})
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return options


def _output_root(args: argparse.Namespace, paths: dict) -> Path:
    root = Path(args.output_dir or paths.get("output_dir", "reports/runs"))
    return root if root.is_absolute() else PROJECT_ROOT / root


def _record(paths: dict, root: Path, section: str, summary: dict) -> None:
    write_summary_section(root / paths.get("summary_file", "summary.md"), section, format_summary(summary))


def _run(args: argparse.Namespace, scenario: Optional[str]) -> str:
    cfg = _load_config(args, scenario)
    paths = read_paths()
    params = read_params()
    base = resolve_output_dir(cfg, paths)
    if args.replicas > 1:
        logs = run_replicas(cfg, args.replicas, params.get("global", {}).get("n_jobs", -1), params)
    else:
        logs = [run_experiment(cfg, params)]
    for log in logs:
        summary = log.summary
        target = base / f"{summary['scenario']}_{summary['controller']}_seed{summary['seed']}"
        write_run(log, target, paths)
        _record(paths, base, f"{summary['scenario']} / {summary['controller']} / seed {summary['seed']}", summary)
    avg = sum(log.summary["avg_cost"] for log in logs) / len(logs)
    worst = max(log.summary["max_state_norm"] for log in logs)
    return f"{cfg.scenario} {cfg.controller} runs={len(logs)} avg_cost={avg:.6g} max_state_norm={worst:.6g} out={base}"


def _demo_oco(args: argparse.Namespace) -> str:
    options = _demo_options(args.overrides, {"T": 1000})
    paths = read_paths()
    root = _output_root(args, paths)
    frame, summary = demo_oco_counterexample(options["T"])
    save_step_log(frame, root / paths.get("files", {}).get("demo_oco", "demo_oco.csv"))
    _record(paths, root, "demo-oco", summary)
    return (
        f"demo-oco T={summary['T']} scripted_joint_loss={summary['scripted_joint_loss']:.6g} "
        f"scripted_player_regret={summary['scripted_player1_regret']:.6g} "
        f"ogd_multiagent_regret={summary['ogd_multiagent_regret']:.6g}"
    )


def _demo_shared(args: argparse.Namespace) -> str:
    options = _demo_options(args.overrides, {"T": 1000})
    paths = read_paths()
    root = _output_root(args, paths)
    frame, summary = demo_shared_controls(args.strategy, options["T"])
    save_step_log(frame, root / paths.get("files", {}).get("demo_shared_controls", "demo_shared_controls.csv"))
    _record(paths, root, f"demo-shared-controls / {args.strategy}", summary)
    return f"demo-shared-controls strategy={args.strategy} max_regret={summary['max_regret']:.6g}"


def _regret_report(args: argparse.Namespace) -> str:
    paths = read_paths()
    params = read_params()
    if args.trajectory is not None:
        trajectory = load_trajectory(args.trajectory)
        target = Path(args.output_dir) if args.output_dir else args.trajectory.parent
    elif args.config is not None:
        cfg = _load_config(args)
        log = run_experiment(cfg, params)
        trajectory = log.trajectory
        target = resolve_output_dir(cfg, paths) / f"{cfg.scenario}_{cfg.controller}_seed{cfg.seed}"
        write_run(log, target, paths)
    else:
        raise ConfigError("regret-report needs --trajectory or --config.")
    try:
        offline = offline_optimal_dac(trajectory, params.get("oracle"))
        report = measure_regret_terms(trajectory, offline, trajectory.get("epsilon", float("nan")))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    summary = report.as_dict()
    save_summary(summary, target / paths.get("files", {}).get("regret", "regret.txt"))
    return (
        f"regret-report average_regret={summary['average_regret']:.6g} "
        f"identity_gap={summary['identity_gap']:.3g} within_bound={str(summary['within_bound']).lower()}"
    )


def dispatch(args: argparse.Namespace) -> str:
    if args.command == "run":
        return _run(args, args.scenario)
    if args.command == "admire":
        return _run(args, "admire")
    if args.command == "demo-oco":
        return _demo_oco(args)
    if args.command == "demo-shared-controls":
        return _demo_shared(args)
    return _regret_report(args)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        line = dispatch(args)
    except ConfigError as exc:
        logger.error("%s", exc)
        return EXIT_CONFIG
    except OSError as exc:
        logger.error("I/O failure: %s", exc)
        return EXIT_IO
    print(line)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
