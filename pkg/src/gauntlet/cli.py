"""Command line entry point: run experiments, list presets, verify reports."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import ConfigError, GauntletError
from .presets import ExperimentConfig, get_preset, list_presets
from .reports import run_experiment, verify_report


def _load_config(target: str) -> ExperimentConfig:
    path = Path(target)
    if path.suffix == ".json" or path.exists():
        try:
            return ExperimentConfig.from_json(json.loads(path.read_text()))
        except OSError as exc:
            raise ConfigError(f"cannot read config file {target}: {exc}") from exc
    return get_preset(target)


def _cmd_run(args) -> int:
    config = _load_config(args.target)
    if args.seed is not None:
        config.seed = args.seed
    if args.trials is not None:
        config.trials = args.trials
        config.validate()
    out = args.out or config.out or "reports"
    report = run_experiment(config, out_dir=out, render_figures=not args.no_figures)
    agg = report.aggregates
    print(f"{config.experiment}: {agg['rows']} trials in {report.wall_clock_s:.2f}s")
    print(
        f"  success_rate={agg['success_rate']:.4f}"
        f" metric mean={agg['metric_mean']:.6g}"
        f" min={agg['metric_min']:.6g} max={agg['metric_max']:.6g}"
    )
    print(f"  wrote {report.out_dir}/rows.csv")
    for fig in report.figure_paths:
        print(f"  wrote {fig}")
    return 0


def _cmd_list(args) -> int:
    for name, config in sorted(list_presets().items()):
        mech = config.mechanism["id"] if config.mechanism else "-"
        attack = config.attack["id"] if config.attack else "-"
        game = config.game["id"] if config.game else "-"
        print(f"{name:24s} mech={mech:14s} attack={attack:18s} game={game:16s} trials={config.trials}")
    return 0


def _cmd_verify(args) -> int:
    verdict = verify_report(args.report_dir)
    print(f"{args.report_dir}: {verdict}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gauntlet",
        description="Deletion-attack laboratory: run attack/game experiments and verify their reports.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a preset or a JSON config file")
    p_run.add_argument("target", help="preset name or path to a config.json")
    p_run.add_argument("--seed", type=int, default=None, help="override the root seed")
    p_run.add_argument("--trials", type=int, default=None, help="override the trial count")
    p_run.add_argument("--out", default=None, help="output directory (default: reports/)")
    p_run.add_argument("--no-figures", action="store_true", help="skip figure rendering")
    p_run.set_defaults(fn=_cmd_run)

    p_list = sub.add_parser("list", help="list built-in presets")
    p_list.set_defaults(fn=_cmd_list)

    p_verify = sub.add_parser("verify", help="verify a written report directory")
    p_verify.add_argument("report_dir")
    p_verify.set_defaults(fn=_cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except GauntletError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
