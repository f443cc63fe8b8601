"""Command-line entry point: run scenarios, batch directories, re-export."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import plots, runner
from .scenario import Scenario, ScenarioError, load_scenario, load_scenario_dir

_TRANSPORT_FLAG = {"inproc": "in_process", "udp": "loopback_udp"}

_EPILOG = """\
UDP endpoints (transport udp) default to 127.0.0.1 ports 47001 (detections),
47002 (tracker) and 48001+i (per-chaser commands).  Override with the
environment variables SWARMDOCK_DETECTION_PORT, SWARMDOCK_TRACKER_PORT and
SWARMDOCK_COMMAND_PORT_BASE (0 selects ephemeral ports).

Exit status is 0 when the run completed, whatever the mission outcome;
nonzero only for configuration or I/O errors.
"""


def _apply_overrides(sc: Scenario, args) -> Scenario:
    if args.seed is not None:
        sc = replace(sc, seed=args.seed)
    if args.transport is not None:
        sc = replace(sc, transport=_TRANSPORT_FLAG[args.transport])
    return sc


def _write_run_outputs(report, sc: Scenario, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    runner.export_report_json(report, out_dir / "report.json")
    runner.export_trajectory_csv(report, out_dir / "trajectory.csv")
    plots.plot_run(report, out_dir / "trajectory.png", scenario=sc)


def _cmd_run(args) -> int:
    sc = _apply_overrides(load_scenario(args.scenario), args)
    report = runner.run(sc)
    out_dir = Path(args.out) / sc.name
    _write_run_outputs(report, sc, out_dir)
    print(runner.format_summary_table([report]))
    print(f"outputs: {out_dir}")
    return 0


def _cmd_batch(args) -> int:
    scenarios = [_apply_overrides(sc, args) for sc in load_scenario_dir(args.scenario_dir)]
    out_root = Path(args.out)
    reports = []
    for sc in scenarios:
        report = runner.run(sc)
        reports.append(report)
        _write_run_outputs(report, sc, out_root / sc.name)
    runner.export_summary_csv(reports, out_root / "summary.csv")
    table = runner.format_summary_table(reports)
    (out_root / "summary.txt").write_text(table + "\n", encoding="utf-8")
    plots.plot_batch(reports, out_root / "summary.png")
    print(table)
    successes = sum(1 for r in reports if r.success)
    print(f"{successes}/{len(reports)} runs ended with at least two chasers docked or orbiting")
    print(f"outputs: {out_root}")
    return 0


def _cmd_export(args) -> int:
    raw = json.loads(Path(args.report).read_text(encoding="utf-8"))
    report = runner.report_from_dict(raw)
    out = Path(args.out) if args.out else Path(args.report).with_suffix(f".{args.format}")
    if args.format == "csv":
        runner.export_trajectory_csv(report, out)
    else:
        runner.export_report_json(report, out)
    print(f"wrote {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="swarmdock",
        description="Deterministic multi-chaser rendezvous and docking simulator.",
        epilog=_EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=None, help="override the scenario RNG seed")
        p.add_argument(
            "--transport",
            choices=sorted(_TRANSPORT_FLAG),
            default=None,
            help="override the scenario transport",
        )
        p.add_argument("--out", default="out", help="output directory (default: ./out)")

    p_run = sub.add_parser("run", help="run one scenario file")
    p_run.add_argument("scenario", help="scenario YAML file")
    common(p_run)
    p_run.set_defaults(func=_cmd_run)

    p_batch = sub.add_parser("batch", help="run every scenario in a directory")
    p_batch.add_argument("scenario_dir", help="directory of scenario YAML files")
    common(p_batch)
    p_batch.set_defaults(func=_cmd_batch)

    p_export = sub.add_parser("export", help="re-export a stored report")
    p_export.add_argument("report", help="report.json produced by run/batch")
    p_export.add_argument("--format", choices=("csv", "json"), required=True)
    p_export.add_argument("--out", default=None, help="output file path")
    p_export.set_defaults(func=_cmd_export)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, OSError, json.JSONDecodeError, KeyError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
