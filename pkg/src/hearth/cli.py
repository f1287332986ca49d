"""Command line entry points: run scenarios headless, serve the gateway API,
replay logs, and print metric reports.

Exit codes: 0 all targets pass, 1 a target failed, 2 scenario schema
violation, 3 log integrity error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from importlib import resources
from pathlib import Path

from .home import HomeSimulation, Scenario, ScenarioError
from .persistence import EventLog, IntegrityError, load_log, replay
from .simnet import MetricsTargets, report_text, run_report


def resolve_scenario_path(name_or_path: str) -> Path:
    path = Path(name_or_path)
    if path.exists():
        return path
    bundled = resources.files("hearth") / "scenarios" / f"{name_or_path}.json"
    with resources.as_file(bundled) as p:
        if p.exists():
            return p
    raise FileNotFoundError(f"no scenario file or bundled scenario {name_or_path!r}")


def default_log_path(scenario_name: str) -> Path:
    log_dir = Path(os.environ.get("HEARTH_LOG_DIR", "logs"))
    return log_dir / f"{scenario_name}.jsonl"


def _load_scenario(args) -> Scenario:
    path = resolve_scenario_path(args.scenario)
    return Scenario.load(path, seed=getattr(args, "seed", None),
                         duration_s=getattr(args, "duration", None))


def cmd_run(args) -> int:
    try:
        scenario = _load_scenario(args)
    except (ScenarioError, FileNotFoundError) as e:
        if isinstance(e, ScenarioError):
            for problem in e.problems:
                print(f"scenario error: {problem}", file=sys.stderr)
        else:
            print(str(e), file=sys.stderr)
        return 2
    log_path = Path(args.log) if args.log else default_log_path(scenario.name)
    log = EventLog(log_path)
    sim = HomeSimulation(scenario, log)
    try:
        sim.typecheck()
        sim.run()
    except IntegrityError as e:
        print(f"integrity error: {e}", file=sys.stderr)
        return 3
    finally:
        log.close()
    report = run_report(sim.metrics, MetricsTargets())
    report_path = log_path.with_suffix(".report.json")
    report_path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    print(f"log: {log_path}")
    print(f"report: {report_path}")
    print(report_text(report))
    return 0 if report["all_targets_pass"] else 1


def cmd_serve(args) -> int:
    import uvicorn

    from .api import PacedRunner, create_app

    try:
        scenario = _load_scenario(args)
    except (ScenarioError, FileNotFoundError) as e:
        print(str(e), file=sys.stderr)
        return 2
    log_path = Path(args.log) if args.log else default_log_path(scenario.name)
    sim = HomeSimulation(scenario, EventLog(log_path))
    runner = PacedRunner(sim, pace=args.pace)
    app = create_app(runner)
    runner.start()
    try:
        uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    finally:
        runner.stop()
        sim.log.close()
    return 0


def cmd_replay(args) -> int:
    try:
        records = load_log(Path(args.log))
        result = replay(records)
    except (OSError, IntegrityError) as e:
        print(f"replay failed: {e}", file=sys.stderr)
        return 3
    print(json.dumps(result.snapshot, indent=2, sort_keys=True))
    return 0


def cmd_report(args) -> int:
    try:
        records = load_log(Path(args.log))
        result = replay(records)
    except (OSError, IntegrityError) as e:
        print(f"report failed: {e}", file=sys.stderr)
        return 3
    report = run_report(result.metrics, MetricsTargets())
    print(report_text(report))
    return 0 if report["all_targets_pass"] else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="hearth",
                                     description="deterministic smart-home simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario headless")
    p_run.add_argument("--scenario", required=True, help="path or bundled scenario name")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--duration", type=float, default=None, help="override duration (s)")
    p_run.add_argument("--log", default=None, help="event log path")
    p_run.set_defaults(func=cmd_run)

    p_serve = sub.add_parser("serve", help="serve the gateway API for the dashboard")
    p_serve.add_argument("--scenario", required=True)
    p_serve.add_argument("--port", type=int, default=8080)
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--pace", type=float, default=1.0,
                         help="virtual seconds per wall second")
    p_serve.add_argument("--log", default=None)
    p_serve.set_defaults(func=cmd_serve)

    p_replay = sub.add_parser("replay", help="reconstruct final state from a log")
    p_replay.add_argument("--log", required=True)
    p_replay.set_defaults(func=cmd_replay)

    p_report = sub.add_parser("report", help="metrics summary from a log")
    p_report.add_argument("--log", required=True)
    p_report.set_defaults(func=cmd_report)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
