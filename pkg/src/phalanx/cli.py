"""Command-line front end: ability suites, scaling studies, replays, reports.

Exit status is nonzero only for configuration problems (unknown names, missing
files, unusable provider settings).  Episode results — losses, invalid plans,
ties — are data, reported on stdout with exit status 0.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .bench import (
    ABILITIES,
    DEFAULT_SCALE_COUNTS,
    emit_report,
    mock_config,
    run_ability_suite,
    run_scaling_study,
)
from .llm import ProviderConfig
from .scenario import (
    SCENARIO_NAMES,
    ReplayVersionError,
    load_replay,
    load_scenario,
    replay_episode,
    run_episode,
    save_replay,
)


class ConfigError(Exception):
    """User-facing configuration problem; maps to exit status 2."""


def _provider_from_args(args) -> ProviderConfig:
    if args.provider == "mock":
        config = mock_config(args.mock_fixtures)
        config.model = args.model or config.model
        return config
    credential_env = {
        "openai": "OPENAI_API_KEY",
        "anthropic": "ANTHROPIC_API_KEY",
    }.get(args.provider)
    if credential_env is None:
        raise ConfigError(f"unknown provider {args.provider!r}")
    if not args.model:
        raise ConfigError(f"--model is required for provider {args.provider!r}")
    return ProviderConfig(
        provider=args.provider,
        model=args.model,
        temperature=args.temperature,
        credential_env=credential_env,
    )


def _cmd_run(args) -> int:
    if args.scenario and args.ability:
        raise ConfigError("pass --scenario or --ability, not both")
    if args.scenario:
        if args.scenario not in SCENARIO_NAMES:
            raise ConfigError(
                f"unknown scenario {args.scenario!r}; choose from {SCENARIO_NAMES}"
            )
        if not args.plan:
            raise ConfigError("--scenario mode needs --plan FILE (a plan or full response text)")
        plan_path = Path(args.plan)
        if not plan_path.is_file():
            raise ConfigError(f"plan file not found: {plan_path}")
        scenario = load_scenario(args.scenario)
        record = run_episode(scenario, plan_path.read_text(), args.seed)
        m = record.metrics
        print(
            f"{scenario.name}: {record.outcome.value} after {m.ticks_elapsed} ticks "
            f"(allies {m.ally_survivors}, enemies {m.enemy_survivors})"
        )
        for line in record.diagnostics:
            print(f"  note: {line}")
        if args.out:
            out = Path(args.out)
            out.mkdir(parents=True, exist_ok=True)
            path = out / f"{scenario.name}_seed{args.seed}.json"
            save_replay(record, path)
            print(f"replay written to {path}")
        return 0

    abilities = tuple(args.ability) if args.ability else ABILITIES
    for ability in abilities:
        if ability not in ABILITIES:
            raise ConfigError(f"unknown ability {ability!r}; choose from {ABILITIES}")
    config = _provider_from_args(args)
    rows = run_ability_suite(
        config, args.seed, abilities=abilities, alone=args.alone, out_dir=args.out,
        parallelism=args.parallelism,
    )
    print(emit_report(rows, args.out), end="")
    if args.out:
        print(f"artifacts written under {args.out}")
    return 0


def _cmd_scale(args) -> int:
    config = _provider_from_args(args)
    rows = run_scaling_study(
        config, counts=tuple(args.counts), seed=args.seed, out_dir=args.out,
        parallelism=args.parallelism,
    )
    print(emit_report(rows, args.out), end="")
    return 0


def _cmd_replay(args) -> int:
    path = Path(args.file)
    if not path.is_file():
        raise ConfigError(f"replay file not found: {path}")
    try:
        record = load_replay(path)
        result = replay_episode(record)
    except ReplayVersionError as err:
        raise ConfigError(str(err)) from err
    same = result.outcome is record.outcome
    print(f"recorded: {record.outcome.value}  (seed {record.seed}, scenario {record.scenario})")
    print(f"replayed: {result.outcome.value}")
    print("deterministic replay OK" if same else "MISMATCH: engine no longer reproduces this replay")
    return 0


def _cmd_report(args) -> int:
    src = Path(args.infile)
    if not src.is_file():
        raise ConfigError(f"results file not found: {src}")
    doc = json.loads(src.read_text())
    from .bench import ResultRow
    from .scenario import EpisodeMetrics, Outcome

    rows = []
    for r in doc.get("rows", []):
        rows.append(
            ResultRow(
                ability=r["ability"], label=r["label"], scenario=r["scenario"],
                model=r["model"], prompt_index=r["prompt_index"], seed=r["seed"],
                outcome=Outcome(r["outcome"]), metrics=EpisodeMetrics(**r["metrics"]),
                latency=0.0, alone=r.get("alone", False),
                scaled_total=r.get("scaled_total"), temperature=r.get("temperature"),
                diagnostics=list(r.get("diagnostics", [])), replay=r.get("replay"),
            )
        )
    if not rows:
        raise ConfigError(f"{src} contains no result rows")
    report = emit_report(rows)
    if args.out:
        Path(args.out).write_text(report)
        print(f"report written to {args.out}")
    else:
        print(report, end="")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .server import create_app

    config = _provider_from_args(args)
    app = create_app(provider=config, default_pace=args.pace)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="phalanx",
        description="Swarm-command benchmark: run ability suites, scale studies, "
        "replays, reports, and the interactive session server.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_provider_args(p):
        p.add_argument("--provider", default="mock",
                       help="mock | openai | anthropic (default mock)")
        p.add_argument("--model", default=None, help="model name for live providers")
        p.add_argument("--temperature", type=float, default=0.0)
        p.add_argument("--mock-fixtures", metavar="DIR", default=None,
                       help="response fixture directory for the mock provider")
        p.add_argument("--parallelism", type=int, default=1)

    run_p = sub.add_parser("run", help="run ability suites or a single plan file")
    run_p.add_argument("--ability", action="append",
                       help="ability test name (repeatable; default: all five)")
    run_p.add_argument("--scenario", help="run one scenario with --plan instead of a suite")
    run_p.add_argument("--plan", help="plan text file for --scenario mode")
    run_p.add_argument("--alone", action="store_true",
                       help="use the generic unassisted prompt corpus")
    run_p.add_argument("--seed", type=int, default=1)
    run_p.add_argument("--out", help="output directory for report + replays")
    add_provider_args(run_p)
    run_p.set_defaults(func=_cmd_run)

    scale_p = sub.add_parser("scale", help="rerun one ability at several unit counts")
    scale_p.add_argument("--counts", type=int, nargs="+", default=list(DEFAULT_SCALE_COUNTS))
    scale_p.add_argument("--seed", type=int, default=1)
    scale_p.add_argument("--out", help="output directory for report + replays")
    add_provider_args(scale_p)
    scale_p.set_defaults(func=_cmd_scale)

    replay_p = sub.add_parser("replay", help="re-execute a saved replay and compare")
    replay_p.add_argument("--file", required=True)
    replay_p.set_defaults(func=_cmd_replay)

    report_p = sub.add_parser("report", help="re-render a report from results.json")
    report_p.add_argument("--in", dest="infile", required=True)
    report_p.add_argument("--out", default=None)
    report_p.set_defaults(func=_cmd_report)

    serve_p = sub.add_parser("serve", help="start the interactive session server")
    serve_p.add_argument("--host", default="127.0.0.1")
    serve_p.add_argument("--port", type=int, default=8000)
    serve_p.add_argument("--pace", type=float, default=10.0,
                         help="default ticks per second when streaming (0 = unpaced)")
    add_provider_args(serve_p)
    serve_p.set_defaults(func=_cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
