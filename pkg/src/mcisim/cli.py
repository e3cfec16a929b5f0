"""Headless command-line entry point.

Subcommands: gen-scenario, run, train, eval, replay, serve. Every run is
deterministic for a given seed and writes a manifest (resolved config +
seed + version) next to its outputs so experiments can be reproduced from
the artifact alone. Exit codes: 0 success, 1 validation error, 2 runtime
failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from . import __version__
from .core import canonical_json, load_scenario, save_scenario, validate_scenario
from .events import save_events
from .generate import (
    ConfigError,
    FAMILIES,
    GeneratorConfig,
    family_config,
    generate_scenario,
    standard_scenario,
)
from .metrics import outcome_report
from .policy import (
    GreedyPolicy,
    ObsNorm,
    PPOConfig,
    PolicySpec,
    RandomPolicy,
    build_policy,
    curve_to_csv,
    evaluate,
    load_policy,
    rollout,
    save_policy,
    train_ppo,
)
from .service import load_archive, replay_archive


def _write_manifest(out_path: Path, command: str, config: dict, outputs: list[str]) -> None:
    manifest = {
        "tool": "mcisim",
        "version": __version__,
        "command": command,
        "config": config,
        "outputs": outputs,
    }
    path = out_path.with_suffix(out_path.suffix + ".manifest.json")
    path.write_text(canonical_json(manifest), encoding="utf-8")


def _config_from_args(args) -> GeneratorConfig:
    if args.family:
        cfg = family_config(args.family, seed=args.seed)
        if args.patients is not None:
            cfg = dataclasses.replace(cfg, patient_count=args.patients)
        return cfg
    overrides = {}
    if args.config:
        overrides = json.loads(Path(args.config).read_text(encoding="utf-8"))
    cfg = GeneratorConfig(**overrides)
    if args.patients is not None:
        cfg = dataclasses.replace(cfg, patient_count=args.patients)
    if args.hospitals is not None:
        cfg = dataclasses.replace(cfg, hospital_count=args.hospitals)
    return dataclasses.replace(cfg, seed=args.seed)


def cmd_gen_scenario(args) -> int:
    cfg = _config_from_args(args)
    scenario = generate_scenario(cfg)
    violations = validate_scenario(scenario)
    if violations:
        for v in violations:
            print(str(v), file=sys.stderr)
        return 1
    out = Path(args.out)
    save_scenario(scenario, out)
    _write_manifest(out, "gen-scenario",
                    {"seed": args.seed, "family": args.family,
                     "patients": len(scenario.patients),
                     "hospitals": len(scenario.hospitals)},
                    [str(out)])
    print(f"wrote {out} ({len(scenario.patients)} patients, {len(scenario.hospitals)} hospitals)")
    return 0


def _load_policy_arg(name: str):
    if name == "random":
        return RandomPolicy()
    if name == "greedy":
        return GreedyPolicy()
    if name.startswith("learned:"):
        return build_policy(load_policy(name.split(":", 1)[1]))
    raise ConfigError(f"unknown policy {name!r}; use random, greedy, or learned:<path>")


def cmd_run(args) -> int:
    scenario = load_scenario(args.scenario) if args.scenario else standard_scenario(args.seed)
    policy = _load_policy_arg(args.policy)
    import numpy as np

    rng = np.random.default_rng(np.random.PCG64(args.seed))
    actions: list[dict] = []
    state, total = rollout(policy, scenario, rng=rng, action_log=actions)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    events_path = out_dir / "events.ndjson"
    save_events(state.event_log, events_path)
    report = outcome_report(state.event_log)
    report_path = out_dir / "report.json"
    report_path.write_text(canonical_json(report.to_dict()), encoding="utf-8")
    (out_dir / "report.csv").write_text(report.to_csv(), encoding="utf-8")
    from .core import scenario_to_dict

    archive_path = out_dir / "archive.json"
    archive_path.write_text(canonical_json({
        "schema_version": 1,
        "session_id": f"run-{scenario.id}",
        "mode": "headless",
        "pacing": 0,
        "scenario": scenario_to_dict(scenario),
        "actions": actions,
        "events": [e.to_record() for e in state.event_log],
        "outcome": report.to_dict(),
        "wall_seconds": None,
    }), encoding="utf-8")
    _write_manifest(events_path, "run",
                    {"scenario": scenario.id, "policy": args.policy, "seed": args.seed},
                    [str(events_path), str(report_path), str(archive_path)])
    print(f"episode reward {total:.1f}  mortality {report.mortality_rate:.2f}%  "
          f"match {report.match_rate:.2f}%  completion {report.completion_time:.0f} min")
    return 0


def cmd_train(args) -> int:
    cfg = family_config(args.family, seed=0)
    ppo = PPOConfig(max_env_steps=args.steps, scenario_seed_base=args.scenario_seed_base)
    result = train_ppo(cfg, ppo, seed=args.seed)
    spec = PolicySpec(
        kind="learned",
        caps=(cfg.patient_count, cfg.hospital_count),
        hidden=ppo.hidden,
        norm=ObsNorm(),
        params=result.params.astype("float32"),
        training_seed=args.seed,
    )
    out = Path(args.out)
    save_policy(spec, out)
    curve_path = out.with_suffix(".curve.csv")
    curve_path.write_text(curve_to_csv(result.curve), encoding="utf-8")
    _write_manifest(out, "train",
                    {"family": args.family, "steps": args.steps, "seed": args.seed},
                    [str(out), str(curve_path)])
    final = result.curve[-1][2] if result.curve else float("nan")
    print(f"trained {args.steps} env steps; final mean episode reward {final:.1f}; wrote {out}")
    return 0


def cmd_eval(args) -> int:
    names = [p.strip() for p in args.policies.split(",") if p.strip()]
    cfg_fn = FAMILIES[args.family] if args.family in FAMILIES else None
    if cfg_fn is None:
        raise ConfigError(f"unknown scenario family {args.family!r}")
    scenarios = [generate_scenario(cfg_fn(args.seed0 + k)) for k in range(args.seeds)]
    rows = []
    for name in names:
        policy = _load_policy_arg(name)
        summary = evaluate(policy, scenarios, seed=args.seed, deterministic=args.deterministic)
        rows.append((name, summary))
    header = f"{'policy':<16}{'episodes':>9}{'mean_reward':>13}{'mortality%':>12}{'match%':>9}{'ticks':>8}"
    print(header)
    for name, s in rows:
        print(f"{name:<16}{len(s.episodes):>9}{s.mean_reward:>13.1f}"
              f"{s.mean_mortality_pct:>12.2f}{s.mean_match_pct:>9.2f}{s.mean_completion_ticks:>8.1f}")
    if args.out:
        out = Path(args.out)
        lines = ["policy,episodes,mean_reward,mortality_pct,match_pct,completion_ticks"]
        for name, s in rows:
            lines.append(f"{name},{len(s.episodes)},{s.mean_reward},"
                         f"{s.mean_mortality_pct},{s.mean_match_pct},{s.mean_completion_ticks}")
        out.write_text("\n".join(lines) + "\n", encoding="utf-8")
        _write_manifest(out, "eval",
                        {"policies": names, "family": args.family, "seeds": args.seeds,
                         "seed0": args.seed0, "seed": args.seed},
                        [str(out)])
    return 0


def cmd_replay(args) -> int:
    doc = load_archive(args.archive)
    state = replay_archive(doc)
    report = outcome_report(state.event_log)
    identical = doc["events"] == [e.to_record() for e in state.event_log]
    print(canonical_json({
        "replay_matches_recorded_log": identical,
        "report": report.to_dict(),
    }).strip())
    if args.out:
        Path(args.out).write_text(canonical_json(report.to_dict()), encoding="utf-8")
        _write_manifest(Path(args.out), "replay", {"archive": str(args.archive)}, [args.out])
    return 0 if identical else 2


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    extra = {}
    if args.policy and args.policy.startswith("learned:"):
        extra["learned"] = _load_policy_arg(args.policy)
    app = create_app(storage_dir=args.storage, extra_policies=extra)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mcisim", description=__doc__)
    parser.add_argument("--version", action="version", version=f"mcisim {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    g = sub.add_parser("gen-scenario", help="generate a scenario file")
    g.add_argument("--patients", type=int, default=None)
    g.add_argument("--hospitals", type=int, default=None)
    g.add_argument("--family", choices=sorted(FAMILIES), default=None)
    g.add_argument("--config", help="JSON file of GeneratorConfig overrides")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(fn=cmd_gen_scenario)

    r = sub.add_parser("run", help="roll a policy over one scenario")
    r.add_argument("--scenario", help="scenario file; defaults to a standard exercise")
    r.add_argument("--policy", default="greedy")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--out", required=True, help="output directory")
    r.set_defaults(fn=cmd_run)

    t = sub.add_parser("train", help="train the assignment policy")
    t.add_argument("--family", default="family-10x3", choices=sorted(FAMILIES))
    t.add_argument("--steps", type=int, default=200_000)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--scenario-seed-base", type=int, default=0)
    t.add_argument("--out", required=True, help="policy file path")
    t.set_defaults(fn=cmd_train)

    e = sub.add_parser("eval", help="compare policies over seeded scenario batches")
    e.add_argument("--policies", default="random,greedy")
    e.add_argument("--family", default="standard")
    e.add_argument("--seeds", type=int, default=20)
    e.add_argument("--seed0", type=int, default=10_000, help="first scenario seed")
    e.add_argument("--seed", type=int, default=0, help="policy sampling seed")
    e.add_argument("--deterministic", action="store_true")
    e.add_argument("--out", default=None)
    e.set_defaults(fn=cmd_eval)

    p = sub.add_parser("replay", help="replay a session archive and recompute its report")
    p.add_argument("--archive", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_replay)

    s = sub.add_parser("serve", help="run the HTTP service")
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--port", type=int, default=8321)
    s.add_argument("--storage", default="./session-archives")
    s.add_argument("--policy", default=None, help="learned:<path> to register a trained policy")
    s.set_defaults(fn=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse: usage problems count as validation errors
        return 0 if exc.code in (0, None) else 1
    try:
        return args.fn(args)
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure
        print(f"failed: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
