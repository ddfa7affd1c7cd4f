"""Command-line entry point.

Subcommands: run-qask, metrics, dataset, nav-sim, serve-console.
Exit codes: 0 ok, 1 validation failure, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys
import threading
from pathlib import Path

from . import core, dataset, engine, metrics, navsim
from .agents import AgentConfig
from .cache import resolve_cache_dir

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


def _load_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _parse_ratio(text: str) -> tuple[int, int]:
    q, _, p = text.partition(":")
    return int(q), int(p or "1")


def cmd_run_qask(args) -> int:
    specs = core.load_manifest(args.manifest)
    violations = core.validate_manifest(specs)
    if violations:
        for v in violations:
            print(f"manifest violation: {v}", file=sys.stderr)
        return EXIT_VALIDATION
    questioner_cfg = AgentConfig.load(args.questioner)
    oracle_cfgs = [AgentConfig.load(p) for p in args.oracle]
    if not oracle_cfgs:
        print("at least one --oracle config is required", file=sys.stderr)
        return EXIT_VALIDATION
    engine_cfg = engine.EngineConfig(
        max_questions_per_observation=args.max_questions,
        description_level=args.level,
        stop_on_wrong=not args.no_stop_on_wrong,
        seed=args.seed,
    )
    cap = engine_cfg.max_questions_per_observation
    planned_episodes = len(specs) * len(oracle_cfgs)
    planned_requests = sum(s.n for s in specs) * (cap + 2) * len(oracle_cfgs)
    if args.dry_run:
        print(f"planned episodes: {planned_episodes}")
        print(f"planned agent calls (upper bound): {planned_requests}")
        return EXIT_OK
    outcome = engine.run_qask(
        specs,
        questioner_cfg,
        oracle_cfgs,
        engine_cfg,
        run_dir=args.out,
        cache_dir=resolve_cache_dir(args.cache_dir),
        workers=args.workers,
        replay_only=args.replay,
    )
    print(f"ran {len(outcome.results)} episodes "
          f"({outcome.outbound_requests} outbound requests); run dir: {args.out}")
    return EXIT_OK


def cmd_metrics(args) -> int:
    run_dir = Path(args.run_dir)
    results = engine.load_results(run_dir / "results.jsonl")
    manifest = _load_json(run_dir / "run_manifest.json")
    lengths = {k: int(v) for k, v in manifest["episode_lengths"].items()}
    reports, means = metrics.run_reports(results, lengths)
    metrics.write_metrics(run_dir, reports, means, replayed=manifest.get("replay", False))
    for rep in means:
        print(f"{rep.description_level} mean: SR={rep.sr:.4f} FR={rep.fr:.4f} "
              f"NQ={rep.nq:.4f} Time={rep.time:.2f}s over {rep.n_episodes} episodes")
    return EXIT_OK


def cmd_dataset(args) -> int:
    if args.dataset_cmd == "validate":
        report = dataset.validate_samples(args.file)
        for lineno, msg in report.violations:
            print(f"line {lineno}: {msg}")
        print(f"{report.n_valid}/{report.n_lines} lines valid")
        return EXIT_OK if report.ok else EXIT_VALIDATION
    if args.dataset_cmd == "stats":
        stats = dataset.split_stats(args.file)
        for split in sorted(stats):
            s = stats[split]
            print(f"{split}: {s.count} samples, scores {s.score_histogram}")
        return EXIT_OK
    if args.dataset_cmd == "harvest":
        results = engine.load_results(args.results)
        specs = {s.id: s for s in core.load_manifest(args.manifest)}
        samples, skipped = dataset.harvest_from_runs(results, specs, sample_split=args.split)
        dataset.write_samples(samples, args.out)
        print(f"wrote {len(samples)} samples ({skipped} turns skipped) to {args.out}")
        return EXIT_OK
    if args.dataset_cmd == "sft-export":
        questions = dataset.read_samples(args.questions)
        plain = dataset.read_samples(args.plain)
        records = dataset.build_sft_mix(questions, plain, ratio=_parse_ratio(args.ratio),
                                        seed=args.seed)
        dataset.write_sft_export(records, args.out)
        print(f"wrote {len(records)} sft records to {args.out}")
        return EXIT_OK
    raise AssertionError(args.dataset_cmd)


class _AcceptAllResolver:
    final = "accept"
    ctx_out: tuple = ()
    asks = 0

    def __call__(self, d, obs, ctx):
        return self


def cmd_nav_sim(args) -> int:
    world = navsim.World.load(args.world)
    spec = core.NavEpisodeSpec.from_dict(_load_json(args.spec))
    if args.policy == "waypoint":
        waypoints = _load_json(args.waypoints) if args.waypoints else [spec.target_position]
        policy = navsim.WaypointPolicy(waypoints)
    elif args.policy == "random":
        policy = navsim.RandomWalkPolicy(seed=args.seed)
    else:
        policy = navsim.GreedyObjectPolicy()

    if args.questioner and args.oracle:
        from . import controller
        from .agents import make_oracle, make_questioner

        model = make_questioner(AgentConfig.load(args.questioner))
        oracle = make_oracle(AgentConfig.load(args.oracle))
        target_bytes = core.canonical_image_bytes(world.target.image_ref)

        def resolver(d, obs, ctx):
            return controller.resolve_detection(
                d, obs, model, oracle, cap=args.max_questions,
                target_image=target_bytes, category=world.target.category, ctx=ctx,
            )
    else:
        resolver = _AcceptAllResolver()

    result = navsim.run_nav_episode(world, spec, policy, resolver)
    navsim.append_nav_result(args.out, result)
    print(f"success={result.success} path_length={result.path_length:.3f} "
          f"steps={result.steps_used} questions={result.questions_asked}")
    return EXIT_OK


def cmd_serve_console(args) -> int:
    import uvicorn

    from .bridge import SessionManager, build_app

    config = _load_json(args.run_config) if args.run_config else {}
    manager = SessionManager()
    app = build_app(manager, token=config.get("token"),
                    static_dir=config.get("static_dir"))

    if config.get("manifest"):
        specs = core.load_manifest(config["manifest"])
        questioner_cfg = AgentConfig.from_dict(
            config["questioner"] if isinstance(config["questioner"], dict)
            else _load_json(config["questioner"])
        )
        oracle_cfg = AgentConfig(id=config.get("oracle_id", "human"), kind="human",
                                 params=config.get("oracle_params", {}))
        engine_cfg = engine.EngineConfig(
            max_questions_per_observation=config.get("max_questions", 5),
            description_level=config.get("level", "col_ctx_feat"),
            seed=config.get("seed", 0),
        )

        def run():
            engine.run_qask(specs, questioner_cfg, [oracle_cfg], engine_cfg,
                            run_dir=config.get("run_dir"), workers=1,
                            session_manager=manager)

        threading.Thread(target=run, daemon=True).start()

    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qask")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("run-qask", help="run episodes against one or more oracles")
    p.add_argument("--manifest", required=True)
    p.add_argument("--questioner", required=True, help="questioner agent config JSON")
    p.add_argument("--oracle", action="append", default=[], help="oracle config JSON (repeatable)")
    p.add_argument("--level", default="col_ctx_feat", choices=core.DESCRIPTION_LEVELS)
    p.add_argument("--out", required=True, help="run directory")
    p.add_argument("--max-questions", type=int, default=5)
    p.add_argument("--no-stop-on-wrong", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=4)
    p.add_argument("--cache-dir", default=None)
    p.add_argument("--replay", action="store_true", help="refuse cache misses")
    p.add_argument("--dry-run", action="store_true")
    p.set_defaults(func=cmd_run_qask)

    p = sub.add_parser("metrics", help="recompute metrics files for a run directory")
    p.add_argument("run_dir")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("dataset", help="dataset tooling")
    dsub = p.add_subparsers(dest="dataset_cmd", required=True)
    v = dsub.add_parser("validate")
    v.add_argument("file")
    st = dsub.add_parser("stats")
    st.add_argument("file")
    h = dsub.add_parser("harvest")
    h.add_argument("--results", required=True)
    h.add_argument("--manifest", required=True)
    h.add_argument("--out", required=True)
    h.add_argument("--split", default="train", choices=core.SAMPLE_SPLITS)
    e = dsub.add_parser("sft-export")
    e.add_argument("--questions", required=True)
    e.add_argument("--plain", required=True)
    e.add_argument("--ratio", default="10:1")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out", required=True)
    p.set_defaults(func=cmd_dataset)

    p = sub.add_parser("nav-sim", help="run one navigation episode in the 2D surrogate")
    p.add_argument("--world", required=True)
    p.add_argument("--spec", required=True)
    p.add_argument("--policy", default="waypoint", choices=["waypoint", "random", "greedy"])
    p.add_argument("--waypoints", default=None, help="JSON file with [[x,y],...]")
    p.add_argument("--questioner", default=None)
    p.add_argument("--oracle", default=None)
    p.add_argument("--max-questions", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="nav_results.jsonl")
    p.set_defaults(func=cmd_nav_sim)

    p = sub.add_parser("serve-console", help="serve the human-oracle bridge and console")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8040)
    p.add_argument("--run-config", default=None)
    p.set_defaults(func=cmd_serve_console)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (FileNotFoundError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
