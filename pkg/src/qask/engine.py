"""The question-asking episode state machine and the manifest runner.

An episode presents observations in order. At each observation the
questioner may ask up to a capped number of questions (each answered by
the oracle and appended to the shared context) before a decision is
forced. A wrong decision ends the episode; the final decision always
ends it. The episode is finished iff every observation got a correct
decision.
"""

from __future__ import annotations

import json
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from . import metrics as metrics_mod
from .agents import (
    AgentConfig,
    AgentError,
    Oracle,
    OracleRequest,
    Questioner,
    RequestLog,
    make_oracle,
    make_questioner,
    oracle_answer,
    questioner_turn,
)
from .cache import ResponseCache
from .core import (
    Context,
    EpisodeResult,
    EpisodeSpec,
    QA,
    QuestionerOutput,
    StepRecord,
    Turn,
    canonical_image_bytes,
    dumps_canonical,
)

log = logging.getLogger(__name__)

FORCE_DECISION_INSTRUCTION = "You must now decide."


@dataclass(frozen=True)
class EngineConfig:
    max_questions_per_observation: int = 5
    description_level: str = "col_ctx_feat"
    stop_on_wrong: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.max_questions_per_observation < 0:
            raise ValueError("max_questions_per_observation must be >= 0")


def force_decision(questioner: Questioner, d: str, obs: str, ctx: Context) -> QuestionerOutput:
    """Re-prompt once demanding a decision; the caller handles a refusal."""
    return questioner_turn(questioner, d, obs, ctx, force_decision=True)


def run_episode(
    spec: EpisodeSpec,
    questioner: Questioner,
    oracle: Oracle,
    cfg: EngineConfig,
) -> EpisodeResult:
    d = spec.descriptions.level(cfg.description_level)
    target_bytes = canonical_image_bytes(spec.target_image)  # never shown to the questioner
    oracle.begin_episode(spec.id, target_bytes, d)
    n = spec.n
    ctx: Context = ()
    steps: list[StepRecord] = []
    total_latency = 0.0
    all_replayed = True
    error: Optional[str] = None

    try:
        for i, obs in enumerate(spec.observations):
            questions: list[QA] = []
            raws: list[str] = []
            decision: Optional[bool] = None
            while True:
                out = questioner_turn(questioner, d, obs, ctx)
                raws.append(out.raw)
                total_latency += out.latency
                all_replayed = all_replayed and out.replayed
                if out.kind == "decision":
                    decision = out.match
                    break
                if len(questions) < cfg.max_questions_per_observation:
                    req = OracleRequest(target_image=target_bytes, category=spec.category,
                                        question=out.question)
                    answer, ans_latency = oracle_answer(oracle, req)
                    total_latency += ans_latency
                    questions.append(QA(out.question, answer, out.latency + ans_latency))
                    ctx = ctx + (Turn(out.question, answer),)
                    continue
                # question cap reached and the agent still asks: force once
                forced = force_decision(questioner, d, obs, ctx)
                raws.append(forced.raw)
                total_latency += forced.latency
                all_replayed = all_replayed and forced.replayed
                if forced.kind == "decision":
                    decision = forced.match
                break
            if decision is None:
                # agent refused to decide even when forced; abort unfinished
                steps.append(StepRecord(i, tuple(questions), None, None, tuple(raws)))
                break
            correct = decision == (i == n - 1)
            steps.append(StepRecord(i, tuple(questions), decision, correct, tuple(raws)))
            if not correct and cfg.stop_on_wrong:
                break
    except AgentError as exc:
        error = str(exc)
        log.warning("episode %s aborted: %s", spec.id, exc)
    finally:
        oracle.end_episode()

    finished = (
        error is None
        and len(steps) == n
        and all(s.correct for s in steps)
    )
    return EpisodeResult(
        episode_id=spec.id,
        description_level=cfg.description_level,
        oracle_id=oracle.id,
        questioner_id=questioner.id,
        steps=tuple(steps),
        finished=finished,
        wall_time=total_latency,
        error=error,
        replayed=all_replayed,
    )


@dataclass
class RunOutcome:
    results: list[EpisodeResult]
    outbound_requests: int
    run_dir: Optional[Path] = None


def run_qask(
    specs: list[EpisodeSpec],
    questioner_cfg: AgentConfig,
    oracle_cfgs: list[AgentConfig],
    engine_cfg: EngineConfig,
    run_dir=None,
    cache_dir=None,
    workers: int = 4,
    replay_only: bool = False,
    session_manager=None,
) -> RunOutcome:
    """Run every episode against every oracle; optionally persist artifacts."""
    cache = ResponseCache(cache_dir) if cache_dir else None
    run_dir = Path(run_dir) if run_dir else None
    request_log = None
    if run_dir is not None:
        run_dir.mkdir(parents=True, exist_ok=True)
        request_log = RequestLog(run_dir / "requests.jsonl")

    outbound = 0
    outbound_lock = threading.Lock()
    results: list[EpisodeResult] = []

    def task(spec: EpisodeSpec, oracle_cfg: AgentConfig) -> EpisodeResult:
        nonlocal outbound
        questioner = make_questioner(questioner_cfg, cache=cache, request_log=request_log,
                                     replay_only=replay_only)
        oracle = make_oracle(oracle_cfg, cache=cache, request_log=request_log,
                             replay_only=replay_only, session_manager=session_manager)
        result = run_episode(spec, questioner, oracle, engine_cfg)
        made = getattr(questioner, "outbound_requests", 0) + getattr(oracle, "outbound_requests", 0)
        with outbound_lock:
            outbound += made
        return result

    jobs = [(spec, ocfg) for ocfg in oracle_cfgs for spec in specs]
    if workers <= 1:
        results = [task(spec, ocfg) for spec, ocfg in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda j: task(*j), jobs))
    results.sort(key=lambda r: (r.oracle_id, r.episode_id))

    if run_dir is not None:
        write_run_artifacts(run_dir, specs, results, questioner_cfg, oracle_cfgs, engine_cfg,
                            replay_only=replay_only)
    return RunOutcome(results=results, outbound_requests=outbound, run_dir=run_dir)


def write_run_artifacts(
    run_dir: Path,
    specs: list[EpisodeSpec],
    results: list[EpisodeResult],
    questioner_cfg: AgentConfig,
    oracle_cfgs: list[AgentConfig],
    engine_cfg: EngineConfig,
    replay_only: bool = False,
) -> None:
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    with open(run_dir / "results.jsonl", "w", encoding="utf-8") as fh:
        for r in results:
            fh.write(dumps_canonical(r.to_dict()) + "\n")
    manifest = {
        "engine": {
            "max_questions_per_observation": engine_cfg.max_questions_per_observation,
            "description_level": engine_cfg.description_level,
            "stop_on_wrong": engine_cfg.stop_on_wrong,
            "seed": engine_cfg.seed,
        },
        "questioner": {"id": questioner_cfg.id, "kind": questioner_cfg.kind,
                       "model_name": questioner_cfg.model_name,
                       "template_version": questioner_cfg.template_version},
        "oracles": [{"id": c.id, "kind": c.kind, "model_name": c.model_name,
                     "template_version": c.template_version} for c in oracle_cfgs],
        "episode_lengths": {s.id: s.n for s in specs},
        "replay": replay_only,
    }
    with open(run_dir / "run_manifest.json", "w", encoding="utf-8") as fh:
        fh.write(dumps_canonical(manifest))
    reports, means = metrics_mod.run_reports(results, {s.id: s.n for s in specs})
    metrics_mod.write_metrics(run_dir, reports, means, replayed=replay_only)


def load_results(path) -> list[EpisodeResult]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(EpisodeResult.from_dict(json.loads(line)))
    return out
