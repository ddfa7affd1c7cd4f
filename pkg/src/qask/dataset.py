"""Dataset tooling: sample validation, rollout harvesting, judge generation,
split statistics, and the two-stage SFT export mix.

Sample files are JSON-lines with image refs; images live in a companion
assets directory.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from . import prompts
from .agents import Questioner, questioner_turn
from .core import (
    Context,
    EpisodeResult,
    EpisodeSpec,
    Rsq,
    TraceSample,
    Turn,
    VALID_SCORES,
)
from .prompts import ParseError

log = logging.getLogger(__name__)

DEFAULT_SFT_RATIO = (10, 1)  # question samples : plain samples


@dataclass(frozen=True)
class SplitStats:
    split: str
    count: int
    score_histogram: dict[int, int]
    category_histogram: dict[str, int]


@dataclass
class ValidationReport:
    violations: list[tuple[int, str]] = field(default_factory=list)
    n_lines: int = 0
    n_valid: int = 0

    @property
    def ok(self) -> bool:
        return not self.violations


def read_samples(path) -> list[TraceSample]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(TraceSample.from_dict(json.loads(line)))
    return out


def write_samples(samples: Sequence[TraceSample], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            fh.write(json.dumps(s.to_dict(), sort_keys=True, ensure_ascii=False) + "\n")


def validate_samples(path) -> ValidationReport:
    """Per-line invariant checks; malformed lines become violations, not crashes."""
    report = ValidationReport()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            report.n_lines += 1
            try:
                sample = TraceSample.from_dict(json.loads(line))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                report.violations.append((lineno, f"malformed line: {exc}"))
                continue
            problems = sample.violations()
            if problems:
                report.violations.extend((lineno, p) for p in problems)
            else:
                report.n_valid += 1
    return report


def harvest_from_runs(
    results: Sequence[EpisodeResult],
    specs: dict[str, EpisodeSpec],
    sample_split: str = "train",
) -> tuple[list[TraceSample], int]:
    """Turn episode transcripts into dataset samples.

    Question turns map to score 1 with the question; no-match and match
    decisions map to scores 0 and 2 with no question. The context is the
    history before each turn. Returns (samples, skipped_turn_count).
    """
    samples: list[TraceSample] = []
    skipped = 0
    for result in results:
        spec = specs.get(result.episode_id)
        if spec is None:
            raise KeyError(f"unknown episode id {result.episode_id!r}")
        d = spec.descriptions.level(result.description_level)
        ctx: Context = ()
        for step in result.steps:
            obs = spec.observations[step.obs_index]

            def sample(reasoning: str, score: int, question: Optional[str]) -> TraceSample:
                return TraceSample(
                    description=d, observation=obs, reasoning=reasoning, score=score,
                    question=question, context=ctx, category=spec.category,
                    split=sample_split,
                )

            n_answered = len(step.questions)
            for k, raw in enumerate(step.raw_outputs):
                try:
                    rsq = prompts.parse_rsq(raw)
                except ParseError:
                    rsq = None
                if rsq is not None:
                    samples.append(sample(rsq.reasoning, rsq.score, rsq.question))
                elif k < n_answered:
                    samples.append(sample(raw, 1, step.questions[k].question))
                elif k == len(step.raw_outputs) - 1 and step.decision is not None:
                    samples.append(sample(raw, 2 if step.decision else 0, None))
                else:
                    skipped += 1
                    log.warning("skipping unparseable turn in episode %s", result.episode_id)
                    continue
                if k < n_answered:
                    qa = step.questions[k]
                    ctx = ctx + (Turn(qa.question, qa.answer),)
    return samples, skipped


def judge_generate(
    d: str,
    obs: str,
    judge: Questioner,
    category: str = "",
    split: str = "train",
) -> Optional[TraceSample]:
    """One judge-written sample with empty context; None when the judge
    output cannot be turned into a valid sample."""
    try:
        out = questioner_turn(judge, d, obs, ())
    except Exception as exc:
        log.warning("judge failed for %r: %s", d, exc)
        return None
    if out.parsed is None:
        log.warning("judge output for %r has no parsed triple; skipped", d)
        return None
    sample = TraceSample(
        description=d, observation=obs, reasoning=out.parsed.reasoning,
        score=out.parsed.score, question=out.parsed.question, context=(),
        category=category, split=split,
    )
    if sample.violations():
        log.warning("judge sample for %r invalid: %s", d, sample.violations())
        return None
    return sample


def judge_generate_batch(pairs, judge, category="", split="train"):
    out = []
    for d, obs in pairs:
        sample = judge_generate(d, obs, judge, category=category, split=split)
        if sample is not None:
            out.append(sample)
    return out


def sample_to_sft_record(sample: TraceSample, template_version: str = prompts.DEFAULT_TEMPLATE_VERSION) -> dict:
    """Rendered prompt plus the tagged target completion for one sample."""
    rsq = Rsq(reasoning=sample.reasoning, score=sample.score, question=sample.question)
    return {
        "prompt_user": prompts.render_user_text(sample.description, sample.context,
                                                template_version),
        "image_ref": sample.observation,
        "completion": prompts.render_rsq(rsq),
        "score": sample.score,
        "split": sample.split,
        "category": sample.category,
    }


def build_sft_mix(
    question_samples: Sequence[TraceSample],
    plain_samples: Sequence[TraceSample],
    ratio: tuple[int, int] = DEFAULT_SFT_RATIO,
    seed: int = 0,
) -> list[dict]:
    """Deterministic seeded interleave of question and plain samples.

    Emits repeated windows of `ratio` (question, plain) records, so every
    window of size sum(ratio) holds exactly the configured mix. Leftovers
    that cannot fill a full window are dropped with a warning.
    """
    q_ratio, p_ratio = ratio
    if q_ratio <= 0 or p_ratio <= 0:
        raise ValueError("ratio parts must be positive")
    if not question_samples or not plain_samples:
        raise ValueError("both sample pools must be non-empty")
    if any(s.score != 1 for s in question_samples):
        raise ValueError("question pool must contain only score-1 samples")
    if any(s.question is not None for s in plain_samples):
        raise ValueError("plain pool must not contain questions")

    rng = random.Random(seed)
    q_pool = list(question_samples)
    p_pool = list(plain_samples)
    rng.shuffle(q_pool)
    rng.shuffle(p_pool)

    windows = min(len(q_pool) // q_ratio, len(p_pool) // p_ratio)
    if windows == 0:
        raise ValueError("pools too small for one full ratio window")
    dropped = (len(q_pool) - windows * q_ratio) + (len(p_pool) - windows * p_ratio)
    if dropped:
        log.warning("sft mix drops %d samples that do not fill a window", dropped)

    records = []
    for w in range(windows):
        for s in q_pool[w * q_ratio:(w + 1) * q_ratio]:
            records.append(sample_to_sft_record(s))
        for s in p_pool[w * p_ratio:(w + 1) * p_ratio]:
            records.append(sample_to_sft_record(s))
    return records


def stage1_samples(samples: Sequence[TraceSample]) -> list[TraceSample]:
    """Reasoning-only pool: no questions and empty context."""
    return [s for s in samples if s.score != 1 and not s.context]


def write_sft_export(records: Sequence[dict], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r, sort_keys=True, ensure_ascii=False) + "\n")


def split_stats(path) -> dict[str, SplitStats]:
    """Per-split counts plus score and category histograms."""
    counts: dict[str, int] = {}
    scores: dict[str, dict[int, int]] = {}
    categories: dict[str, dict[str, int]] = {}
    for sample in read_samples(path):
        split = sample.split
        counts[split] = counts.get(split, 0) + 1
        hist = scores.setdefault(split, {s: 0 for s in VALID_SCORES})
        if sample.score in hist:
            hist[sample.score] += 1
        cat = categories.setdefault(split, {})
        cat[sample.category] = cat.get(sample.category, 0) + 1
    return {
        split: SplitStats(split=split, count=counts[split],
                          score_histogram=scores[split],
                          category_histogram=categories[split])
        for split in counts
    }


def read_description_pool(path) -> list[str]:
    """One description per line; blank lines ignored."""
    with open(path, encoding="utf-8") as fh:
        return [line.strip() for line in fh if line.strip()]
