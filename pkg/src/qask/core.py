"""Domain types shared by every part of the harness.

All types here are immutable value objects; they can be freely shared
between worker threads.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Optional

from PIL import Image

DESCRIPTION_LEVELS = ("category", "cat_col", "col_feat", "ctx", "col_ctx", "col_ctx_feat")
EPISODE_SPLITS = ("train", "test")
SAMPLE_SPLITS = ("train", "val_seen", "val_unseen")

MAX_DESCRIPTION_WORDS = 64
MIN_OBSERVATIONS = 2
MAX_OBSERVATIONS = 32
MIN_MEAN_OBSERVATIONS = 4.0
MAX_ORACLE_ANSWER_TOKENS = 64

VALID_SCORES = (0, 1, 2)  # 0 = certainly not target, 1 = unsure, 2 = certainly target


def check_score(value: int) -> int:
    if value not in VALID_SCORES:
        raise ValueError(f"score must be one of {VALID_SCORES}, got {value!r}")
    return value


def dumps_canonical(obj) -> str:
    """Deterministic JSON encoding used for all run artifacts and digests."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def canonical_image_bytes(ref: str) -> bytes:
    """Load an image ref (local path) and re-encode it to a canonical PNG.

    Re-encoding makes cache digests stable across file copies that differ
    only in container metadata.
    """
    path = Path(ref)
    with Image.open(path) as img:
        img.load()
        buf = io.BytesIO()
        img.save(buf, format="PNG")
    return buf.getvalue()


def image_ref_readable(ref: str) -> bool:
    if ref.startswith("http://") or ref.startswith("https://"):
        return True  # remote refs are resolved lazily at request time
    path = Path(ref)
    if not path.is_file():
        return False
    try:
        with Image.open(path) as img:
            img.verify()
        return True
    except Exception:
        return False


@dataclass(frozen=True)
class DescriptionSet:
    """The six target descriptions, from bare category to full detail."""

    category: str
    cat_col: str
    col_feat: str
    ctx: str
    col_ctx: str
    col_ctx_feat: str

    def level(self, name: str) -> str:
        if name not in DESCRIPTION_LEVELS:
            raise ValueError(f"unknown description level {name!r}")
        return getattr(self, name)

    def violations(self) -> list[str]:
        out = []
        for name in DESCRIPTION_LEVELS:
            text = getattr(self, name)
            if not isinstance(text, str) or not text.strip():
                out.append(f"descriptions.{name}: empty")
            elif len(text.split()) > MAX_DESCRIPTION_WORDS:
                out.append(f"descriptions.{name}: exceeds {MAX_DESCRIPTION_WORDS} words")
        return out


@dataclass(frozen=True)
class EpisodeSpec:
    """One question-asking episode: distractor observations ending at the target."""

    id: str
    category: str
    target_image: str
    descriptions: DescriptionSet
    observations: tuple[str, ...]
    split: str = "test"

    @property
    def n(self) -> int:
        return len(self.observations)

    @staticmethod
    def from_dict(d: dict) -> "EpisodeSpec":
        return EpisodeSpec(
            id=d["id"],
            category=d["category"],
            target_image=d["target_image"],
            descriptions=DescriptionSet(**d["descriptions"]),
            observations=tuple(d["observations"]),
            split=d.get("split", "test"),
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["observations"] = list(self.observations)
        return d


@dataclass(frozen=True)
class Turn:
    """One answered question in the interaction context."""

    question: str
    answer: str


# The interaction context is an ordered, append-only tuple of turns.
Context = tuple[Turn, ...]


def context_to_list(ctx: Context) -> list[list[str]]:
    return [[t.question, t.answer] for t in ctx]


def context_from_list(items) -> Context:
    return tuple(Turn(q, a) for q, a in items)


@dataclass(frozen=True)
class Rsq:
    """A (reasoning, score, question) triple.

    The question is present exactly when the score is 1.
    """

    reasoning: str
    score: int
    question: Optional[str] = None

    def __post_init__(self):
        check_score(self.score)
        if (self.question is not None) != (self.score == 1):
            raise ValueError(
                f"question must be present iff score is 1 (score={self.score}, question={self.question!r})"
            )


@dataclass(frozen=True)
class QuestionerOutput:
    """One questioner turn: a binary decision or a question."""

    raw: str
    kind: str  # "decision" | "question"
    match: Optional[bool] = None
    question: Optional[str] = None
    parsed: Optional[Rsq] = None
    latency: float = 0.0
    replayed: bool = False

    def __post_init__(self):
        if self.kind == "decision":
            if self.match is None:
                raise ValueError("decision output requires match")
        elif self.kind == "question":
            if not self.question:
                raise ValueError("question output requires question text")
        else:
            raise ValueError(f"unknown output kind {self.kind!r}")
        if self.parsed is not None:
            if (self.parsed.score == 1) != (self.kind == "question"):
                raise ValueError("parsed score 1 must map to a question output")
            if self.parsed.score == 2 and self.match is not True:
                raise ValueError("parsed score 2 must map to decision match=True")
            if self.parsed.score == 0 and self.match is not False:
                raise ValueError("parsed score 0 must map to decision match=False")

    @staticmethod
    def from_rsq(raw: str, rsq: Rsq, latency: float = 0.0, replayed: bool = False) -> "QuestionerOutput":
        if rsq.score == 1:
            return QuestionerOutput(
                raw=raw, kind="question", question=rsq.question, parsed=rsq,
                latency=latency, replayed=replayed,
            )
        return QuestionerOutput(
            raw=raw, kind="decision", match=(rsq.score == 2), parsed=rsq,
            latency=latency, replayed=replayed,
        )

    @staticmethod
    def decision(raw: str, match: bool, latency: float = 0.0) -> "QuestionerOutput":
        return QuestionerOutput(raw=raw, kind="decision", match=match, latency=latency)


@dataclass(frozen=True)
class TraceSample:
    """One dataset record: description, observation, reasoning trace,
    uncertainty score, optional question, and the context it was asked in."""

    description: str
    observation: str
    reasoning: str
    score: int
    question: Optional[str]
    context: Context
    category: str
    split: str

    def violations(self) -> list[str]:
        out = []
        if not self.description.strip():
            out.append("description: empty")
        if not self.observation:
            out.append("observation: empty")
        if self.score not in VALID_SCORES:
            out.append(f"score: {self.score!r} not in {VALID_SCORES}")
        elif self.score == 1 and self.question is None:
            out.append("question: missing with score 1")
        elif self.score != 1 and self.question is not None:
            out.append("question: question with non-1 score")
        if self.split not in SAMPLE_SPLITS:
            out.append(f"split: {self.split!r} not in {SAMPLE_SPLITS}")
        return out

    def to_dict(self) -> dict:
        return {
            "description": self.description,
            "observation": self.observation,
            "reasoning": self.reasoning,
            "score": self.score,
            "question": self.question,
            "context": context_to_list(self.context),
            "category": self.category,
            "split": self.split,
        }

    @staticmethod
    def from_dict(d: dict) -> "TraceSample":
        return TraceSample(
            description=d["description"],
            observation=d["observation"],
            reasoning=d.get("reasoning", ""),
            score=d["score"],
            question=d.get("question"),
            context=context_from_list(d.get("context", [])),
            category=d.get("category", ""),
            split=d.get("split", "train"),
        )


@dataclass(frozen=True)
class QA:
    """A question, its oracle answer, and the combined turn latency."""

    question: str
    answer: str
    latency: float = 0.0


@dataclass(frozen=True)
class StepRecord:
    """Everything that happened at one observation."""

    obs_index: int
    questions: tuple[QA, ...]
    decision: Optional[bool]
    correct: Optional[bool]
    raw_outputs: tuple[str, ...]

    def __post_init__(self):
        if (self.decision is None) != (self.correct is None):
            raise ValueError("correct must be present iff decision is present")

    def to_dict(self) -> dict:
        return {
            "obs_index": self.obs_index,
            "questions": [[q.question, q.answer, q.latency] for q in self.questions],
            "decision": self.decision,
            "correct": self.correct,
            "raw_outputs": list(self.raw_outputs),
        }

    @staticmethod
    def from_dict(d: dict) -> "StepRecord":
        return StepRecord(
            obs_index=d["obs_index"],
            questions=tuple(QA(q, a, lat) for q, a, lat in d["questions"]),
            decision=d["decision"],
            correct=d["correct"],
            raw_outputs=tuple(d["raw_outputs"]),
        )


@dataclass(frozen=True)
class EpisodeResult:
    """Full transcript of one episode run."""

    episode_id: str
    description_level: str
    oracle_id: str
    questioner_id: str
    steps: tuple[StepRecord, ...]
    finished: bool
    wall_time: float
    error: Optional[str] = None
    replayed: bool = False

    def to_dict(self) -> dict:
        # `replayed` is deliberately not serialized: a warm-cache rerun must
        # produce byte-identical results files.
        return {
            "episode_id": self.episode_id,
            "description_level": self.description_level,
            "oracle_id": self.oracle_id,
            "questioner_id": self.questioner_id,
            "steps": [s.to_dict() for s in self.steps],
            "finished": self.finished,
            "wall_time": self.wall_time,
            "error": self.error,
        }

    @staticmethod
    def from_dict(d: dict) -> "EpisodeResult":
        return EpisodeResult(
            episode_id=d["episode_id"],
            description_level=d["description_level"],
            oracle_id=d["oracle_id"],
            questioner_id=d["questioner_id"],
            steps=tuple(StepRecord.from_dict(s) for s in d["steps"]),
            finished=d["finished"],
            wall_time=d["wall_time"],
            error=d.get("error"),
            replayed=d.get("replayed", False),
        )

    def fingerprint(self) -> str:
        """Canonical encoding with all timing fields zeroed, for equivalence checks."""
        d = self.to_dict()
        d["wall_time"] = 0.0
        for step in d["steps"]:
            step["questions"] = [[q, a, 0.0] for q, a, _ in step["questions"]]
        return dumps_canonical(d)


@dataclass(frozen=True)
class NavEpisodeSpec:
    """One navigation episode in the desk-scale surrogate world."""

    start_pose: tuple[float, float, float]  # x [m], y [m], heading [deg]
    target_position: tuple[float, float]
    shortest_path_length: float
    description: str
    max_steps: int = 500
    success_radius: float = 0.25

    @staticmethod
    def from_dict(d: dict) -> "NavEpisodeSpec":
        return NavEpisodeSpec(
            start_pose=tuple(d["start_pose"]),
            target_position=tuple(d["target_position"]),
            shortest_path_length=d["shortest_path_length"],
            description=d["description"],
            max_steps=d.get("max_steps", 500),
            success_radius=d.get("success_radius", 0.25),
        )


@dataclass(frozen=True)
class NavResult:
    success: bool
    path_length: float
    steps_used: int
    questions_asked: int

    def to_dict(self) -> dict:
        return asdict(self)


def validate_episode(spec: EpisodeSpec, check_images: bool = True) -> list[str]:
    """Check one episode spec; returns a list of violations (empty iff valid)."""
    out = []
    if not spec.id:
        out.append("id: empty")
    if not spec.category.strip():
        out.append("category: empty")
    out.extend(spec.descriptions.violations())
    n = len(spec.observations)
    if n < MIN_OBSERVATIONS:
        out.append(f"observations: length {n} < {MIN_OBSERVATIONS}")
    if n > MAX_OBSERVATIONS:
        out.append(f"observations: length {n} > {MAX_OBSERVATIONS}")
    if spec.split not in EPISODE_SPLITS:
        out.append(f"split: {spec.split!r} not in {EPISODE_SPLITS}")
    if check_images:
        if not image_ref_readable(spec.target_image):
            out.append(f"target_image: unreadable ref {spec.target_image!r}")
        for i, ref in enumerate(spec.observations):
            if not image_ref_readable(ref):
                out.append(f"observations[{i}]: unreadable ref {ref!r}")
    return out


def validate_manifest(specs: list[EpisodeSpec], check_images: bool = True) -> list[str]:
    """Per-episode checks plus manifest-level constraints."""
    out = []
    for spec in specs:
        out.extend(f"{spec.id}: {v}" for v in validate_episode(spec, check_images=check_images))
    ids = [s.id for s in specs]
    if len(set(ids)) != len(ids):
        out.append("manifest: duplicate episode ids")
    if specs:
        mean_n = sum(s.n for s in specs) / len(specs)
        if mean_n <= MIN_MEAN_OBSERVATIONS:
            out.append(f"manifest: mean observations {mean_n:.2f} <= {MIN_MEAN_OBSERVATIONS:g}")
    return out


def load_manifest(path) -> list[EpisodeSpec]:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    return [EpisodeSpec.from_dict(d) for d in data]


def save_manifest(specs: list[EpisodeSpec], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([s.to_dict() for s in specs], fh, indent=2)
