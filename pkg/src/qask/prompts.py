"""Prompt rendering and tagged-output parsing.

The questioner emits three XML-like tags (motivation, score, question).
Parsing is tolerant of casing, surrounding whitespace, and extra prose
outside the tags; inner text is taken verbatim.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from typing import Optional

from .core import Context, Rsq, canonical_image_bytes

DEFAULT_TEMPLATE_VERSION = "v1"
NO_HISTORY_SENTENCE = "There are no previous questions or answers."
ANSWER_TAG = "<|answer|>"
NONE_QUESTION = "None"

TAGS = ("motivation", "score", "question")

# Invented micro-grammar for non-scored binary-decision questioners; the
# scored tag grammar above is the primary output format.
DECISION_MATCH = "DECISION: MATCH"
DECISION_NO_MATCH = "DECISION: NO_MATCH"


class ParseError(ValueError):
    """Raised when a model output does not follow the tagged grammar."""

    def __init__(self, message: str, raw: str = "", tag: str = ""):
        super().__init__(message)
        self.raw = raw
        self.tag = tag


@dataclass(frozen=True)
class PromptBundle:
    system_text: str
    user_text: str
    image_payloads: tuple[bytes, ...]


def _template(name: str, version: str = DEFAULT_TEMPLATE_VERSION) -> str:
    ref = resources.files("qask").joinpath("templates", version, f"{name}.txt")
    return ref.read_text(encoding="utf-8")


def render_context(ctx: Context) -> str:
    """Serialize the question/answer history, 1-based, in ask order."""
    if not ctx:
        return NO_HISTORY_SENTENCE
    lines = [
        f"{k}. {turn.question} {ANSWER_TAG}{turn.answer}{ANSWER_TAG}"
        for k, turn in enumerate(ctx, start=1)
    ]
    return "\n".join(lines)


def render_questioner_prompt(
    d: str,
    ctx: Context,
    obs: str,
    template_version: str = DEFAULT_TEMPLATE_VERSION,
    extra_instruction: str = "",
) -> PromptBundle:
    """Build the full questioner prompt for one observation."""
    if not d.strip():
        raise ValueError("description must be non-empty")
    try:
        payload = canonical_image_bytes(obs)
    except Exception as exc:
        raise ValueError(f"image unavailable: {obs!r} ({exc})") from exc
    return PromptBundle(
        system_text=_template("system", template_version).strip(),
        user_text=render_user_text(d, ctx, template_version, extra_instruction),
        image_payloads=(payload,),
    )


def render_user_text(
    d: str,
    ctx: Context,
    template_version: str = DEFAULT_TEMPLATE_VERSION,
    extra_instruction: str = "",
) -> str:
    main = _template("main", template_version).replace("USER_TASK", d).rstrip()
    parts = [main, render_context(ctx), _template("format", template_version).rstrip()]
    if extra_instruction:
        parts.append(extra_instruction)
    return "\n\n".join(parts)


def render_oracle_prompt(
    category: str,
    question: str,
    template_version: str = DEFAULT_TEMPLATE_VERSION,
) -> tuple[str, str]:
    system = _template("oracle_system", template_version).replace("OBJECT_CATEGORY", category).strip()
    return system, question


def _extract_tag(raw: str, tag: str) -> str:
    matches = re.findall(rf"<{tag}>(.*?)</{tag}>", raw, re.DOTALL | re.IGNORECASE)
    if not matches:
        raise ParseError(f"missing tag {tag!r}", raw=raw, tag=tag)
    if len(matches) > 1:
        raise ParseError(f"duplicated tag {tag!r}", raw=raw, tag=tag)
    return matches[0]


def parse_rsq(raw: str) -> Rsq:
    """Parse a tagged model output into a (reasoning, score, question) triple.

    Total over all inputs: returns an Rsq or raises ParseError, never anything else.
    """
    reasoning = _extract_tag(raw, "motivation")
    score_text = _extract_tag(raw, "score").strip()
    try:
        score = int(score_text)
    except ValueError:
        raise ParseError(f"score not an integer: {score_text!r}", raw=raw, tag="score")
    if score not in (0, 1, 2):
        raise ParseError("score out of range", raw=raw, tag="score")
    question_text = _extract_tag(raw, "question")
    question: Optional[str]
    if question_text.strip().lower() == NONE_QUESTION.lower():
        question = None
    else:
        question = question_text
    if (question is not None) != (score == 1):
        raise ParseError(
            f"question present iff score is 1 violated (score={score})",
            raw=raw,
            tag="question",
        )
    return Rsq(reasoning=reasoning, score=score, question=question)


def render_rsq(rsq: Rsq) -> str:
    """Inverse of parse_rsq for well-formed triples; used for replay and SFT targets."""
    question = rsq.question if rsq.question is not None else NONE_QUESTION
    return (
        f"<motivation>{rsq.reasoning}</motivation>\n"
        f"<score>{rsq.score}</score>\n"
        f"<question>{question}</question>"
    )


def parse_decision(raw: str) -> bool:
    """Parse the binary-decision micro-grammar: final DECISION line."""
    for line in reversed(raw.strip().splitlines()):
        line = line.strip()
        if line == DECISION_MATCH:
            return True
        if line == DECISION_NO_MATCH:
            return False
    raise ParseError("no DECISION line found", raw=raw, tag="decision")


def render_decision(match: bool) -> str:
    return DECISION_MATCH if match else DECISION_NO_MATCH
