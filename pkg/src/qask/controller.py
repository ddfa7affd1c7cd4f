"""Score-routed interaction controller.

Given a candidate detection, obtain a (reasoning, score, question) triple
from the model and route on the score: 0 discards the detection, 1 asks
the user and retries, 2 accepts it as the target.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

from .agents import Oracle, OracleRequest, Questioner, oracle_answer, questioner_turn
from .core import Context, Turn, check_score


@dataclass(frozen=True)
class Route:
    kind: str  # "discard" | "ask" | "accept"
    reasoning: str
    score: int
    question: Optional[str] = None

    def __post_init__(self):
        check_score(self.score)
        expected = {0: "discard", 1: "ask", 2: "accept"}[self.score]
        if self.kind != expected:
            raise ValueError(f"score {self.score} must route to {expected!r}, got {self.kind!r}")
        if (self.question is not None) != (self.kind == "ask"):
            raise ValueError("question present iff kind is ask")


@dataclass(frozen=True)
class Resolution:
    final: str  # "discard" | "accept"
    ctx_out: Context
    asks: int
    cap_hit: bool = False


def decide(d: str, obs: str, ctx: Context, model: Questioner) -> Route:
    """One model call, mapped to a route by the uncertainty score."""
    out = questioner_turn(model, d, obs, ctx)
    if out.parsed is not None:
        score = out.parsed.score
        reasoning = out.parsed.reasoning
    else:
        # unscored binary decision: map match/no-match to the score extremes
        score = 2 if out.match else 0
        reasoning = out.raw
    if score == 1:
        return Route(kind="ask", reasoning=reasoning, score=1, question=out.question)
    return Route(kind="accept" if score == 2 else "discard", reasoning=reasoning, score=score)


def resolve_detection(
    d: str,
    obs: str,
    model: Questioner,
    oracle: Oracle,
    cap: int,
    target_image: bytes = b"",
    category: str = "",
    ctx: Context = (),
) -> Resolution:
    """Route one detection to a final discard/accept, asking up to `cap`
    questions. An unresolved detection at the cap is discarded (conservative)."""
    if cap < 0:
        raise ValueError("cap must be >= 0")
    asks = 0
    while True:
        route = decide(d, obs, ctx, model)
        if route.kind == "accept":
            return Resolution(final="accept", ctx_out=ctx, asks=asks)
        if route.kind == "discard":
            return Resolution(final="discard", ctx_out=ctx, asks=asks)
        if asks >= cap:
            return Resolution(final="discard", ctx_out=ctx, asks=asks, cap_hit=True)
        req = OracleRequest(target_image=target_image, category=category,
                            question=route.question)
        answer, _ = oracle_answer(oracle, req)
        ctx = ctx + (Turn(route.question, answer),)
        asks += 1


def score_mae(pred: Sequence[int], truth: Sequence[int]) -> float:
    """Mean absolute error between predicted and ground-truth scores."""
    if len(pred) != len(truth):
        raise ValueError(f"length mismatch: {len(pred)} vs {len(truth)}")
    if not pred:
        raise ValueError("empty score lists")
    for v in list(pred) + list(truth):
        check_score(v)
    return sum(abs(p - t) for p, t in zip(pred, truth)) / len(pred)
