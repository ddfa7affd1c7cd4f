"""Questioner and oracle agents.

A questioner sees only the target description and the current observation;
an oracle sees only the target image, the object category, and the question.
That asymmetry is enforced structurally: the two roles have disjoint inputs.

Remote agents speak the de-facto chat-completion HTTP JSON format with
base64-embedded images.
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import re
import threading
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import requests

from . import prompts
from .cache import ResponseCache, make_key
from .core import (
    MAX_ORACLE_ANSWER_TOKENS,
    Context,
    QuestionerOutput,
    Rsq,
    canonical_image_bytes,
)
from .prompts import ParseError

log = logging.getLogger(__name__)

FORMAT_REMINDER = "Follow the output format exactly."
DEFAULT_ORACLE_ANSWER = "I cannot tell."

AGENT_KINDS = ("remote", "scripted", "replay", "human")


class AgentError(Exception):
    """Unrecoverable agent failure; aborts the episode."""


class TransportError(AgentError):
    """Network-level failure; retriable."""


@dataclass(frozen=True)
class AgentConfig:
    id: str
    kind: str
    endpoint: Optional[str] = None
    model_name: Optional[str] = None
    temperature: float = 0.0
    max_output_tokens: int = 512
    timeout: float = 60.0
    api_key_env: str = ""
    template_version: str = prompts.DEFAULT_TEMPLATE_VERSION
    max_parse_retries: int = 1
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in AGENT_KINDS:
            raise ValueError(f"unknown agent kind {self.kind!r}")
        if self.kind == "remote" and not (self.endpoint and self.model_name):
            raise ValueError("remote agent requires endpoint and model_name")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")

    @staticmethod
    def from_dict(d: dict) -> "AgentConfig":
        return AgentConfig(
            id=d["id"],
            kind=d["kind"],
            endpoint=d.get("endpoint"),
            model_name=d.get("model_name"),
            temperature=d.get("temperature", 0.0),
            max_output_tokens=d.get("max_output_tokens", 512),
            timeout=d.get("timeout", 60.0),
            api_key_env=d.get("api_key_env", ""),
            template_version=d.get("template_version", prompts.DEFAULT_TEMPLATE_VERSION),
            max_parse_retries=d.get("max_parse_retries", 1),
            params=d.get("params", {}),
        )

    @staticmethod
    def load(path) -> "AgentConfig":
        with open(path, encoding="utf-8") as fh:
            return AgentConfig.from_dict(json.load(fh))


@dataclass(frozen=True)
class OracleRequest:
    target_image: bytes
    category: str
    question: str

    def __post_init__(self):
        if not self.question.strip():
            raise ValueError("question must be non-empty")


class RequestLog:
    """Append-only log of every agent exchange, optionally mirrored to JSONL."""

    def __init__(self, path=None):
        self.entries: list[dict] = []
        self._path = path
        self._lock = threading.Lock()

    def record(self, entry: dict) -> None:
        with self._lock:
            self.entries.append(entry)
            if self._path is not None:
                with open(self._path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(entry, sort_keys=True) + "\n")


class Questioner:
    def __init__(self, config: AgentConfig):
        self.config = config
        self.id = config.id

    def turn(self, d: str, obs: str, ctx: Context, force_decision: bool = False) -> QuestionerOutput:
        raise NotImplementedError


class Oracle:
    def __init__(self, config: AgentConfig):
        self.config = config
        self.id = config.id

    def answer(self, req: OracleRequest) -> tuple[str, float]:
        raise NotImplementedError

    def begin_episode(self, episode_id: str, target_image: bytes, description: str) -> None:
        """Hook for oracles with per-episode state (e.g. the human bridge)."""

    def end_episode(self) -> None:
        pass


def _output_from_raw(raw: str) -> QuestionerOutput:
    """Interpret a raw scripted/replayed string under either grammar."""
    try:
        return QuestionerOutput.from_rsq(raw, prompts.parse_rsq(raw))
    except ParseError:
        pass
    try:
        return QuestionerOutput.decision(raw, prompts.parse_decision(raw))
    except ParseError:
        raise AgentError(f"unparseable scripted output: {raw!r}")


class ScriptedQuestioner(Questioner):
    """Plays back a pre-programmed list of outputs, one per turn."""

    def __init__(self, config: AgentConfig, script=None):
        super().__init__(config)
        script = script if script is not None else config.params.get("script", [])
        self._outputs = [
            o if isinstance(o, QuestionerOutput) else _output_from_raw(o) for o in script
        ]
        self._pos = 0

    def turn(self, d, obs, ctx, force_decision=False):
        if self._pos >= len(self._outputs):
            raise AgentError(f"scripted questioner {self.id!r} exhausted after {self._pos} turns")
        out = self._outputs[self._pos]
        self._pos += 1
        return out


class AlwaysNoQuestioner(Questioner):
    """The degenerate shortcut strategy: rejects every observation."""

    def turn(self, d, obs, ctx, force_decision=False):
        raw = prompts.render_rsq(Rsq(reasoning="Reject by policy.", score=0))
        return QuestionerOutput.from_rsq(raw, prompts.parse_rsq(raw))


class PerfectReplayQuestioner(Questioner):
    """Accepts the final observation of an episode and rejects all others.

    Needs to know the episode length; the engine passes the remaining
    observation count via the observation position callback.
    """

    def __init__(self, config: AgentConfig, accept_refs: Optional[set] = None):
        super().__init__(config)
        self._accept_refs = accept_refs if accept_refs is not None else set(
            config.params.get("accept_refs", [])
        )

    def turn(self, d, obs, ctx, force_decision=False):
        match = obs in self._accept_refs
        rsq = Rsq(reasoning="Replayed decision.", score=2 if match else 0)
        return QuestionerOutput.from_rsq(prompts.render_rsq(rsq), rsq)


class ReplayQuestioner(Questioner):
    """Returns stored transcript outputs verbatim, in order."""

    def __init__(self, config: AgentConfig, transcript=None):
        super().__init__(config)
        raws = transcript if transcript is not None else config.params.get("transcript", [])
        self._outputs = [_output_from_raw(r) for r in raws]
        self._pos = 0

    def turn(self, d, obs, ctx, force_decision=False):
        if self._pos >= len(self._outputs):
            raise AgentError(f"replay questioner {self.id!r} exhausted")
        out = self._outputs[self._pos]
        self._pos += 1
        return replace(out, replayed=True)


def _auth_headers(config: AgentConfig) -> dict:
    import os

    headers = {"Content-Type": "application/json"}
    if config.api_key_env:
        key = os.environ.get(config.api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
    return headers


def _chat_completion(
    config: AgentConfig,
    system_text: str,
    user_text: str,
    image_payloads: tuple[bytes, ...],
) -> tuple[str, float]:
    content = [{"type": "text", "text": user_text}]
    for payload in image_payloads:
        b64 = base64.b64encode(payload).decode("ascii")
        content.append(
            {"type": "image_url", "image_url": {"url": f"data:image/png;base64,{b64}"}}
        )
    body = {
        "model": config.model_name,
        "temperature": config.temperature,
        "max_tokens": config.max_output_tokens,
        "messages": [
            {"role": "system", "content": system_text},
            {"role": "user", "content": content},
        ],
    }
    start = time.monotonic()
    try:
        resp = requests.post(
            config.endpoint, json=body, headers=_auth_headers(config), timeout=config.timeout
        )
        resp.raise_for_status()
        data = resp.json()
    except requests.RequestException as exc:
        raise TransportError(f"request to {config.endpoint} failed: {exc}") from exc
    latency = time.monotonic() - start
    try:
        return data["choices"][0]["message"]["content"], latency
    except (KeyError, IndexError, TypeError) as exc:
        raise TransportError(f"malformed chat-completion response: {data!r}") from exc


class _RemoteMixin:
    """Cache/log plumbing shared by remote questioner and oracle."""

    def __init__(self, cache: Optional[ResponseCache], request_log: Optional[RequestLog],
                 replay_only: bool):
        self.cache = cache
        self.request_log = request_log
        self.replay_only = replay_only
        self.outbound_requests = 0

    def _complete(self, config: AgentConfig, role: str, system_text: str, user_text: str,
                  image_payloads: tuple[bytes, ...]) -> tuple[str, float, bool]:
        key = make_key(
            config.id,
            config.model_name or "",
            config.temperature,
            config.template_version,
            system_text + "\n" + user_text,
            image_payloads,
        )
        cached = self.cache.get(key) if self.cache else None
        if cached is None and self.cache is not None and not self.replay_only:
            # single-flight per key: concurrent misses must agree on one entry
            with self.cache.key_lock(key):
                cached = self.cache.get(key)
                replayed = cached is not None
                if cached is None:
                    content, latency = _chat_completion(config, system_text, user_text,
                                                        image_payloads)
                    self.outbound_requests += 1
                    # raw-cache everything so replays never need the network
                    self.cache.put(key, {"content": content, "latency": latency,
                                         "raw_cache": True})
                    cached = {"content": content, "latency": latency}
            content, latency = cached["content"], cached["latency"]
        elif cached is not None:
            content, latency, replayed = cached["content"], cached["latency"], True
        elif self.replay_only:
            raise AgentError(f"cache miss for {config.id!r} in replay mode")
        else:
            content, latency = _chat_completion(config, system_text, user_text, image_payloads)
            self.outbound_requests += 1
            replayed = False
        if self.request_log:
            self.request_log.record(
                {
                    "agent_id": config.id,
                    "role": role,
                    "system": system_text,
                    "user": user_text,
                    "image_sha256": [hashlib.sha256(b).hexdigest() for b in image_payloads],
                    "response": content,
                    "replayed": replayed,
                }
            )
        return content, latency, replayed


class RemoteQuestioner(Questioner, _RemoteMixin):
    def __init__(self, config: AgentConfig, cache=None, request_log=None, replay_only=False):
        Questioner.__init__(self, config)
        _RemoteMixin.__init__(self, cache, request_log, replay_only)
        self.grammar = config.params.get("grammar", "rsq")

    def turn(self, d, obs, ctx, force_decision=False):
        extra = "You must now decide." if force_decision else ""
        total_latency = 0.0
        all_replayed = True
        attempts = self.config.max_parse_retries + 1
        last_error: Optional[ParseError] = None
        for attempt in range(attempts):
            instruction = extra
            if attempt > 0:
                instruction = (extra + " " + FORMAT_REMINDER).strip()
            bundle = prompts.render_questioner_prompt(
                d, ctx, obs, self.config.template_version, extra_instruction=instruction
            )
            content, latency, replayed = self._complete(
                self.config, "questioner", bundle.system_text, bundle.user_text,
                bundle.image_payloads,
            )
            total_latency += latency
            all_replayed = all_replayed and replayed
            try:
                if self.grammar == "decision":
                    out = QuestionerOutput.decision(content, prompts.parse_decision(content))
                else:
                    out = QuestionerOutput.from_rsq(content, prompts.parse_rsq(content))
                return replace(out, latency=total_latency, replayed=all_replayed)
            except ParseError as exc:
                last_error = exc
        raise AgentError(f"unparseable after {attempts} attempts: {last_error}")


def normalize_question(q: str) -> str:
    return re.sub(r"\s+", " ", q.strip().lower()).rstrip("?").strip()


class ScriptedOracle(Oracle):
    """Answers from a lookup keyed by normalized question, or a fixed sequence."""

    def __init__(self, config: AgentConfig, lookup: Optional[dict] = None,
                 answers: Optional[list] = None, default: Optional[str] = None):
        super().__init__(config)
        raw_lookup = lookup if lookup is not None else config.params.get("lookup", {})
        self._lookup = {normalize_question(k): v for k, v in raw_lookup.items()}
        self._answers = list(answers if answers is not None else config.params.get("answers", []))
        self._pos = 0
        self._default = default or config.params.get("default_answer", DEFAULT_ORACLE_ANSWER)

    def answer(self, req: OracleRequest) -> tuple[str, float]:
        if self._pos < len(self._answers):
            ans = self._answers[self._pos]
            self._pos += 1
            return ans, 0.0
        key = normalize_question(req.question)
        if key in self._lookup:
            return self._lookup[key], 0.0
        log.warning("scripted oracle %s has no answer for %r; using default", self.id, req.question)
        return self._default, 0.0


class RemoteOracle(Oracle, _RemoteMixin):
    def __init__(self, config: AgentConfig, cache=None, request_log=None, replay_only=False):
        Oracle.__init__(self, config)
        _RemoteMixin.__init__(self, cache, request_log, replay_only)

    def answer(self, req: OracleRequest) -> tuple[str, float]:
        system_text, user_text = prompts.render_oracle_prompt(
            req.category, req.question, self.config.template_version
        )
        content, latency, _ = self._complete(
            self.config, "oracle", system_text, user_text, (req.target_image,)
        )
        return content, latency


def truncate_answer(text: str, max_tokens: int = MAX_ORACLE_ANSWER_TOKENS) -> str:
    words = text.split()
    if len(words) <= max_tokens:
        return text
    return " ".join(words[:max_tokens])


def questioner_turn(agent: Questioner, d: str, obs: str, ctx: Context,
                    force_decision: bool = False) -> QuestionerOutput:
    """One questioner turn. Remote agents report request latency; scripted
    and replay agents report zero so their transcripts are deterministic."""
    return agent.turn(d, obs, ctx, force_decision=force_decision)


def oracle_answer(agent: Oracle, req: OracleRequest) -> tuple[str, float]:
    """Answer one question; answers are truncated to stay answer-shaped."""
    text, latency = agent.answer(req)
    if not text.strip():
        log.warning("oracle %s returned an empty answer; using default", agent.id)
        text = DEFAULT_ORACLE_ANSWER
    return truncate_answer(text), latency


def make_questioner(config: AgentConfig, cache=None, request_log=None,
                    replay_only=False) -> Questioner:
    if config.kind == "remote":
        return RemoteQuestioner(config, cache=cache, request_log=request_log,
                                replay_only=replay_only)
    if config.kind == "scripted":
        mode = config.params.get("mode")
        if mode == "always_no":
            return AlwaysNoQuestioner(config)
        if mode == "perfect":
            return PerfectReplayQuestioner(config)
        return ScriptedQuestioner(config)
    if config.kind == "replay":
        return ReplayQuestioner(config)
    raise ValueError(f"no questioner for kind {config.kind!r}")


def make_oracle(config: AgentConfig, cache=None, request_log=None,
                replay_only=False, session_manager=None) -> Oracle:
    if config.kind == "remote":
        return RemoteOracle(config, cache=cache, request_log=request_log,
                            replay_only=replay_only)
    if config.kind == "scripted":
        return ScriptedOracle(config)
    if config.kind == "human":
        from .bridge import HumanOracle  # deferred: bridge pulls in fastapi

        if session_manager is None:
            raise ValueError("human oracle requires a session manager")
        return HumanOracle(config, session_manager)
    raise ValueError(f"no oracle for kind {config.kind!r}")
