"""Pluggable completion providers and deterministic prompt rendering.

Two providers ship here: a scripted backend that replays configured replies
(with per-rule failure counters) for tests and benchmarks, and a wire backend
speaking the OpenAI-compatible chat-completion HTTP shape.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Protocol, Sequence

import httpx

from .jsonutil import digest_obj

BLOCK_TASK_SPEC = "TaskSpec"
BLOCK_SCAFFOLD_STATE = "ScaffoldState"
BLOCK_API_FRAGMENTS = "ApiFragments"
BLOCK_SECTION_CONTRACT = "SectionContract"
BLOCK_REPAIR_CONTEXT = "RepairContext"
BLOCK_SOURCE_SCRIPT = "SourceScript"

BLOCK_LABELS = (
    BLOCK_TASK_SPEC,
    BLOCK_SCAFFOLD_STATE,
    BLOCK_API_FRAGMENTS,
    BLOCK_SECTION_CONTRACT,
    BLOCK_REPAIR_CONTEXT,
    BLOCK_SOURCE_SCRIPT,
)

# Request-text prefixes identify what a bundle asks for; scripted matchers and
# tests key on them, so every caller builds requests through these constants.
REQUEST_GENERATE = "Write the section fragment"
REQUEST_REVIEW_FRAGMENT = "Review the fragment"
REQUEST_REVIEW_PROGRAM = "Review the complete program"
REQUEST_ANALYZE = "Analyze the task"
REQUEST_REFERENCE_SCRIPT = "Write a Python reference script"

KIND_PREFIXES = {
    "generate": REQUEST_GENERATE,
    "review": REQUEST_REVIEW_FRAGMENT,
    "review_program": REQUEST_REVIEW_PROGRAM,
    "analyze": REQUEST_ANALYZE,
    "reference_script": REQUEST_REFERENCE_SCRIPT,
}


class ProviderError(Exception):
    """Completion failure; kind is one of transport, overload, malformed."""

    def __init__(self, kind: str, message: str):
        assert kind in ("transport", "overload", "malformed")
        self.kind = kind
        super().__init__(f"{kind}: {message}")


@dataclass(frozen=True)
class ContextBlock:
    label: str
    body: str

    def __post_init__(self) -> None:
        if self.label not in BLOCK_LABELS:
            raise ValueError(f"unknown context block label: {self.label!r}")


@dataclass(frozen=True)
class DecodeParams:
    temperature: float = 0.0
    max_tokens: int = 2048
    seed: int | None = 7

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")


@dataclass(frozen=True)
class PromptBundle:
    system_text: str
    context_blocks: tuple[ContextBlock, ...]
    request_text: str
    decode_params: DecodeParams = DecodeParams()

    def __post_init__(self) -> None:
        labels = [b.label for b in self.context_blocks]
        if len(labels) != len(set(labels)):
            raise ValueError("context block labels must be unique per bundle")

    def block(self, label: str) -> ContextBlock | None:
        for b in self.context_blocks:
            if b.label == label:
                return b
        return None

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(b.label for b in self.context_blocks)


def render_user_text(bundle: PromptBundle) -> str:
    """Context blocks under fixed headers, then the request. Pure."""
    parts = []
    for block in bundle.context_blocks:
        parts.append(f"== {block.label} ==")
        parts.append(block.body.rstrip("\n"))
    parts.append(bundle.request_text.rstrip("\n"))
    return "\n".join(parts)


def render_prompt(bundle: PromptBundle) -> str:
    """Full deterministic flat text: system, blocks in order, request."""
    head = bundle.system_text.rstrip("\n")
    body = render_user_text(bundle)
    return (head + "\n" + body + "\n") if head else (body + "\n")


class CompletionProvider(Protocol):
    provider_id: str

    def complete(self, bundle: PromptBundle) -> str: ...

    def describe(self) -> dict: ...


# ---------------------------------------------------------------------------
# Scripted backend


DEFAULT_BAD_REPLY = "// WORK IN PROGRESS"


@dataclass
class ScriptedRule:
    reply: str
    match: Mapping = field(default_factory=dict)
    fail_count: int = 0
    bad_reply: str = DEFAULT_BAD_REPLY
    name: str = ""

    def matches(self, bundle: PromptBundle) -> bool:
        m = self.match
        kind = m.get("kind")
        if kind is not None:
            prefix = KIND_PREFIXES.get(kind)
            if prefix is None or not bundle.request_text.startswith(prefix):
                return False
        section = m.get("section")
        if section is not None:
            contract = bundle.block(BLOCK_SECTION_CONTRACT)
            if contract is None or not contract.body.startswith(f"Section: {section}"):
                return False
        label = m.get("has_label")
        if label is not None and label not in bundle.labels:
            return False
        needle = m.get("request_contains")
        if needle is not None and needle not in bundle.request_text:
            return False
        body_needle = m.get("body_contains")
        if body_needle is not None:
            haystack = render_user_text(bundle)
            if body_needle not in haystack:
                return False
        sys_needle = m.get("system_contains")
        if sys_needle is not None and sys_needle not in bundle.system_text:
            return False
        return True

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "match": dict(self.match),
            "reply": self.reply,
            "fail_count": self.fail_count,
            "bad_reply": self.bad_reply,
        }


class ScriptedBackend:
    """Deterministic provider replaying configured rules.

    Each rule keeps its own invocation cursor: the first ``fail_count``
    matches return the rule's bad reply variant, later ones the good reply.
    Cursor access is serialized so concurrent runs stay deterministic
    per-matcher. Use a fresh instance per pipeline run for bit-reproducibility.
    """

    provider_id = "scripted"

    def __init__(self, rules: Sequence[ScriptedRule | Mapping]):
        self.rules = [r if isinstance(r, ScriptedRule) else _rule_from_dict(r) for r in rules]
        self._hits = [0] * len(self.rules)
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedBackend":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(data)

    def complete(self, bundle: PromptBundle) -> str:
        with self._lock:
            for i, rule in enumerate(self.rules):
                if rule.matches(bundle):
                    self._hits[i] += 1
                    if self._hits[i] <= rule.fail_count:
                        return rule.bad_reply
                    return rule.reply
        raise ProviderError("malformed", "no scripted rule matches the bundle")

    def describe(self) -> dict:
        return {
            "provider_id": self.provider_id,
            "rules_digest": digest_obj([r.to_dict() for r in self.rules]),
        }


def _rule_from_dict(raw: Mapping) -> ScriptedRule:
    return ScriptedRule(
        reply=raw["reply"],
        match=raw.get("match", {}),
        fail_count=int(raw.get("fail_count", 0)),
        bad_reply=raw.get("bad_reply", DEFAULT_BAD_REPLY),
        name=raw.get("name", ""),
    )


# ---------------------------------------------------------------------------
# Wire backend (OpenAI-compatible chat completions)


TOKEN_ENV_VAR = "GRAIL_LLM_TOKEN"


class WireBackend:
    """HTTP provider: POST {base_url}/v1/chat/completions with bearer auth."""

    provider_id = "openai-compatible"

    def __init__(
        self,
        base_url: str,
        model: str,
        timeout: float = 60.0,
        client: httpx.Client | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.timeout = timeout
        self._client = client or httpx.Client(timeout=timeout)

    def build_request_body(self, bundle: PromptBundle) -> dict:
        body = {
            "model": self.model,
            "messages": [
                {"role": "system", "content": bundle.system_text},
                {"role": "user", "content": render_user_text(bundle)},
            ],
            "temperature": bundle.decode_params.temperature,
            "max_tokens": bundle.decode_params.max_tokens,
        }
        if bundle.decode_params.seed is not None:
            body["seed"] = bundle.decode_params.seed
        return body

    def complete(self, bundle: PromptBundle) -> str:
        headers = {}
        token = os.environ.get(TOKEN_ENV_VAR)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        try:
            response = self._client.post(
                f"{self.base_url}/v1/chat/completions",
                json=self.build_request_body(bundle),
                headers=headers,
            )
        except httpx.HTTPError as exc:
            raise ProviderError("transport", str(exc)) from exc
        if response.status_code == 429 or response.status_code >= 500:
            raise ProviderError("overload", f"HTTP {response.status_code}")
        if response.status_code != 200:
            raise ProviderError("transport", f"HTTP {response.status_code}")
        try:
            payload = response.json()
            content = payload["choices"][0]["message"]["content"]
        except (ValueError, LookupError, TypeError) as exc:
            raise ProviderError("malformed", f"reply lacks message content: {exc}") from exc
        if not isinstance(content, str) or not content.strip():
            raise ProviderError("malformed", "reply content is empty")
        return content

    def describe(self) -> dict:
        return {
            "provider_id": self.provider_id,
            "base_url": self.base_url,
            "model": self.model,
        }


def build_provider(config: Mapping, base_dir: str | Path | None = None) -> CompletionProvider:
    """Construct a provider from a config mapping ({"kind": ...})."""
    kind = config.get("kind")
    if kind == "scripted":
        if "rules" in config:
            return ScriptedBackend(config["rules"])
        rules_file = Path(config["rules_file"])
        if base_dir is not None and not rules_file.is_absolute():
            rules_file = Path(base_dir) / rules_file
        return ScriptedBackend.from_file(rules_file)
    if kind == "openai":
        return WireBackend(
            base_url=config["base_url"],
            model=config.get("model", "default"),
            timeout=float(config.get("timeout", 60.0)),
        )
    raise ValueError(f"unknown provider kind: {kind!r}")
