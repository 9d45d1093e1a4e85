"""Uniform generation interface over scripted and remote backends.

A role is activated either by appending its reserved tokens to the input
(role_tokens mode) or by a full instruction prompt. The scripted backend
replays fixed rules and keeps every test deterministic.

Environment variables for the remote backend:
    RAGDAG_GATEWAY_URL      chat-completions style endpoint URL
    RAGDAG_GATEWAY_TOKEN    optional bearer token
    RAGDAG_GATEWAY_MODEL    model name sent in the request body
    RAGDAG_GATEWAY_TIMEOUT  timeout in seconds (default 30)
"""

from __future__ import annotations

import enum
import json
import os
import re
from dataclasses import dataclass, field
from pathlib import Path

from .adapter import read_adapter
from .errors import (
    BackendStatusError,
    BackendTimeoutError,
    BackendUnreachableError,
    MalformedAdapterError,
    NoScriptMatchError,
    RoleCountMismatchError,
)


class Role(str, enum.Enum):
    GRAPH_BUILDER = "graph_builder"
    RETRIEVAL_JUDGE = "retrieval_judge"
    SUB_ANSWER = "sub_answer"
    SUMMARIZER = "summarizer"
    NEW_QUERY = "new_query"
    REASONER = "reasoner"


ALL_ROLES: tuple[Role, ...] = tuple(Role)


def whitespace_token_count(text: str) -> int:
    """Default token approximation: whitespace-separated chunks."""
    return len(text.split())


@dataclass(frozen=True)
class GenerationRequest:
    role: Role
    prompt: str
    max_tokens: int = 512
    temperature: float = 0.0
    stop: tuple[str, ...] = ()

    def __post_init__(self):
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


@dataclass(frozen=True)
class RoleTokenConfig:
    """How roles are activated: soft-prompt tokens or plain instructions."""

    mode: str = "instruction_prompt"  # or "role_tokens"
    tokens_per_role: int = 30
    token_strings: dict[Role, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in ("instruction_prompt", "role_tokens"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "role_tokens":
            for role in ALL_ROLES:
                literals = self.token_strings.get(role, ())
                if len(literals) != self.tokens_per_role:
                    raise ValueError(
                        f"role {role.value} has {len(literals)} token literals, "
                        f"expected {self.tokens_per_role}"
                    )


@dataclass(frozen=True)
class ScriptedRule:
    role: Role
    matcher: str  # exact | substring | pattern
    pattern: str
    response: str

    def matches(self, prompt: str) -> bool:
        if self.matcher == "exact":
            return prompt == self.pattern
        if self.matcher == "substring":
            return self.pattern in prompt
        if self.matcher == "pattern":
            return re.search(self.pattern, prompt) is not None
        raise ValueError(f"unknown matcher {self.matcher!r}")


class ScriptedBackend:
    """Deterministic backend replaying rules; first matching rule wins.

    Rules match against the prompt before role tokens are appended, so a
    script behaves identically in both activation modes.
    """

    def __init__(self, rules: list[ScriptedRule]):
        self._rules = list(rules)

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedBackend":
        rules = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                obj = json.loads(line)
                rules.append(
                    ScriptedRule(
                        role=Role(obj["role"]),
                        matcher=obj.get("matcher", "substring"),
                        pattern=obj["pattern"],
                        response=obj["response"],
                    )
                )
        return cls(rules)

    def complete(self, wire_input: str, request: GenerationRequest) -> str:
        for rule in self._rules:
            if rule.role == request.role and rule.matches(request.prompt):
                return rule.response
        raise NoScriptMatchError(
            f"no scripted rule for role {request.role.value} matched prompt "
            f"{request.prompt[:80]!r}"
        )


class RemoteBackend:
    """Chat-completions style HTTP backend (POST, optional bearer auth)."""

    def __init__(
        self,
        url: str | None = None,
        model: str | None = None,
        token: str | None = None,
        timeout: float | None = None,
    ):
        self.url = url or os.environ.get("RAGDAG_GATEWAY_URL", "")
        self.model = model or os.environ.get("RAGDAG_GATEWAY_MODEL", "default")
        self.token = token if token is not None else os.environ.get("RAGDAG_GATEWAY_TOKEN")
        if timeout is None:
            timeout = float(os.environ.get("RAGDAG_GATEWAY_TIMEOUT", "30"))
        self.timeout = timeout
        if not self.url:
            raise BackendUnreachableError("no gateway URL configured")

    def complete(self, wire_input: str, request: GenerationRequest) -> str:
        import requests

        body = {
            "model": self.model,
            "messages": [{"role": "user", "content": wire_input}],
            "max_tokens": request.max_tokens,
            "temperature": request.temperature,
        }
        if request.stop:
            body["stop"] = list(request.stop)
        headers = {"Content-Type": "application/json"}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        try:
            resp = requests.post(self.url, json=body, headers=headers, timeout=self.timeout)
        except requests.Timeout as exc:
            raise BackendTimeoutError(f"no response within {self.timeout}s") from exc
        except requests.RequestException as exc:
            raise BackendUnreachableError(str(exc)) from exc
        if resp.status_code >= 400:
            raise BackendStatusError(resp.status_code, resp.text)
        try:
            choice = resp.json()["choices"][0]
        except (ValueError, KeyError, IndexError) as exc:
            raise BackendStatusError(resp.status_code, f"malformed response body: {exc}")
        if "message" in choice:
            return choice["message"]["content"]
        return choice.get("text", "")


class Gateway:
    """Front door for all role generations; owns activation and retries."""

    def __init__(
        self,
        backend,
        token_config: RoleTokenConfig | None = None,
        token_counter=whitespace_token_count,
    ):
        self.backend = backend
        self.token_config = token_config or RoleTokenConfig()
        self._count = token_counter

    @property
    def mode(self) -> str:
        return self.token_config.mode

    def build_wire_input(self, request: GenerationRequest) -> str:
        """The transmitted input: prompt, plus role tokens when enabled."""
        if self.token_config.mode == "role_tokens":
            literals = self.token_config.token_strings.get(request.role, ())
            return request.prompt + "".join(literals)
        return request.prompt

    def generate(self, request: GenerationRequest) -> str:
        wire = self.build_wire_input(request)
        try:
            text = self.backend.complete(wire, request)
        except (BackendUnreachableError, BackendTimeoutError):
            # One retry on transport errors only; scripted misses are final.
            text = self.backend.complete(wire, request)
        for stop in request.stop:
            idx = text.find(stop)
            if idx >= 0:
                text = text[:idx]
        return text

    def count_tokens(self, text: str) -> int:
        return self._count(text)


def load_role_adapter(path: str | Path) -> RoleTokenConfig:
    """Load token literals per role from an adapter file.

    The embedding payload is validated (checksum) but not used here; the
    serving side consumes it. Requires exactly the six engine roles.
    """
    adapter = read_adapter(path)
    expected = {r.value for r in ALL_ROLES}
    present = set(adapter.tokens.keys())
    if present != expected:
        missing = sorted(expected - present)
        extra = sorted(present - expected)
        raise RoleCountMismatchError(
            f"adapter roles do not match engine roles (missing {missing}, extra {extra})"
        )
    token_strings: dict[Role, tuple[str, ...]] = {}
    for role in ALL_ROLES:
        literals = adapter.tokens[role.value]
        if len(literals) != adapter.tokens_per_role:
            raise RoleCountMismatchError(
                f"role {role.value} has {len(literals)} literals, "
                f"manifest says {adapter.tokens_per_role}"
            )
        if len(set(literals)) != len(literals):
            raise MalformedAdapterError(f"duplicate token literal in role {role.value}")
        token_strings[role] = literals
    return RoleTokenConfig(
        mode="role_tokens",
        tokens_per_role=adapter.tokens_per_role,
        token_strings=token_strings,
    )
