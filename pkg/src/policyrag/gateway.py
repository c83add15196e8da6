"""Uniform client for chat-completion backends plus a deterministic mock.

Backend locators:
  "mock"          deterministic echo of the last user message
  "mock:<path>"   fixture-mapped mock; JSONL of {prompt, response} records
                  matched against the last user message, falling back to echo
  "http(s)://..." chat-completions wire contract over HTTP

Two generation presets are built in: "detailed" (temperature 0.2,
top_p 0.95, top_k 40, expansive analyst system prompt) and "concise"
(temperature 0.9, top_p 0.6, top_k 20, brevity-focused system prompt).

Env vars: LLM_ENDPOINT (default backend for CLI commands), LLM_API_KEY
(bearer token, optional), LLM_TIMEOUT_MS (request timeout).
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .records import load_records

Message = tuple[str, str]  # (role, content)

_VALID_ROLES = ("system", "user", "assistant")

DEFAULT_MAX_TOKENS = 1024
_RETRIES = 2


class GatewayError(RuntimeError):
    """Base class for backend failures."""


class GatewayTimeout(GatewayError):
    """The backend did not respond within the configured timeout."""


class GatewayBackendError(GatewayError):
    """The backend returned a non-success status (after retries for 5xx)."""


class GatewayProtocolError(GatewayError):
    """The backend response body did not match the wire contract."""


@dataclass(frozen=True)
class GenerationConfig:
    preset_name: str
    system_prompt: str
    temperature: float
    top_p: float
    top_k: int
    max_tokens: int = DEFAULT_MAX_TOKENS

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if not (0 < self.top_p <= 1):
            raise ValueError("top_p must be in (0, 1]")
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")


DETAILED_SYSTEM_PROMPT = (
    "You are an expert policy analyst. Give thorough, well-structured answers "
    "grounded in the provided document context, weighing multiple perspectives "
    "and citing the relevant provisions."
)

CONCISE_SYSTEM_PROMPT = (
    "You are a policy assistant. Answer briefly and directly, in a few clear "
    "sentences, without elaboration beyond what the question requires."
)

PRESETS: dict[str, GenerationConfig] = {
    "detailed": GenerationConfig(
        preset_name="detailed",
        system_prompt=DETAILED_SYSTEM_PROMPT,
        temperature=0.2,
        top_p=0.95,
        top_k=40,
    ),
    "concise": GenerationConfig(
        preset_name="concise",
        system_prompt=CONCISE_SYSTEM_PROMPT,
        temperature=0.9,
        top_p=0.6,
        top_k=20,
    ),
}


def get_preset(name: str) -> GenerationConfig:
    try:
        return PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown generation preset: {name!r}") from None


@dataclass(frozen=True)
class ChatExchange:
    messages: tuple[Message, ...]
    response_text: str
    latency_ms: int
    backend_id: str


def _validate_messages(messages: Sequence[Message]) -> tuple[Message, ...]:
    if not messages:
        raise ValueError("messages must be non-empty")
    for role, _ in messages:
        if role not in _VALID_ROLES:
            raise ValueError(f"invalid message role: {role!r}")
    if messages[-1][0] != "user":
        raise ValueError("the final message must have role 'user'")
    return tuple(messages)


def _last_user_content(messages: Sequence[Message]) -> str:
    return messages[-1][1]


class _FixtureCache:
    """Loaded fixture maps keyed by path+mtime, so tests can rewrite files."""

    def __init__(self) -> None:
        self._cache: dict[tuple[str, float], list[tuple[str, str]]] = {}

    def get(self, path: str) -> list[tuple[str, str]]:
        mtime = Path(path).stat().st_mtime
        key = (path, mtime)
        if key not in self._cache:
            self._cache[key] = [
                (str(record["prompt"]), str(record["response"]))
                for record in load_records(path)
            ]
        return self._cache[key]


_fixtures = _FixtureCache()


def _mock_response(messages: Sequence[Message], cfg: GenerationConfig, locator: str) -> str:
    """Fixture records match the last user message exactly or as a substring
    (first match in file order wins). Anything unmatched echoes the last user
    message; the "concise" preset echoes only its final line, so the two
    presets produce distinct answers for multi-line prompts."""
    content = _last_user_content(messages)
    if locator.startswith("mock:"):
        entries = _fixtures.get(locator[len("mock:") :])
        for prompt, response in entries:
            if prompt == content:
                return response
        for prompt, response in entries:
            if prompt in content:
                return response
    if cfg.preset_name == "concise":
        lines = [line for line in content.splitlines() if line.strip()]
        if lines:
            return lines[-1]
    return content


def timeout_seconds() -> float:
    return int(os.environ.get("LLM_TIMEOUT_MS", "30000")) / 1000.0


def _http_chat(messages: Sequence[Message], cfg: GenerationConfig, endpoint: str) -> str:
    import requests

    payload = {
        "model": os.environ.get("LLM_MODEL", "default"),
        "messages": [{"role": role, "content": content} for role, content in messages],
        "temperature": cfg.temperature,
        "top_p": cfg.top_p,
        "top_k": cfg.top_k,
        "max_tokens": cfg.max_tokens,
    }
    headers = {"Content-Type": "application/json"}
    api_key = os.environ.get("LLM_API_KEY")
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"

    last_error: Exception | None = None
    for attempt in range(_RETRIES + 1):
        try:
            response = requests.post(
                endpoint, json=payload, headers=headers, timeout=timeout_seconds()
            )
        except requests.Timeout as exc:
            raise GatewayTimeout(f"backend timed out: {endpoint}") from exc
        except requests.RequestException as exc:
            last_error = exc
            continue
        if response.status_code >= 500:
            last_error = GatewayBackendError(
                f"backend error {response.status_code} from {endpoint}"
            )
            continue
        if response.status_code != 200:
            raise GatewayBackendError(
                f"backend returned status {response.status_code} from {endpoint}"
            )
        try:
            body = response.json()
            return str(body["choices"][0]["message"]["content"])
        except (json.JSONDecodeError, KeyError, IndexError, TypeError) as exc:
            raise GatewayProtocolError(f"malformed backend response: {exc}") from exc
    raise GatewayBackendError(f"backend failed after {_RETRIES + 1} attempts: {last_error}")


def chat(messages: Sequence[Message], cfg: GenerationConfig, backend: str) -> ChatExchange:
    """Send a chat exchange to the given backend.

    A system message for the preset is prepended automatically when the
    caller did not supply one.
    """
    if not any(role == "system" for role, _ in messages):
        messages = [("system", cfg.system_prompt), *messages]
    validated = _validate_messages(messages)

    started = time.perf_counter()
    if backend == "mock" or backend.startswith("mock:"):
        response_text = _mock_response(validated, cfg, backend)
        latency_ms = 0
    elif backend.startswith(("http://", "https://")):
        response_text = _http_chat(validated, cfg, backend)
        latency_ms = int((time.perf_counter() - started) * 1000)
    else:
        raise ValueError(f"unknown backend locator: {backend!r}")

    return ChatExchange(
        messages=validated,
        response_text=response_text,
        latency_ms=latency_ms,
        backend_id=backend,
    )
