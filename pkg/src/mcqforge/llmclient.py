"""Chat-completion client layer: a live HTTP backend and a scripted mock.

Every model call in the toolkit goes through complete(), which adds
retry-with-backoff, optional rate limiting, and latency capture. The
mock backend answers from an ordered rule table and runs on a synthetic
clock, so pipelines driven by it are fully deterministic.
"""

from __future__ import annotations

import os
import random
import re
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple, Union

import requests

from .errors import ForgeError

ROLES = ("system", "user", "assistant")

BACKOFF_BASE_S = 1.0
BACKOFF_JITTER = 0.2
DEFAULT_RETRY_LIMIT = 3

# Sampling defaults used by the pipeline stages.
TEMPERATURE_EVAL = 0.0
TEMPERATURE_GENERATION = 0.7


class LlmError(ForgeError):
    """Base class for model-call failures."""


class TransientFailure(LlmError):
    """Retryable failure: transport error or HTTP 429/5xx."""


class AuthError(LlmError):
    """Credentials rejected or missing; never retried."""


class MalformedResponse(LlmError):
    """Wire response (or non-retryable HTTP status) could not be used."""


class Exhausted(LlmError):
    """All retry attempts failed."""

    def __init__(self, attempts: int, last: Exception):
        self.attempts = attempts
        self.last = last
        super().__init__(f"gave up after {attempts} attempts: {last}")


class NoRuleMatched(LlmError):
    """Mock backend had no rule (and no default) for a prompt."""


class MonotonicClock:
    """Real wall clock."""

    def now(self) -> float:
        return time.monotonic()

    def sleep(self, seconds: float) -> None:
        if seconds > 0:
            time.sleep(seconds)


class SyntheticClock:
    """Virtual clock: sleeping advances time instantly. Thread-safe."""

    def __init__(self, start: float = 0.0):
        self._t = float(start)
        self._lock = threading.Lock()

    def now(self) -> float:
        with self._lock:
            return self._t

    def sleep(self, seconds: float) -> None:
        with self._lock:
            self._t += max(0.0, float(seconds))

    advance = sleep


@dataclass(frozen=True)
class ChatRequest:
    messages: tuple
    model: str = ""
    temperature: float = 0.0
    max_tokens: Optional[int] = None

    def __post_init__(self):
        msgs = tuple((role, content) for role, content in self.messages)
        object.__setattr__(self, "messages", msgs)
        if not msgs:
            raise ValueError("ChatRequest needs at least one message")
        for role, content in msgs:
            if role not in ROLES:
                raise ValueError(f"bad message role {role!r}")
            if not isinstance(content, str):
                raise ValueError("message content must be text")
        if msgs[-1][0] != "user":
            raise ValueError("last message must have role 'user'")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens is not None and self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")

    def joined_text(self) -> str:
        return "\n".join(content for _, content in self.messages)


@dataclass(frozen=True)
class ChatExchange:
    request: ChatRequest
    response_text: str
    latency: float
    attempt_count: int
    backend_id: str

    def __post_init__(self):
        if self.latency < 0:
            raise ValueError("latency must be >= 0")
        if self.attempt_count < 1:
            raise ValueError("attempt_count must be >= 1")


class RateLimiter:
    """Spaces call starts at least 1/rate seconds apart. Thread-safe."""

    def __init__(self, rate_per_s: float, clock=None):
        if rate_per_s <= 0:
            raise ValueError("rate must be positive")
        self.interval = 1.0 / float(rate_per_s)
        self.clock = clock if clock is not None else MonotonicClock()
        self._lock = threading.Lock()
        self._next_free: Optional[float] = None

    def acquire(self) -> float:
        """Block until a slot is free; returns the granted start time."""
        with self._lock:
            now = self.clock.now()
            start = now if self._next_free is None else max(now, self._next_free)
            self._next_free = start + self.interval
        if start > now:
            self.clock.sleep(start - now)
        return start


@dataclass(frozen=True)
class MockFailure:
    """Scripted failure outcome for a mock rule."""

    kind: str = "transient"  # transient | auth | malformed
    message: str = "scripted failure"

    def __post_init__(self):
        if self.kind not in ("transient", "auth", "malformed"):
            raise ValueError(f"unknown failure kind {self.kind!r}")

    def raise_(self) -> None:
        if self.kind == "transient":
            raise TransientFailure(self.message)
        if self.kind == "auth":
            raise AuthError(self.message)
        raise MalformedResponse(self.message)


Matcher = Union[str, "re.Pattern[str]", Callable[[str], bool]]
Outcome = Union[str, MockFailure]


@dataclass
class MockRule:
    """One scripted behaviour: matcher, outcome(s), optional latency.

    The outcome may be a single response or a sequence consumed one per
    hit (the last element repeats once the sequence is spent).
    """

    matcher: Matcher
    response: Union[Outcome, Sequence[Outcome]]
    latency: float = 0.0
    hits: int = 0

    def matches(self, prompt: str) -> bool:
        if isinstance(self.matcher, str):
            return self.matcher in prompt
        if isinstance(self.matcher, re.Pattern):
            return self.matcher.search(prompt) is not None
        return bool(self.matcher(prompt))

    def next_outcome(self) -> Outcome:
        out = self.response
        if isinstance(out, (list, tuple)):
            out = out[min(self.hits, len(out) - 1)]
        self.hits += 1
        return out


class MockBackend:
    """Deterministic scripted backend; first matching rule wins."""

    def __init__(self, rules=(), default: Optional[Outcome] = None,
                 id: str = "mock", model: str = "mock-model",
                 retry_limit: int = DEFAULT_RETRY_LIMIT, seed: int = 0,
                 rate_limiter: Optional[RateLimiter] = None):
        self.id = id
        self.model = model
        self.retry_limit = retry_limit
        self.rules = [self._coerce_rule(r) for r in rules]
        self.default = default
        self.clock = SyntheticClock(0.0)
        self.rng = random.Random(seed)
        self.rate_limiter = rate_limiter
        self.calls: list = []  # every ChatRequest seen, in order
        self._lock = threading.Lock()

    @staticmethod
    def _coerce_rule(rule) -> MockRule:
        if isinstance(rule, MockRule):
            return rule
        return MockRule(*rule)

    def add_rule(self, matcher: Matcher, response, latency: float = 0.0) -> None:
        self.rules.append(MockRule(matcher, response, latency))

    @property
    def call_count(self) -> int:
        return len(self.calls)

    def send(self, request: ChatRequest) -> str:
        prompt = request.joined_text()
        with self._lock:
            self.calls.append(request)
            for rule in self.rules:
                if rule.matches(prompt):
                    outcome = rule.next_outcome()
                    latency = rule.latency
                    break
            else:
                if self.default is None:
                    head = prompt[:80].replace("\n", " ")
                    raise NoRuleMatched(f"no rule for prompt starting {head!r}")
                outcome, latency = self.default, 0.0
        self.clock.sleep(latency)
        if isinstance(outcome, MockFailure):
            outcome.raise_()
        return outcome


def script_mock(rules=(), default: Optional[Outcome] = None, **kwargs) -> MockBackend:
    """Build a mock backend from (matcher, response[, latency]) rules."""
    backend = MockBackend(rules=rules, default=default, **kwargs)
    if not backend.rules and backend.default is None:
        raise ValueError("need at least one rule or a default response")
    return backend


class HttpBackend:
    """OpenAI-compatible chat-completions client over HTTP(S)."""

    def __init__(self, id: str, base_url: str, model: str,
                 api_key_env: str = "", rate_limit_per_s: Optional[float] = None,
                 retry_limit: int = DEFAULT_RETRY_LIMIT, timeout_s: float = 120.0,
                 completions_path: str = "/chat/completions"):
        self.id = id
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key_env = api_key_env
        self.retry_limit = retry_limit
        self.timeout_s = timeout_s
        self.completions_path = completions_path
        self.clock = MonotonicClock()
        self.rng = random.Random()
        self.rate_limiter = (
            RateLimiter(rate_limit_per_s) if rate_limit_per_s else None
        )
        self._session = requests.Session()

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.api_key_env:
            key = os.environ.get(self.api_key_env)
            if not key:
                raise AuthError(
                    f"environment variable {self.api_key_env} is not set"
                )
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def send(self, request: ChatRequest) -> str:
        body = {
            "model": request.model or self.model,
            "messages": [
                {"role": role, "content": content}
                for role, content in request.messages
            ],
            "temperature": request.temperature,
        }
        if request.max_tokens is not None:
            body["max_tokens"] = request.max_tokens
        url = self.base_url + self.completions_path
        try:
            resp = self._session.post(
                url, json=body, headers=self._headers(), timeout=self.timeout_s
            )
        except requests.RequestException as exc:
            raise TransientFailure(f"transport error: {exc}") from exc
        if resp.status_code in (401, 403):
            raise AuthError(f"HTTP {resp.status_code} from {url}")
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransientFailure(f"HTTP {resp.status_code} from {url}")
        if resp.status_code != 200:
            raise MalformedResponse(f"HTTP {resp.status_code} from {url}")
        try:
            content = resp.json()["choices"][0]["message"]["content"]
        except (ValueError, LookupError, TypeError) as exc:
            raise MalformedResponse(f"unparseable response body: {exc}") from exc
        if not isinstance(content, str):
            raise MalformedResponse("response content is not text")
        return content


Backend = Union[MockBackend, HttpBackend]


def complete(backend: Backend, request: ChatRequest) -> ChatExchange:
    """Issue one chat call with retries; latency covers the whole call.

    Transient failures are retried up to the backend's retry limit with
    exponential backoff (1s/2s/4s, +-20% jitter). Auth and malformed
    responses are raised immediately.
    """
    if backend.rate_limiter is not None:
        backend.rate_limiter.acquire()
    clock = backend.clock
    start = clock.now()
    limit = max(1, backend.retry_limit)
    for attempt in range(1, limit + 1):
        try:
            text = backend.send(request)
        except TransientFailure as exc:
            if attempt >= limit:
                raise Exhausted(attempt, exc) from exc
            base = BACKOFF_BASE_S * (2.0 ** (attempt - 1))
            jitter = 1.0 + backend.rng.uniform(-BACKOFF_JITTER, BACKOFF_JITTER)
            clock.sleep(base * jitter)
            continue
        return ChatExchange(
            request=request,
            response_text=text,
            latency=clock.now() - start,
            attempt_count=attempt,
            backend_id=backend.id,
        )
    raise AssertionError("unreachable")
