"""Chat-completion providers: OpenAI-compatible HTTP client and a deterministic mock.

Both share one retry loop (exponential backoff on transient failures) and an
optional sliding-window rate limiter that may be shared between threads.
"""

from __future__ import annotations

import collections
import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Optional

import httpx
import numpy as np

from ..model import CHOICE_LABELS, COGNITIVE_FIELDS
from ..persona import PERSONA_FIELDS, PersonaProfile, encode_persona

log = logging.getLogger(__name__)


class ProviderError(Exception):
    """Non-retryable provider failure."""


class TransientProviderError(ProviderError):
    """Timeouts, HTTP 429 and 5xx: worth retrying."""


class AuthenticationError(ProviderError):
    pass


class MalformedResponseError(ProviderError):
    pass


class NetworkDisabledError(ProviderError):
    pass


class RetriesExhaustedError(ProviderError):
    def __init__(self, attempts: int, last_error: Exception):
        self.attempts = attempts
        self.last_error = last_error
        super().__init__(f"gave up after {attempts} attempts: {last_error}")


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


@dataclass(frozen=True)
class ChatRequest:
    system_text: str
    user_text: str
    temperature: float = 0.0
    max_tokens: int = 2048
    model_name: str = "gpt-3.5-turbo"
    # simulation context; never sent over the wire, read by the mock policy
    context: dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if not self.system_text.strip() or not self.user_text.strip():
            raise ValueError("system and user text must be non-empty")

    def prompt_hash(self) -> str:
        h = hashlib.sha256()
        h.update(self.system_text.encode())
        h.update(b"\x00")
        h.update(self.user_text.encode())
        return h.hexdigest()

    def wire_payload(self) -> dict[str, Any]:
        return {
            "model": self.model_name,
            "messages": [
                {"role": "system", "content": self.system_text},
                {"role": "user", "content": self.user_text},
            ],
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        }


@dataclass(frozen=True)
class Completion:
    text: str
    attempts: int = 1
    prompt_tokens: int = 0
    completion_tokens: int = 0


@dataclass
class ProviderConfig:
    kind: str = "mock"
    endpoint: str = "https://api.openai.com/v1/chat/completions"
    api_key_env: str = "OPENAI_API_KEY"
    model: str = "gpt-3.5-turbo"
    requests_per_minute: int = 60
    max_attempts: int = 5
    base_backoff_s: float = 1.0
    timeout_s: float = 60.0
    max_tokens: int = 2048
    temperature: float = 0.0
    mock: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in ("remote", "mock"):
            raise ConfigError("provider.kind", f"must be 'remote' or 'mock', got {self.kind!r}")
        if self.max_attempts < 1:
            raise ConfigError("provider.max_attempts", "must be >= 1")
        if self.requests_per_minute < 1:
            raise ConfigError("provider.requests_per_minute", "must be >= 1")
        if self.temperature < 0:
            raise ConfigError("provider.temperature", "must be >= 0")

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ProviderConfig":
        known = set(cls.__dataclass_fields__)
        for k in d:
            if k not in known:
                raise ConfigError(f"provider.{k}", "unknown key")
        return cls(**d)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


class RateLimiter:
    """At most ``cap`` acquisitions in any ``period``-second window."""

    def __init__(
        self,
        cap: int,
        period: float = 60.0,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.cap = cap
        self.period = period
        self._clock = clock
        self._sleep = sleep
        self._stamps: collections.deque[float] = collections.deque()
        self._lock = threading.Lock()

    def acquire(self) -> float:
        with self._lock:
            floor = float("-inf")
            while True:
                # never trust the clock to land exactly on the expiry after sleeping;
                # float rounding could otherwise spin on zero-length sleeps
                now = max(self._clock(), floor)
                while self._stamps and self._stamps[0] + self.period <= now:
                    self._stamps.popleft()
                if len(self._stamps) < self.cap:
                    self._stamps.append(now)
                    return now
                floor = self._stamps[0] + self.period
                self._sleep(floor - now)


class ChatProvider:
    identity = "base"

    def __init__(
        self,
        max_attempts: int = 3,
        base_backoff_s: float = 1.0,
        rate_limiter: Optional[RateLimiter] = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.max_attempts = max_attempts
        self.base_backoff_s = base_backoff_s
        self.rate_limiter = rate_limiter
        self._sleep = sleep

    def _send(self, request: ChatRequest) -> Completion:
        raise NotImplementedError

    def complete(self, request: ChatRequest) -> Completion:
        last: Optional[Exception] = None
        for attempt in range(1, self.max_attempts + 1):
            if self.rate_limiter is not None:
                self.rate_limiter.acquire()
            try:
                result = self._send(request)
            except TransientProviderError as exc:
                last = exc
                log.debug("attempt %d failed: %s", attempt, exc)
                if attempt < self.max_attempts:
                    self._sleep(self.base_backoff_s * 2 ** (attempt - 1))
                continue
            return Completion(result.text, attempt, result.prompt_tokens, result.completion_tokens)
        assert last is not None
        raise RetriesExhaustedError(self.max_attempts, last)


class RemoteProvider(ChatProvider):
    """OpenAI-compatible ``/chat/completions`` client.

    The API key is read from the environment variable named in the config at
    call time; it is never stored in configs or manifests.
    """

    def __init__(
        self,
        config: ProviderConfig,
        rate_limiter: Optional[RateLimiter] = None,
        transport: Optional[httpx.BaseTransport] = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        super().__init__(
            config.max_attempts,
            config.base_backoff_s,
            rate_limiter or RateLimiter(config.requests_per_minute),
            sleep,
        )
        self.config = config
        self.identity = f"remote:{config.endpoint}:{config.model}"
        self._client = httpx.Client(timeout=config.timeout_s, transport=transport)

    def _send(self, request: ChatRequest) -> Completion:
        if os.environ.get("NO_NETWORK") == "1":
            raise NetworkDisabledError("NO_NETWORK=1 forbids remote provider calls")
        key = os.environ.get(self.config.api_key_env)
        if not key:
            raise AuthenticationError(f"environment variable {self.config.api_key_env} is not set")
        try:
            resp = self._client.post(
                self.config.endpoint,
                json=request.wire_payload(),
                headers={"Authorization": f"Bearer {key}"},
            )
        except (httpx.TimeoutException, httpx.TransportError) as exc:
            raise TransientProviderError(f"transport error: {exc}") from exc
        if resp.status_code in (401, 403):
            raise AuthenticationError(f"HTTP {resp.status_code}")
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransientProviderError(f"HTTP {resp.status_code}")
        if resp.status_code >= 400:
            raise ProviderError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            data = resp.json()
            text = data["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise MalformedResponseError(f"unexpected reply shape: {exc!r}") from None
        if not isinstance(text, str):
            raise MalformedResponseError("message content is not text")
        usage = data.get("usage") or {}
        return Completion(
            text,
            prompt_tokens=int(usage.get("prompt_tokens", 0) or 0),
            completion_tokens=int(usage.get("completion_tokens", 0) or 0),
        )

    def close(self) -> None:
        self._client.close()


@dataclass(frozen=True)
class Coupling:
    """Linear link from persona items to one emitted cognitive value.

    value = intercept + sum(weights[item] * persona_item) + noise * N(0, 1),
    clamped to [0, 1]. Persona items are the 0/1 characteristics or
    normalized demographics; an absent persona contributes 0.5 per item.
    """

    intercept: float
    weights: dict[str, float] = field(default_factory=dict)
    noise: float = 0.05


DEFAULT_COUPLINGS: dict[str, Coupling] = {
    "workload": Coupling(0.75, {"smartness": -0.3, "prior_knowledge": -0.2}),
    "curiosity": Coupling(0.05, {"curiosity": 0.9}),
    "valid_focus": Coupling(0.35, {"focus": 0.45, "exam_performance": 0.1}),
    "course_following": Coupling(0.3, {"compliance": 0.3, "exam_performance": 0.2}),
    "engagement": Coupling(0.4, {"attitude": 0.3, "interest": 0.2}),
    "confusion": Coupling(0.5, {"prior_knowledge": -0.25, "exam_performance": -0.15}),
}


def _stable_seed(*parts: Any) -> int:
    blob = json.dumps(parts, sort_keys=True, default=str).encode()
    return int.from_bytes(hashlib.sha256(blob).digest()[:8], "little")


@dataclass
class MockPolicy:
    """Deterministic scripted student used for hermetic runs and tests.

    Responses depend only on (seed, persona, slide index, prompt hash) via a
    hashed RNG seed. Fault-injection knobs:

    - ``fail_agents``: agent indices whose every call raises a transient error
    - ``malformed_agents``: agent indices that always reply with unusable text
    - ``fail_first``: the first N calls (provider-wide) raise transient errors
    - ``script``: callable ``request -> text`` overriding everything else
    """

    seed: int = 0
    couplings: dict[str, Coupling] = field(default_factory=lambda: dict(DEFAULT_COUPLINGS))
    follow_base: float = 0.3
    fail_agents: frozenset[int] = frozenset()
    malformed_agents: frozenset[int] = frozenset()
    fail_first: int = 0
    script: Optional[Callable[[ChatRequest], str]] = None

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "MockPolicy":
        couplings = dict(DEFAULT_COUPLINGS)
        for name, spec in d.get("couplings", {}).items():
            if name not in COGNITIVE_FIELDS:
                raise ConfigError(f"provider.mock.couplings.{name}", "not a cognitive state")
            couplings[name] = Coupling(
                float(spec.get("intercept", 0.5)),
                {k: float(v) for k, v in spec.get("weights", {}).items()},
                float(spec.get("noise", 0.05)),
            )
        return cls(
            seed=int(d.get("seed", 0)),
            couplings=couplings,
            follow_base=float(d.get("follow_base", 0.3)),
            fail_agents=frozenset(int(i) for i in d.get("fail_agents", ())),
            malformed_agents=frozenset(int(i) for i in d.get("malformed_agents", ())),
            fail_first=int(d.get("fail_first", 0)),
        )

    def respond(self, request: ChatRequest) -> str:
        if self.script is not None:
            return self.script(request)
        ctx = request.context
        if ctx.get("agent_index") in self.malformed_agents:
            return "I am not able to answer in the requested format."
        persona = ctx.get("persona")
        rng = np.random.default_rng(
            _stable_seed(self.seed, persona, ctx.get("slide_index"), request.prompt_hash())
        )
        items = _persona_items(persona)

        aoi_ids = list(ctx.get("aoi_ids") or [1])
        p_follow = min(
            0.95,
            max(
                0.05,
                self.follow_base
                + 0.25 * items["focus"]
                + 0.2 * items["compliance"]
                + 0.1 * items["exam_performance"]
                - 0.15 * items["curiosity"],
            ),
        )
        rows = []
        prev_gaze: Optional[int] = None
        for t_index, pace in enumerate(ctx.get("pace") or [aoi_ids[0]], start=1):
            u = rng.random()
            if u < p_follow:
                gaze = pace
            elif prev_gaze is not None and u < p_follow + (1 - p_follow) * 0.4:
                gaze = prev_gaze
            else:
                gaze = int(rng.choice(aoi_ids))
            motor = gaze if rng.random() < 0.6 else int(rng.choice(aoi_ids))
            row: dict[str, Any] = {"index": t_index, "gaze_aoi": int(gaze), "motor_aoi": int(motor)}
            for name in COGNITIVE_FIELDS:
                c = self.couplings[name]
                v = c.intercept + sum(w * items[k] for k, w in c.weights.items()) + c.noise * rng.standard_normal()
                row[name] = round(min(1.0, max(0.0, v)), 4)
            rows.append(row)
            prev_gaze = gaze

        p_correct = 0.25 + 0.35 * items["exam_performance"] + 0.2 * items["smartness"] + 0.1 * items["attitude"]
        answers = []
        for q in ctx.get("questions") or []:
            correct = q["correct"]
            if rng.random() < p_correct:
                choice = correct
            else:
                choice = str(rng.choice([c for c in CHOICE_LABELS if c != correct]))
            answers.append({"question_id": q["id"], "choice": choice})

        body = {
            "reasoning": f"Mock reflection for slide {ctx.get('slide_index')}.",
            "transcripts": rows,
            "answers": answers,
        }
        return "Reflection done; actions follow.\n" + json.dumps(body)


def _persona_items(persona: Optional[dict[str, int]]) -> dict[str, float]:
    if persona is None:
        return {k: 0.5 for k in PERSONA_FIELDS}
    return encode_persona(PersonaProfile.from_dict(persona)).items


class MockProvider(ChatProvider):
    def __init__(
        self,
        policy: Optional[MockPolicy] = None,
        max_attempts: int = 3,
        base_backoff_s: float = 0.0,
        rate_limiter: Optional[RateLimiter] = None,
        sleep: Callable[[float], None] = lambda s: None,
    ):
        super().__init__(max_attempts, base_backoff_s, rate_limiter, sleep)
        self.policy = policy or MockPolicy()
        self.identity = f"mock:seed={self.policy.seed}"
        self.calls = 0
        self._lock = threading.Lock()

    def _send(self, request: ChatRequest) -> Completion:
        with self._lock:
            self.calls += 1
            n = self.calls
        if n <= self.policy.fail_first:
            raise TransientProviderError(f"injected failure on call {n}")
        if request.context.get("agent_index") in self.policy.fail_agents:
            raise TransientProviderError(f"injected failure for agent {request.context['agent_index']}")
        text = self.policy.respond(request)
        return Completion(
            text,
            prompt_tokens=len(request.system_text.split()) + len(request.user_text.split()),
            completion_tokens=len(text.split()),
        )


def make_provider(config: ProviderConfig, rate_limiter: Optional[RateLimiter] = None) -> ChatProvider:
    """Build the configured provider; ``NO_NETWORK=1`` forces the mock."""
    if config.kind == "mock" or os.environ.get("NO_NETWORK") == "1":
        return MockProvider(
            MockPolicy.from_dict(config.mock),
            max_attempts=config.max_attempts,
            rate_limiter=rate_limiter,
        )
    return RemoteProvider(config, rate_limiter)
