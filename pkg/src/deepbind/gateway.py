"""Text-completion backends and critic-driven rejection sampling.

Two backends share one interface (``complete(prompt, params) -> Completion``):

* :class:`HttpBackend` speaks the plain completions-API wire shape.
* :class:`ScriptedBackend` is a pure function of ``(prompt, seed)`` and is what
  the test-suite and the offline pipeline run against.

:class:`Gateway` wraps either one with an in-flight cap and ordered fan-out.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Protocol, Sequence, TypeVar

import httpx

from .core import GenerationParams, derive_seed
from .errors import (
    BackendMalformed,
    BackendUnavailable,
    ExhaustedAttempts,
    UnparseableVerdict,
    ValidationError,
)

log = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

FINISH_REASONS = ("stop", "length", "error")
DEFAULT_MAX_ATTEMPTS = 8
DEFAULT_TRANSPORT_ATTEMPTS = 3


@dataclass(frozen=True)
class Completion:
    text: str
    finish_reason: str
    backend_tag: str

    def __post_init__(self) -> None:
        if self.finish_reason not in FINISH_REASONS:
            raise ValidationError(f"unknown finish_reason {self.finish_reason!r}")
        if self.finish_reason == "error" and self.text:
            raise ValidationError("an error completion carries no text")


@dataclass(frozen=True)
class JudgeVerdict:
    accept: bool
    reason: str

    def __post_init__(self) -> None:
        if not self.accept and not self.reason.strip():
            raise ValidationError("a rejection needs a reason")


class Backend(Protocol):
    tag: str

    def complete(self, prompt: str, params: GenerationParams) -> Completion: ...


def _check_request(prompt: str, params: GenerationParams) -> None:
    if not isinstance(prompt, str) or not prompt:
        raise ValueError("prompt must be a non-empty string")
    if not isinstance(params, GenerationParams):
        raise TypeError("params must be GenerationParams")


def apply_stops(text: str, stops: Sequence[str]) -> tuple[str, bool]:
    """Cut ``text`` at the earliest stop sequence; report whether one hit."""
    cut = len(text)
    for s in stops:
        if s:
            i = text.find(s)
            if 0 <= i < cut:
                cut = i
    return text[:cut], cut < len(text)


def prompt_key(prompt: str, seed: int) -> str:
    return hashlib.sha256(f"{seed}\x1f{prompt}".encode("utf-8")).hexdigest()


# -- scripted backend ------------------------------------------------------


Responder = Callable[[str, GenerationParams], str]


class ScriptedBackend:
    """Deterministic backend driven by recorded texts and/or a responder.

    Lookup order: a recording keyed on ``prompt_key(prompt, seed)``, then one
    keyed on ``prompt_key(prompt, "*")`` (any seed), then ``responder``. The
    responder must itself be a pure function of its arguments.
    """

    def __init__(
        self,
        responder: Responder | None = None,
        recordings: Mapping[str, str] | None = None,
        tag: str = "scripted",
    ) -> None:
        if responder is None and not recordings:
            raise ValueError("ScriptedBackend needs a responder or recordings")
        self.responder = responder
        self.recordings = dict(recordings or {})
        self.tag = tag

    @classmethod
    def from_fixture(cls, path: str | os.PathLike, responder: Responder | None = None) -> "ScriptedBackend":
        """Load a JSON object mapping prompt keys to completion texts."""
        with open(path, encoding="utf-8") as fh:
            recordings = json.load(fh)
        if not isinstance(recordings, dict) or not all(isinstance(v, str) for v in recordings.values()):
            raise BackendMalformed(f"{path}: fixture must map prompt keys to strings")
        return cls(responder=responder, recordings=recordings, tag=f"scripted:{Path(path).name}")

    def complete(self, prompt: str, params: GenerationParams) -> Completion:
        _check_request(prompt, params)
        text = self.recordings.get(prompt_key(prompt, params.seed))
        if text is None:
            text = self.recordings.get(prompt_key(prompt, "*"))  # type: ignore[arg-type]
        if text is None:
            if self.responder is None:
                raise BackendMalformed("no recording for prompt and no responder configured")
            text = self.responder(prompt, params)
        if not isinstance(text, str):
            raise BackendMalformed(f"responder returned {type(text).__name__}, not str")
        text, stopped = apply_stops(text, params.stop_sequences)
        words = text.split(" ")
        if len(words) > params.max_tokens:
            return Completion(" ".join(words[: params.max_tokens]), "length", self.tag)
        return Completion(text, "stop", self.tag)


# -- remote backend --------------------------------------------------------


class HttpBackend:
    """POSTs ``{model, prompt, max_tokens, temperature, stop, seed}`` to a completions URL."""

    retryable_status = frozenset({408, 425, 429, 500, 502, 503, 504})

    def __init__(
        self,
        url: str,
        model: str,
        token: str | None = None,
        *,
        timeout: float = 60.0,
        max_attempts: int = DEFAULT_TRANSPORT_ATTEMPTS,
        backoff: float = 0.5,
        client: httpx.Client | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        if max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        self.url = url
        self.model = model
        self.token = token
        self.max_attempts = max_attempts
        self.backoff = backoff
        self.client = client or httpx.Client(timeout=timeout)
        self.sleep = sleep
        self.tag = f"http:{model}"

    @classmethod
    def from_env(cls, url: str, model: str, auth_env: str | None, **kw: Any) -> "HttpBackend":
        token = os.environ.get(auth_env) if auth_env else None
        return cls(url, model, token, **kw)

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        return headers

    def complete(self, prompt: str, params: GenerationParams) -> Completion:
        _check_request(prompt, params)
        payload = {
            "model": self.model,
            "prompt": prompt,
            "max_tokens": params.max_tokens,
            "temperature": params.temperature,
            "stop": list(params.stop_sequences),
            "seed": params.seed,
        }
        last: Exception | None = None
        for attempt in range(self.max_attempts):
            if attempt:
                self.sleep(self.backoff * (2 ** (attempt - 1)))
            try:
                resp = self.client.post(self.url, json=payload, headers=self._headers())
            except httpx.TransportError as exc:
                last = exc
                log.warning("transport error on attempt %d/%d: %s", attempt + 1, self.max_attempts, exc)
                continue
            if resp.status_code in self.retryable_status:
                last = BackendUnavailable(f"HTTP {resp.status_code}")
                log.warning("HTTP %d on attempt %d/%d", resp.status_code, attempt + 1, self.max_attempts)
                continue
            if resp.status_code >= 400:
                raise BackendUnavailable(f"HTTP {resp.status_code}: {resp.text[:200]}")
            return self._parse(resp)
        raise BackendUnavailable(f"{self.url}: gave up after {self.max_attempts} attempts ({last})")

    def _parse(self, resp: httpx.Response) -> Completion:
        try:
            data = resp.json()
        except ValueError as exc:
            raise BackendMalformed(f"response is not JSON: {exc}") from exc
        try:
            choice = data["choices"][0]
            text = choice["text"]
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendMalformed(f"response lacks choices[0].text: {str(data)[:200]}") from exc
        if not isinstance(text, str):
            raise BackendMalformed("choices[0].text is not a string")
        reason = choice.get("finish_reason") if isinstance(choice, dict) else None
        finish = "length" if reason == "length" else "stop"
        return Completion(text, finish, self.tag)


# -- gateway ---------------------------------------------------------------


@dataclass(frozen=True)
class SampleResult:
    completion: Completion
    attempts: int
    audit: tuple[JudgeVerdict, ...]


class Gateway:
    """Caps in-flight backend calls and fans work out in request order."""

    def __init__(self, backend: Backend, max_in_flight: int = 4) -> None:
        if max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        self.backend = backend
        self.max_in_flight = max_in_flight
        self.tag = backend.tag
        self._slots = threading.BoundedSemaphore(max_in_flight)
        self._accepted: dict[str, SampleResult] = {}
        self._accept_lock = threading.Lock()

    def complete(self, prompt: str, params: GenerationParams) -> Completion:
        with self._slots:
            return self.backend.complete(prompt, params)

    def map(self, fn: Callable[[T], R], items: Iterable[T]) -> list[R]:
        """Apply ``fn`` concurrently; results come back in input order."""
        items = list(items)
        if self.max_in_flight == 1 or len(items) <= 1:
            return [fn(x) for x in items]
        with ThreadPoolExecutor(max_workers=self.max_in_flight) as pool:
            return list(pool.map(fn, items))

    def complete_many(self, prompts: Sequence[str], params: Sequence[GenerationParams]) -> list[Completion]:
        if len(prompts) != len(params):
            raise ValueError("one GenerationParams per prompt")
        return self.map(lambda pair: self.complete(*pair), list(zip(prompts, params)))

    def remember(self, request_id: str, result: SampleResult) -> SampleResult:
        """Record an acceptance; a second acceptance for the same id keeps the first."""
        with self._accept_lock:
            return self._accepted.setdefault(request_id, result)

    def accepted(self, request_id: str) -> SampleResult | None:
        with self._accept_lock:
            return self._accepted.get(request_id)


# -- critic ----------------------------------------------------------------

DIALOG_RUBRIC = """\
- REJECT if the answer contains a code block or programming code.
- REJECT if the answer contains markup (HTML tags, Markdown headings or tables, LaTeX).
- REJECT if the answer contradicts facts the speaker stated earlier (factual inconsistency).
- REJECT if the answer is not a first-person spoken reply in an interview (non-dialog text structure: link lists, forum boilerplate, a new interviewer question).
- Otherwise ACCEPT."""

CRITIC_TEMPLATE = """\
You are reviewing text produced for a simulated interview study.
Decide whether the candidate satisfies the rubric. Reply with ACCEPT or REJECT as the first word, followed by a short reason.

Rubric:
{rubric}

{context_block}Candidate:
<<<
{candidate}
>>>

Verdict:"""

_VERDICT_RE = re.compile(r"\s*[\W_]*([A-Za-z]+)(.*)", re.DOTALL)


def critic_prompt(candidate: str, rubric: str, context: str | None = None) -> str:
    block = f"Persona context:\n<<<\n{context}\n>>>\n\n" if context is not None else ""
    return CRITIC_TEMPLATE.format(rubric=rubric.strip(), context_block=block, candidate=candidate)


def parse_verdict(text: str) -> JudgeVerdict:
    m = _VERDICT_RE.match(text or "")
    if not m:
        raise UnparseableVerdict(text or "")
    word = m.group(1).lower()
    reason = re.sub(r"^[\W_]+", "", m.group(2).strip())
    if word == "accept":
        return JudgeVerdict(True, reason or "accepted")
    if word == "reject":
        return JudgeVerdict(False, reason or "rejected without reason")
    raise UnparseableVerdict(text)


def judge(
    backend: Backend,
    candidate: str,
    rubric: str,
    params: GenerationParams | None = None,
    context: str | None = None,
) -> JudgeVerdict:
    """Ask a critic for a binary verdict on ``candidate``."""
    params = params or GenerationParams.critic()
    if params.temperature != 0:
        raise ValueError("critic calls must use temperature 0")
    completion = backend.complete(critic_prompt(candidate, rubric, context), params)
    if completion.finish_reason == "error":
        raise UnparseableVerdict("", "critic backend returned an error")
    return parse_verdict(completion.text)


def attempt_params(gen: GenerationParams, attempt: int) -> GenerationParams:
    """Seed for the ``attempt``-th (1-based) draw of one logical request."""
    return gen.with_seed(derive_seed(gen.seed, "attempt", attempt))


def sample_until_accepted(
    backend: Backend,
    prompt: str,
    gen: GenerationParams,
    rubric: str,
    max_attempts: int = DEFAULT_MAX_ATTEMPTS,
    *,
    critic: Backend | None = None,
    critic_params: GenerationParams | None = None,
    check: Callable[[Completion], JudgeVerdict] | None = None,
    request_id: str | None = None,
) -> SampleResult:
    """Draw completions until the critic (or ``check``) accepts one.

    ``check`` replaces the default rubric judgement when given. Transport
    failures propagate; they are not counted as attempts.
    """
    if max_attempts < 1:
        raise ValueError("max_attempts must be >= 1")
    gateway = backend if isinstance(backend, Gateway) else None
    if gateway is not None and request_id is not None:
        done = gateway.accepted(request_id)
        if done is not None:
            return done
    critic = critic or backend
    audit: list[JudgeVerdict] = []
    for attempt in range(1, max_attempts + 1):
        completion = backend.complete(prompt, attempt_params(gen, attempt))
        if completion.finish_reason == "error":
            verdict = JudgeVerdict(False, "backend returned an error")
        elif check is not None:
            verdict = check(completion)
        else:
            verdict = judge(critic, completion.text, rubric, critic_params)
        audit.append(verdict)
        if verdict.accept:
            result = SampleResult(completion, attempt, tuple(audit))
            if gateway is not None and request_id is not None:
                result = gateway.remember(request_id, result)
            return result
    raise ExhaustedAttempts(max_attempts, audit)
