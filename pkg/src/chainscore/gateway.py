"""Provider-agnostic LLM access with a content-addressed response cache.

Every model call in the pipeline flows through Gateway.complete, which makes
runs reproducible: the cache key is a sha256 over the exact request (model,
template, rendered prompt, temperature, seed, max_output), so a rerun against
a warm cache issues zero provider calls and yields byte-identical artifacts.

Providers are pluggable. OpenAIProvider speaks the OpenAI-compatible chat
completions wire format; MockProvider replays a JSONL script keyed by request
digest (used by the bundled fixtures); ScriptedProvider is an in-memory
variant for unit tests.

Also home to parse_generation, the Stage-1 output parser that splits a raw
completion into citation-bearing statements plus the short answer.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import tempfile
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

from .model import Citation, LongFormAnswer, ShortAnswer, Statement, WHOLE_DOCUMENT
from .prompts import TemplateId, render_prompt

log = logging.getLogger(__name__)


class GatewayError(Exception):
    pass


class ProviderUnavailable(GatewayError):
    """Terminal provider failure (bad credentials, unscripted digest, ...)."""


class RateLimited(GatewayError):
    """429 responses persisted through the whole retry budget."""


class EmptyCompletion(GatewayError):
    """Provider kept returning empty text through the retry budget."""


class TransientProviderError(GatewayError):
    """Internal: retryable failure (429, 5xx, transport)."""

    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


class ParseError(GatewayError):
    pass


class NoAnswerSection(ParseError):
    pass


class NoStatements(ParseError):
    pass


@dataclass(frozen=True)
class LlmRequest:
    model_id: str
    template_id: TemplateId
    bindings: Mapping[str, str]
    temperature: float = 1.0
    seed: int | None = None
    max_output: int = 2048

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")
        if self.max_output <= 0:
            raise ValueError("max_output must be positive")


@dataclass(frozen=True)
class LlmResponse:
    text: str
    cached: bool
    provider: str
    latency_ms: float = 0.0


def cache_key(request: LlmRequest, prompt: str | None = None) -> str:
    """Digest of everything that can influence the completion."""
    if prompt is None:
        prompt = render_prompt(request.template_id, dict(request.bindings))
    payload = {
        "model": request.model_id,
        "template": request.template_id.value,
        "prompt": prompt,
        "temperature": request.temperature,
        "seed": request.seed,
        "max_output": request.max_output,
    }
    blob = json.dumps(payload, ensure_ascii=False, sort_keys=True)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


class ResponseCache:
    """Write-once file cache: cache_dir/<digest[:2]>/<digest>."""

    def __init__(self, cache_dir: str | Path):
        self.cache_dir = Path(cache_dir)

    def _path(self, digest: str) -> Path:
        return self.cache_dir / digest[:2] / digest

    def get(self, digest: str) -> str | None:
        path = self._path(digest)
        if not path.exists():
            return None
        return path.read_text(encoding="utf-8")

    def put(self, digest: str, text: str) -> None:
        path = self._path(digest)
        if path.exists():
            return
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(text)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise


class Provider:
    """Interface: send one prompt, return completion text."""

    name = "provider"

    def send(self, request: LlmRequest, prompt: str, digest: str) -> str:
        raise NotImplementedError


class OpenAIProvider(Provider):
    """OpenAI-compatible /chat/completions endpoint."""

    name = "openai"

    def __init__(
        self,
        api_key: str,
        base_url: str = "https://api.openai.com/v1",
        timeout: float = 120.0,
    ):
        self.api_key = api_key
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout

    def send(self, request: LlmRequest, prompt: str, digest: str) -> str:
        import requests

        payload: dict = {
            "model": request.model_id,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_output,
        }
        if request.seed is not None:
            payload["seed"] = request.seed
        try:
            resp = requests.post(
                f"{self.base_url}/chat/completions",
                json=payload,
                headers={"Authorization": f"Bearer {self.api_key}"},
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise TransientProviderError(f"transport failure: {exc}") from exc
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransientProviderError(
                f"provider status {resp.status_code}", status=resp.status_code
            )
        if resp.status_code != 200:
            raise ProviderUnavailable(
                f"provider status {resp.status_code}: {resp.text[:200]}"
            )
        body = resp.json()
        try:
            return body["choices"][0]["message"]["content"] or ""
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderUnavailable(f"malformed completion body: {exc}") from exc


class MockProvider(Provider):
    """Replays completions from a JSONL script of {digest, text} rows."""

    name = "mock"

    def __init__(self, script: Mapping[str, str]):
        self.script = dict(script)

    @staticmethod
    def from_jsonl(path: str | Path) -> "MockProvider":
        script: dict[str, str] = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                row = json.loads(line)
                script[row["digest"]] = row["text"]
        return MockProvider(script)

    def send(self, request: LlmRequest, prompt: str, digest: str) -> str:
        if digest not in self.script:
            raise ProviderUnavailable(
                f"mock script has no entry for digest {digest}"
                f" (model={request.model_id}, template={request.template_id.value})"
            )
        return self.script[digest]


class ScriptedProvider(Provider):
    """In-memory provider for tests: fixed responses plus call counting.

    responses maps digest -> text or a list of texts consumed per call
    (lets a test script `fail once, then succeed` behavior). A callable
    entry is invoked with the request and may raise.
    """

    name = "scripted"

    def __init__(self, responses: Mapping[str, object] | None = None, default: str | None = None):
        self.responses = dict(responses or {})
        self.default = default
        self.calls: list[str] = []
        self._lock = threading.Lock()

    @property
    def call_count(self) -> int:
        return len(self.calls)

    def send(self, request: LlmRequest, prompt: str, digest: str) -> str:
        with self._lock:
            self.calls.append(digest)
            entry = self.responses.get(digest, self.default)
            if entry is None:
                raise ProviderUnavailable(f"no scripted response for digest {digest}")
            if isinstance(entry, list):
                entry = entry.pop(0) if len(entry) > 1 else entry[0]
        if callable(entry):
            return entry(request)  # type: ignore[operator]
        return str(entry)


class Gateway:
    """Cache-fronted, retrying, concurrency-bounded completion client."""

    def __init__(
        self,
        provider: Provider,
        cache_dir: str | Path,
        retry_budget: int = 3,
        backoff_base: float = 1.0,
        concurrency: int = 4,
        sleeper: Callable[[float], None] = time.sleep,
    ):
        self.provider = provider
        self.cache = ResponseCache(cache_dir)
        self.retry_budget = retry_budget
        self.backoff_base = backoff_base
        self.sleeper = sleeper
        self._sem = threading.Semaphore(max(1, concurrency))
        self._lock = threading.Lock()
        self.provider_calls = 0
        self.cache_hits = 0

    def complete(self, request: LlmRequest) -> LlmResponse:
        prompt = render_prompt(request.template_id, dict(request.bindings))
        digest = cache_key(request, prompt)

        hit = self.cache.get(digest)
        if hit is not None:
            with self._lock:
                self.cache_hits += 1
            return LlmResponse(text=hit, cached=True, provider=self.provider.name)

        last_error: GatewayError | None = None
        started = time.monotonic()
        for attempt in range(self.retry_budget + 1):
            if attempt > 0:
                self.sleeper(self.backoff_base * (2 ** (attempt - 1)))
            try:
                with self._sem:
                    with self._lock:
                        self.provider_calls += 1
                    text = self.provider.send(request, prompt, digest)
            except TransientProviderError as exc:
                log.warning("transient provider failure (attempt %d): %s", attempt + 1, exc)
                last_error = exc
                continue
            if not text.strip():
                log.warning("empty completion (attempt %d) for digest %s", attempt + 1, digest)
                last_error = EmptyCompletion(f"empty completion for digest {digest}")
                continue
            self.cache.put(digest, text)
            latency = (time.monotonic() - started) * 1000.0
            return LlmResponse(
                text=text, cached=False, provider=self.provider.name, latency_ms=latency
            )

        if isinstance(last_error, EmptyCompletion):
            raise last_error
        if isinstance(last_error, TransientProviderError) and last_error.status == 429:
            raise RateLimited(str(last_error))
        raise ProviderUnavailable(str(last_error))


CITATION_RE = re.compile(r"\[(\d+)\]((?:\s*<S\d+>)*)")
_SENT_TAG_RE = re.compile(r"<S(\d+)>")
_STATEMENT_RE = re.compile(r"<STATEMENT>(.*?)</STATEMENT>", re.IGNORECASE | re.DOTALL)
_ANSWER_MARK_RE = re.compile(r"(?i)(?:\*{1,2}|-)?\s*answer\s*\*{0,2}\s*[::]\s*\*{0,2}\s*")
_REASONING_MARK_RE = re.compile(r"(?i)^\s*(?:\*{1,2}|-)?\s*reasoning\s*\*{0,2}\s*[::]\s*\*{0,2}\s*")
_SENTENCE_SPLIT_RE = re.compile(r"(?<=[.!?])\s+(?=[A-Z])")


def extract_citations(text: str) -> tuple[str, tuple[Citation, ...]]:
    """Pull citation tokens out of a span of generated text.

    Returns (clean_text, citations). Citations are grouped per document in
    first-appearance order with sentence ids unioned; a bare "[d]" with no
    sentence tags becomes the whole-document sentinel.
    """
    by_doc: dict[int, set[int]] = {}
    order: list[int] = []

    def _consume(match: re.Match) -> str:
        doc_id = int(match.group(1))
        sids = {int(m) for m in _SENT_TAG_RE.findall(match.group(2))}
        if not sids:
            sids = {WHOLE_DOCUMENT}
        if doc_id not in by_doc:
            by_doc[doc_id] = set()
            order.append(doc_id)
        by_doc[doc_id] |= sids
        return " "

    clean = CITATION_RE.sub(_consume, text)
    clean = re.sub(r"\s+([.,;:!?])", r"\1", clean)
    clean = re.sub(r"\s+", " ", clean).strip()
    citations = tuple(Citation(doc_id=d, sentence_ids=frozenset(by_doc[d])) for d in order)
    return clean, citations


def _clean_short_answer(text: str) -> str:
    line = text.strip().splitlines()[0] if text.strip() else ""
    return line.strip().strip("*_` ").strip()


def parse_generation(
    raw: str, sentence_fallback: bool = False
) -> tuple[LongFormAnswer, ShortAnswer]:
    """Split a Stage-1 completion into statements and the short answer.

    The answer section is located by the last "Answer:" marker (markdown
    variants tolerated); everything before it is the reasoning section.
    Statements come from <STATEMENT>...</STATEMENT> spans; when a model
    ignored the span markers entirely, sentence_fallback=True degrades to
    sentence splitting instead of raising NoStatements.
    """
    marks = list(_ANSWER_MARK_RE.finditer(raw))
    if not marks:
        raise NoAnswerSection("no Answer section in completion")
    mark = marks[-1]
    short_text = _clean_short_answer(raw[mark.end():])
    if not short_text:
        raise NoAnswerSection("Answer section is empty")

    reasoning = raw[: mark.start()]
    reasoning = _REASONING_MARK_RE.sub("", reasoning.strip(), count=1).strip()

    spans = [m.group(1) for m in _STATEMENT_RE.finditer(reasoning)]
    if not spans:
        if not sentence_fallback:
            raise NoStatements("no <STATEMENT> spans in reasoning section")
        spans = [s for s in _SENTENCE_SPLIT_RE.split(reasoning) if s.strip()]
        if not spans:
            raise NoStatements("reasoning section is empty")

    statements = []
    for span in spans:
        text, citations = extract_citations(span)
        if not text and not citations:
            continue
        statements.append(Statement(text=text, citations=citations))
    if not statements:
        raise NoStatements("statement spans were all empty")

    return (
        LongFormAnswer(statements=tuple(statements), raw_text=reasoning),
        ShortAnswer(text=short_text),
    )
