"""Batch annotation through a chat-completion endpoint, with a disk cache.

Every completed request is written to a content-addressed, append-only JSONL
cache before its result is surfaced, so a killed batch resumes from the cache
at no cost. The cache key binds the exact model, prompt id, prompt body, and
record, which makes prompt edits invalidate old completions automatically.

Spend is tracked per model against a hard budget cap. Dispatch reserves an
estimated cost up front, so a batch can overshoot the cap by at most one
in-flight request even when requests run concurrently.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import random
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Protocol

from .corpus import PublicationRecord
from .prompts import PromptTemplate, render_prompt

logger = logging.getLogger(__name__)

MAX_ATTEMPTS = 5


class GatewayError(Exception):
    pass


class BudgetExhaustedError(GatewayError):
    pass


class ProviderTransientError(GatewayError):
    """Retryable failure: transport error, HTTP 5xx, or HTTP 429."""


class ProviderPermanentError(GatewayError):
    """Non-retryable failure: any other HTTP 4xx."""


@dataclass(frozen=True)
class ProviderConfig:
    endpoint: str
    model_id: str
    max_in_flight: int = 4
    requests_per_minute: float = 60.0
    price_per_1k_input_tokens: float = 0.0
    price_per_1k_output_tokens: float = 0.0
    budget_cap: float = math.inf
    api_key_env: str = "ANNOTATION_API_KEY"
    temperature: float = 0.0
    max_completion_tokens: int = 64
    estimated_completion_tokens: int = 16  # used only for budget reservations
    retry_base_seconds: float = 0.5
    timeout_seconds: float = 60.0

    def request_cost(self, tokens_in: int, tokens_out: int) -> float:
        return (
            tokens_in / 1000.0 * self.price_per_1k_input_tokens
            + tokens_out / 1000.0 * self.price_per_1k_output_tokens
        )


def estimate_cost(
    n_records: int, mean_tokens_in: float, mean_tokens_out: float, config: ProviderConfig
) -> float:
    """Linear extrapolation of annotation cost over a record count."""
    if n_records < 0 or mean_tokens_in < 0 or mean_tokens_out < 0:
        raise ValueError("record and token counts must be non-negative")
    per_record = (
        mean_tokens_in / 1000.0 * config.price_per_1k_input_tokens
        + mean_tokens_out / 1000.0 * config.price_per_1k_output_tokens
    )
    return n_records * per_record


@dataclass(frozen=True)
class CompletionRequest:
    pmid: str
    prompt: str
    prompt_id: str
    family: int
    model_id: str


@dataclass(frozen=True)
class CompletionResponse:
    text: str
    tokens_in: int
    tokens_out: int


class Provider(Protocol):
    def complete(self, request: CompletionRequest) -> CompletionResponse: ...


def cache_key(model_id: str, prompt_id: str, prompt_body: str, pmid: str) -> str:
    body_digest = hashlib.sha256(prompt_body.encode("utf-8")).hexdigest()
    payload = json.dumps([model_id, prompt_id, body_digest, pmid])
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class CompletionCacheEntry:
    key: str
    model_id: str
    prompt_id: str
    pmid: str
    raw: str
    tokens_in: int
    tokens_out: int
    cost: float
    timestamp: float

    def to_json_dict(self) -> dict:
        return {
            "key": self.key,
            "model_id": self.model_id,
            "prompt_id": self.prompt_id,
            "pmid": self.pmid,
            "raw": self.raw,
            "tokens_in": self.tokens_in,
            "tokens_out": self.tokens_out,
            "cost": self.cost,
            "timestamp": self.timestamp,
        }


class CompletionCache:
    """Append-only JSONL cache. First write for a key wins; entries are never
    rewritten. Reopening the same path restores all prior entries."""

    def __init__(self, path: str):
        self.path = path
        self._entries: dict[str, CompletionCacheEntry] = {}
        self._lock = threading.Lock()
        if os.path.exists(path):
            with open(path, "r", encoding="utf-8") as fh:
                for line in fh:
                    if not line.strip():
                        continue
                    obj = json.loads(line)
                    entry = CompletionCacheEntry(**obj)
                    self._entries.setdefault(entry.key, entry)

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, key: str) -> CompletionCacheEntry | None:
        return self._entries.get(key)

    def put(self, entry: CompletionCacheEntry) -> bool:
        """Append unless the key is already present. Returns True when written."""
        with self._lock:
            if entry.key in self._entries:
                return False
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(entry.to_json_dict(), ensure_ascii=False))
                fh.write("\n")
            self._entries[entry.key] = entry
        return True

    def spend_for_model(self, model_id: str) -> float:
        return sum(e.cost for e in self._entries.values() if e.model_id == model_id)


class _TokenBucket:
    """Paces dispatch so the request rate never exceeds the configured limit."""

    def __init__(self, per_minute: float):
        if per_minute <= 0:
            raise ValueError("requests_per_minute must be positive")
        self.interval = 60.0 / per_minute
        self._lock = threading.Lock()
        self._next_free = 0.0

    def acquire(self) -> None:
        with self._lock:
            now = time.monotonic()
            start = max(now, self._next_free)
            self._next_free = start + self.interval
            wait = start - now
        if wait > 0:
            time.sleep(wait)


class _BudgetLedger:
    def __init__(self, cap: float, already_spent: float):
        self.cap = cap
        self.spent = already_spent
        self.reserved = 0.0
        self._lock = threading.Lock()

    def try_reserve(self, estimate: float) -> bool:
        with self._lock:
            if self.spent + self.reserved + estimate > self.cap:
                return False
            self.reserved += estimate
            return True

    def settle(self, estimate: float, actual: float) -> None:
        with self._lock:
            self.reserved -= estimate
            self.spent += actual


@dataclass
class BatchResult:
    """Outcome of one annotate_batch call.

    completions: (pmid, raw completion) in input order, cache hits included.
    errors: per-record failures that did not stop the batch.
    pending: records never dispatched (budget stop), in input order.
    """

    completions: list[tuple[str, str]] = field(default_factory=list)
    errors: list[dict] = field(default_factory=list)
    pending: list[str] = field(default_factory=list)
    from_cache: int = 0
    requested: int = 0
    spend: float = 0.0

    @property
    def budget_stopped(self) -> bool:
        return bool(self.pending)


def _estimate_tokens(text: str) -> int:
    # crude 4-chars-per-token heuristic, used for reservations and mock usage
    return max(1, math.ceil(len(text) / 4))


def annotate_batch(
    records: Iterable[PublicationRecord],
    template: PromptTemplate,
    provider: Provider,
    cache: CompletionCache,
    config: ProviderConfig,
    sleep: Callable[[float], None] = time.sleep,
) -> BatchResult:
    """Annotate records with one prompt, deduplicating through the cache.

    Transient provider failures retry with exponential backoff, at most
    MAX_ATTEMPTS tries. Permanent failures are recorded per record and the
    batch continues. Hitting the budget cap stops dispatch cleanly and the
    untouched records come back in `pending`.
    """
    records = list(records)
    missing = [r.pmid for r in records if not r.abstract]
    if missing:
        raise GatewayError(
            f"{len(missing)} record(s) have no abstract (first: {missing[0]})"
        )

    already_spent = cache.spend_for_model(config.model_id)
    if already_spent >= config.budget_cap:
        raise BudgetExhaustedError(
            f"spend {already_spent:.2f} already at or over cap {config.budget_cap:.2f}"
        )
    ledger = _BudgetLedger(config.budget_cap, already_spent)
    bucket = _TokenBucket(config.requests_per_minute)
    result = BatchResult(requested=len(records))

    # Resolve cache hits first; only misses go to the provider.
    hits: dict[str, str] = {}
    misses: list[tuple[PublicationRecord, str, str]] = []  # record, key, prompt
    for rec in records:
        key = cache_key(config.model_id, template.id, template.body, rec.pmid)
        entry = cache.get(key)
        if entry is not None:
            hits[rec.pmid] = entry.raw
        else:
            misses.append((rec, key, render_prompt(template, rec)))
    result.from_cache = len(hits)

    stop = threading.Event()

    def call_with_retries(request: CompletionRequest) -> CompletionResponse:
        for attempt in range(1, MAX_ATTEMPTS + 1):
            try:
                bucket.acquire()
                return provider.complete(request)
            except ProviderTransientError as exc:
                if attempt == MAX_ATTEMPTS:
                    raise
                backoff = config.retry_base_seconds * (2 ** (attempt - 1))
                logger.warning(
                    "pmid %s attempt %d/%d failed (%s); retrying in %.2fs",
                    request.pmid, attempt, MAX_ATTEMPTS, exc, backoff,
                )
                sleep(backoff)
        raise AssertionError("unreachable")

    completed: dict[str, str] = {}
    failures: dict[str, str] = {}
    pending: list[str] = []

    def work(rec: PublicationRecord, key: str, prompt: str) -> None:
        estimate = config.request_cost(
            _estimate_tokens(prompt), config.estimated_completion_tokens
        )
        if stop.is_set() or not ledger.try_reserve(estimate):
            stop.set()
            pending.append(rec.pmid)
            return
        request = CompletionRequest(
            pmid=rec.pmid,
            prompt=prompt,
            prompt_id=template.id,
            family=template.family,
            model_id=config.model_id,
        )
        try:
            response = call_with_retries(request)
        except GatewayError as exc:
            ledger.settle(estimate, 0.0)
            failures[rec.pmid] = str(exc)
            return
        cost = config.request_cost(response.tokens_in, response.tokens_out)
        ledger.settle(estimate, cost)
        entry = CompletionCacheEntry(
            key=key,
            model_id=config.model_id,
            prompt_id=template.id,
            pmid=rec.pmid,
            raw=response.text,
            tokens_in=response.tokens_in,
            tokens_out=response.tokens_out,
            cost=cost,
            timestamp=time.time(),
        )
        cache.put(entry)  # cached before the result is surfaced
        completed[rec.pmid] = response.text

    if misses:
        with ThreadPoolExecutor(max_workers=config.max_in_flight) as pool:
            futures = [pool.submit(work, rec, key, prompt) for rec, key, prompt in misses]
            for fut in futures:
                fut.result()

    pending_set = set(pending)
    for rec in records:
        if rec.pmid in hits:
            result.completions.append((rec.pmid, hits[rec.pmid]))
        elif rec.pmid in completed:
            result.completions.append((rec.pmid, completed[rec.pmid]))
        elif rec.pmid in failures:
            result.errors.append({"pmid": rec.pmid, "error": failures[rec.pmid]})
        elif rec.pmid in pending_set:
            result.pending.append(rec.pmid)
    result.spend = ledger.spent
    if result.pending:
        logger.warning(
            "budget cap %.2f reached: %d record(s) left pending",
            config.budget_cap, len(result.pending),
        )
    return result


# ---------------------------------------------------------------------------
# Providers


class HttpProvider:
    """JSON-over-HTTP chat-completion provider. The API key is read from the
    environment variable named in the config, never from the config itself."""

    def __init__(self, config: ProviderConfig):
        self.config = config

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.config.api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        import requests

        payload = {
            "model": self.config.model_id,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": self.config.temperature,
            "max_tokens": self.config.max_completion_tokens,
        }
        try:
            resp = requests.post(
                self.config.endpoint,
                json=payload,
                headers=self._headers(),
                timeout=self.config.timeout_seconds,
            )
        except requests.RequestException as exc:
            raise ProviderTransientError(f"transport failure: {exc}") from exc
        if resp.status_code == 429 or resp.status_code >= 500:
            raise ProviderTransientError(f"HTTP {resp.status_code}")
        if resp.status_code >= 400:
            raise ProviderPermanentError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            body = resp.json()
            text = body["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError) as exc:
            raise ProviderPermanentError(f"malformed response body: {exc}") from exc
        usage = body.get("usage", {})
        return CompletionResponse(
            text=text,
            tokens_in=int(usage.get("prompt_tokens", _estimate_tokens(request.prompt))),
            tokens_out=int(usage.get("completion_tokens", _estimate_tokens(text))),
        )


_MOCK_CATEGORIES = (
    "no drug",
    "meta-analysis or review",
    "retrospective reanalysis",
    "observational",
    "protocol without results",
    "no human subjects",
    "animal",
    "other",
)

_MOCK_EXPLANATIONS = (
    "The study is observational: exposure was not assigned by the investigators.",
    "This publication pools previously published trials rather than reporting a new one.",
    "The intervention under study is not a drug.",
    "This is a retrospective analysis of data from an earlier trial.",
    "The publication describes a protocol without reporting results.",
    "The subjects are animals, not humans.",
)


class MockProvider:
    """Deterministic stand-in provider for tests and dry runs.

    Flips each gold verdict with the configured error rates. The decision for
    a pmid depends only on (seed, pmid), so batching order and concurrency do
    not change outputs. Test hooks record call counts, concurrency, and call
    times; fault injection simulates flaky or broken upstreams.
    """

    def __init__(
        self,
        seed: int,
        tpr: float,
        fpr: float,
        gold: Mapping[str, object],
        latency: float = 0.0,
        transient_failures: dict[str, int] | None = None,
        permanent_failures: set[str] | None = None,
    ):
        self.seed = seed
        self.tpr = tpr
        self.fpr = fpr
        self.gold = {pmid: _as_bool(v) for pmid, v in gold.items()}
        self.latency = latency
        self.transient_failures = dict(transient_failures or {})
        self.permanent_failures = set(permanent_failures or ())
        self.calls = 0
        self.peak_in_flight = 0
        self.call_times: list[float] = []
        self._in_flight = 0
        self._lock = threading.Lock()

    def _rng(self, pmid: str) -> random.Random:
        digest = hashlib.sha256(f"{self.seed}:{pmid}".encode("utf-8")).digest()
        return random.Random(int.from_bytes(digest[:8], "big"))

    def decide(self, pmid: str) -> bool:
        """Would this provider call the record a trial? Deterministic per pmid."""
        if pmid not in self.gold:
            raise GatewayError(f"mock provider has no gold verdict for pmid {pmid!r}")
        rng = self._rng(pmid)
        u = rng.random()
        return u < (self.tpr if self.gold[pmid] else self.fpr)

    def completion_text(self, pmid: str, family: int) -> str:
        if self.decide(pmid):
            return "TRUE"
        rng = self._rng(pmid)
        rng.random()  # skip the decision draw so text choice is independent
        if family == 1:
            return "FALSE"
        if family == 2:
            return rng.choice(_MOCK_CATEGORIES)
        return rng.choice(_MOCK_EXPLANATIONS)

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        with self._lock:
            self.calls += 1
            self._in_flight += 1
            self.peak_in_flight = max(self.peak_in_flight, self._in_flight)
            self.call_times.append(time.monotonic())
            left = self.transient_failures.get(request.pmid, 0)
            if left > 0:
                self.transient_failures[request.pmid] = left - 1
                self._in_flight -= 1
                raise ProviderTransientError("injected HTTP 503")
            if request.pmid in self.permanent_failures:
                self._in_flight -= 1
                raise ProviderPermanentError("injected HTTP 400")
        try:
            if self.latency:
                time.sleep(self.latency)
            text = self.completion_text(request.pmid, request.family)
            return CompletionResponse(
                text=text,
                tokens_in=_estimate_tokens(request.prompt),
                tokens_out=_estimate_tokens(text),
            )
        finally:
            with self._lock:
                self._in_flight -= 1


def _as_bool(verdict: object) -> bool:
    if isinstance(verdict, bool):
        return verdict
    if verdict in ("include", 1):
        return True
    if verdict in ("exclude", 0):
        return False
    raise ValueError(f"cannot read gold verdict {verdict!r}")


def mock_provider(seed: int, tpr: float, fpr: float, gold: Mapping[str, object]) -> MockProvider:
    return MockProvider(seed=seed, tpr=tpr, fpr=fpr, gold=gold)
