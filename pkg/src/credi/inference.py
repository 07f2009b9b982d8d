"""Chat-completion backends and batch prediction with retry and bounded concurrency."""
from __future__ import annotations

import logging
import os
import random
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Sequence

import requests

from credi.corpus.types import Dimension, LabelMap
from credi.errors import ConfigError, ParseError
from credi.prompting import parse_response, scope_dimensions

logger = logging.getLogger(__name__)

API_KEY_ENV = "CREDI_API_KEY"
REMOTE_CHAT = "remote_chat"
MOCK_LOOKUP = "mock_lookup"
MOCK_RULE = "mock_rule"


class BackendError(Exception):
    """A failed completion attempt; ``retryable`` drives the retry loop."""

    def __init__(self, tag: str, retryable: bool):
        self.tag = tag
        self.retryable = retryable
        super().__init__(tag)


@dataclass(frozen=True)
class BackendConfig:
    kind: str = MOCK_RULE
    endpoint: str | None = None
    model: str | None = None
    temperature: float = 0.0
    max_retries: int = 3
    timeout: float = 60.0
    parallelism: int = 4
    backoff_base: float = 1.0
    backoff_factor: float = 2.0
    rule_answer: str = "polarity=neutral; rel_type=other; hierarchy=peer"

    def __post_init__(self):
        if self.kind not in (REMOTE_CHAT, MOCK_LOOKUP, MOCK_RULE):
            raise ConfigError(f"unknown backend kind {self.kind!r}")
        if self.kind == REMOTE_CHAT and not (self.endpoint and self.model):
            raise ConfigError("remote_chat backend needs both endpoint and model")
        if self.temperature < 0:
            raise ConfigError("temperature must be >= 0")
        if self.max_retries < 0 or self.parallelism < 1:
            raise ConfigError("max_retries must be >= 0 and parallelism >= 1")


class MockLookupBackend:
    """Returns a stored completion per instance id (e.g. gold answer lines)."""

    def __init__(self, table: Mapping[str, str]):
        self.table = dict(table)

    def complete(self, prompt: str, instance_id: str | None = None) -> str:
        if instance_id not in self.table:
            raise BackendError(f"NoLookupEntry({instance_id})", retryable=False)
        return self.table[instance_id]


class MockRuleBackend:
    """Returns the same completion for every prompt."""

    def __init__(self, answer: str):
        self.answer = answer

    def complete(self, prompt: str, instance_id: str | None = None) -> str:
        return self.answer


class RemoteChatBackend:
    """``POST <endpoint>/chat/completions`` with a bearer token from ``CREDI_API_KEY``."""

    def __init__(self, endpoint: str, model: str, temperature: float = 0.0,
                 timeout: float = 60.0, api_key: str | None = None):
        self.url = endpoint.rstrip("/") + "/chat/completions"
        self.model = model
        self.temperature = temperature
        self.timeout = timeout
        self.api_key = api_key
        self._session = requests.Session()

    def complete(self, prompt: str, instance_id: str | None = None) -> str:
        body = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.temperature,
        }
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        try:
            resp = self._session.post(self.url, json=body, headers=headers, timeout=self.timeout)
        except requests.Timeout:
            raise BackendError("Timeout", retryable=True) from None
        except requests.ConnectionError as exc:
            raise BackendError(f"ConnectionError({exc.__class__.__name__})", retryable=True) from None
        if resp.status_code != 200:
            retryable = resp.status_code == 429 or resp.status_code >= 500
            raise BackendError(f"HttpStatus({resp.status_code})", retryable=retryable)
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError):
            raise BackendError("MalformedResponse", retryable=False) from None


def make_backend(cfg: BackendConfig, lookup: Mapping[str, str] | None = None):
    if cfg.kind == MOCK_RULE:
        return MockRuleBackend(cfg.rule_answer)
    if cfg.kind == MOCK_LOOKUP:
        if lookup is None:
            raise ConfigError("mock_lookup backend needs a lookup table")
        return MockLookupBackend(lookup)
    key = os.environ.get(API_KEY_ENV)
    if not key:
        raise ConfigError(f"remote_chat backend needs the {API_KEY_ENV} environment variable")
    return RemoteChatBackend(cfg.endpoint, cfg.model, cfg.temperature, cfg.timeout, key)


@dataclass
class PredictionRecord:
    instance_id: str
    raw_text: str | None
    dimension: Dimension | None = None  # None for a joint prompt
    attempts: int = 0
    latency_ms: float = 0.0
    error: str | None = None
    parsed: dict[Dimension, object] | None = None
    parse_error: ParseError | None = None

    @property
    def dimensions(self) -> tuple[Dimension, ...]:
        return tuple(Dimension) if self.dimension is None else (self.dimension,)

    def to_dict(self) -> dict:
        """Serializable view; latency is left out so artifacts stay reproducible."""
        return {
            "instance_id": self.instance_id,
            "dimension": self.dimension.value if self.dimension else None,
            "raw_text": self.raw_text,
            "attempts": self.attempts,
            "error": self.error,
            "parsed": {d.value: lab.value for d, lab in self.parsed.items()} if self.parsed else None,
            "parse_error": self.parse_error.kind if self.parse_error else None,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PredictionRecord":
        from credi.corpus.types import RelationLabel

        dim = Dimension(data["dimension"]) if data.get("dimension") else None
        parsed = None
        if data.get("parsed"):
            parsed = {Dimension(k): RelationLabel.parse(Dimension(k), v) for k, v in data["parsed"].items()}
        perr = ParseError(data["parse_error"]) if data.get("parse_error") else None
        return cls(data["instance_id"], data.get("raw_text"), dim, data.get("attempts", 0),
                   0.0, data.get("error"), parsed, perr)


def _backoff_delay(cfg: BackendConfig, attempt: int, rng: random.Random) -> float:
    delay = cfg.backoff_base * cfg.backoff_factor ** (attempt - 1)
    return delay * (0.5 + rng.random())


def predict_one(backend, prompt: str, instance_id: str | None = None,
                cfg: BackendConfig | None = None, dimension: Dimension | None = None,
                sleep=time.sleep) -> PredictionRecord:
    """Complete one prompt, retrying transient failures with jittered exponential backoff.

    Failures never raise; they are tagged on the returned record.
    """
    cfg = cfg or BackendConfig()
    rng = random.Random()
    start = time.perf_counter()
    record = PredictionRecord(instance_id, None, dimension)
    for attempt in range(1, cfg.max_retries + 2):
        record.attempts = attempt
        try:
            record.raw_text = backend.complete(prompt, instance_id)
            record.error = None
            break
        except BackendError as exc:
            record.error = exc.tag
            if not exc.retryable:
                break
            if attempt == cfg.max_retries + 1:
                record.error = f"ExhaustedRetries({exc.tag})"
                break
            sleep(_backoff_delay(cfg, attempt, rng))
        except Exception as exc:  # a buggy backend must not sink the batch
            record.error = f"BackendException({exc.__class__.__name__})"
            break
    record.latency_ms = (time.perf_counter() - start) * 1000.0
    if record.error:
        logger.warning("prediction for %s failed: %s", instance_id, record.error)
    return record


def predict_batch(backend, prompts: Sequence[tuple], cfg: BackendConfig | None = None,
                  sleep=time.sleep) -> list[PredictionRecord]:
    """Run ``predict_one`` over ``(instance_id, text)`` or ``(instance_id, text, dimension)`` items.

    Output order matches input order whatever the completion order.
    """
    cfg = cfg or BackendConfig()
    if not prompts:
        raise ConfigError("predict_batch needs at least one prompt")
    slots: list[PredictionRecord | None] = [None] * len(prompts)

    def work(pos: int) -> None:
        item = prompts[pos]
        dimension = item[2] if len(item) > 2 else None
        slots[pos] = predict_one(backend, item[1], item[0], cfg, dimension, sleep)

    with ThreadPoolExecutor(max_workers=cfg.parallelism) as pool:
        list(pool.map(work, range(len(prompts))))
    return slots  # type: ignore[return-value]


def parse_records(records: Sequence[PredictionRecord]) -> list[PredictionRecord]:
    """Fill ``parsed`` or ``parse_error`` on every record (in place)."""
    for rec in records:
        rec.parsed = None
        rec.parse_error = None
        try:
            rec.parsed = parse_response(rec.raw_text or "", scope_dimensions(rec.dimensions))
        except ParseError as exc:
            rec.parse_error = exc
    return list(records)


def merge_predictions(records: Sequence[PredictionRecord]) -> dict[str, LabelMap]:
    """Combine per-dimension records into full label maps where all three parsed."""
    partial: dict[str, dict] = {}
    for rec in records:
        if rec.parsed:
            partial.setdefault(rec.instance_id, {}).update(rec.parsed)
    return {iid: labels for iid, labels in partial.items() if len(labels) == len(Dimension)}
