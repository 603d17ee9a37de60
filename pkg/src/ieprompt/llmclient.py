"""Batch client for OpenAI-compatible ``/completions`` endpoints.

Only the model input (everything up to and including ``result = [``) is
sent, never the gold block. Each generation is returned as a full result
block, i.e. ``result = [`` followed by the model's continuation, so it can go
straight into :func:`ieprompt.outparse.parse_result`.
"""
from __future__ import annotations

import logging
import os
import random
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import httpx

from .codegen import RESULT_PREFIX, CompiledExample

logger = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ClientConfig:
    base_url: str = ""
    model_name: str = ""
    api_key_env: str = "IEPROMPT_API_KEY"
    max_new_tokens: int = 512
    temperature: float = 0.0
    stop_sequences: tuple[str, ...] = ("\n]",)
    timeout: float = 60.0
    max_retries: int = 3
    concurrency: int = 4
    backoff_base: float = 0.5
    backoff_max: float = 30.0

    def __post_init__(self):
        object.__setattr__(self, "stop_sequences", tuple(self.stop_sequences))
        if self.concurrency < 1:
            raise ConfigError("concurrency must be >= 1")
        if self.max_retries < 0:
            raise ConfigError("max_retries must be >= 0")

    @property
    def api_key(self) -> str | None:
        return os.environ.get(self.api_key_env)

    def check(self):
        if not self.base_url:
            raise ConfigError("no base_url configured")
        if not self.model_name:
            raise ConfigError("no model_name configured")
        if not self.api_key:
            raise ConfigError(f"environment variable {self.api_key_env} is not set")

    def to_dict(self) -> dict:
        # the key itself is never part of the config
        d = asdict(self)
        d["stop_sequences"] = list(self.stop_sequences)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ClientConfig":
        return cls(**data)


@dataclass
class GenerationRecord:
    doc_id: str
    generation: str = ""
    completion: str = ""
    latency: float = 0.0
    attempts: int = 0
    error: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def as_result_block(completion: str, finish_reason: str | None, cfg: ClientConfig) -> str:
    text = RESULT_PREFIX + completion
    if finish_reason == "stop" and cfg.stop_sequences:
        # the server strips the stop sequence; it carries the closing bracket
        text += cfg.stop_sequences[0]
    return text


class _Retryable(Exception):
    pass


def _backoff(cfg: ClientConfig, attempt: int) -> float:
    cap = min(cfg.backoff_max, cfg.backoff_base * (2**attempt))
    return random.uniform(cap / 2, cap)


def _request_once(client: httpx.Client, cfg: ClientConfig, prompt: str) -> tuple[str, str | None]:
    payload = {
        "model": cfg.model_name,
        "prompt": prompt,
        "max_tokens": cfg.max_new_tokens,
        "temperature": cfg.temperature,
    }
    if cfg.stop_sequences:
        payload["stop"] = list(cfg.stop_sequences)
    try:
        resp = client.post(
            cfg.base_url.rstrip("/") + "/completions",
            json=payload,
            headers={"Authorization": f"Bearer {cfg.api_key}"},
            timeout=cfg.timeout,
        )
    except httpx.TransportError as exc:
        raise _Retryable(f"{type(exc).__name__}: {exc}") from None
    if resp.status_code == 429 or resp.status_code >= 500:
        raise _Retryable(f"HTTP {resp.status_code}")
    if resp.status_code >= 400:
        raise RuntimeError(f"HTTP {resp.status_code}: {resp.text[:200]}")
    try:
        choice = resp.json()["choices"][0]
        return choice["text"], choice.get("finish_reason")
    except (ValueError, KeyError, IndexError, TypeError):
        raise RuntimeError(f"unexpected response body: {resp.text[:200]}") from None


def _generate_one(client: httpx.Client, cfg: ClientConfig, ex: CompiledExample) -> GenerationRecord:
    rec = GenerationRecord(ex.doc_id)
    start = time.monotonic()
    for attempt in range(cfg.max_retries + 1):
        rec.attempts = attempt + 1
        try:
            completion, finish = _request_once(client, cfg, ex.model_input)
        except _Retryable as exc:
            rec.error = str(exc)
            if attempt < cfg.max_retries:
                time.sleep(_backoff(cfg, attempt))
            continue
        except RuntimeError as exc:
            rec.error = str(exc)
            break
        rec.error = None
        rec.completion = completion
        rec.generation = as_result_block(completion, finish, cfg)
        break
    if rec.error:
        logger.warning("%s: giving up after %d attempt(s): %s", ex.doc_id, rec.attempts, rec.error)
    rec.latency = time.monotonic() - start
    return rec


def generate(
    prompts: Sequence[CompiledExample],
    cfg: ClientConfig,
    *,
    dry_run: bool = False,
    responder: Callable[[CompiledExample], str] | None = None,
    http_client: httpx.Client | None = None,
) -> list[GenerationRecord]:
    """One record per prompt, in input order.

    ``dry_run`` returns empty generations without touching the network.
    ``responder`` replaces the endpoint with a local function returning the
    continuation after ``result = [``.
    """
    if dry_run:
        return [GenerationRecord(ex.doc_id) for ex in prompts]
    if responder is not None:
        out = []
        for ex in prompts:
            completion = responder(ex)
            out.append(
                GenerationRecord(ex.doc_id, RESULT_PREFIX + completion, completion, attempts=1)
            )
        return out
    cfg.check()
    own = http_client is None
    client = http_client or httpx.Client()
    try:
        with ThreadPoolExecutor(max_workers=cfg.concurrency) as pool:
            return list(pool.map(lambda ex: _generate_one(client, cfg, ex), prompts))
    finally:
        if own:
            client.close()


def echo_gold(ex: CompiledExample) -> str:
    """Responder that answers with the gold continuation; useful for smoke tests."""
    return ex.prompt[len(ex.model_input):].rstrip("\n")
