"""Pluggable completion backend with persistent caching.

The gateway sits between the pipeline and either a real HTTP completion
endpoint or a table-driven scripted mock. Every generation is cached by
(backend, prompt, params, sample_index); a warm cache replays a whole
experiment with zero backend traffic.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Protocol

import requests

from .cachestore import JsonlKvCache
from .core import DecodingParams, FinishReason, Generation
from .errors import (
    BackendTimeout,
    BackendUnreachable,
    InvalidSampling,
    MissingLogprobs,
)
from .prompting import PromptRendering


class BackendKind(str, Enum):
    HTTP_COMPLETION = "HttpCompletion"
    SCRIPTED_MOCK = "ScriptedMock"


@dataclass(frozen=True)
class BackendConfig:
    kind: BackendKind
    model_name: str
    endpoint_url: Optional[str] = None
    auth_env_var: str = "CERTPROBE_API_KEY"
    max_in_flight: int = 4
    timeout_ms: int = 60_000
    retry_limit: int = 3

    def __post_init__(self):
        if self.kind is BackendKind.HTTP_COMPLETION and not self.endpoint_url:
            raise ValueError("HttpCompletion backend requires endpoint_url")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")

    @classmethod
    def from_json_dict(cls, d: dict) -> "BackendConfig":
        return cls(
            kind=BackendKind(d["kind"]),
            model_name=d["model_name"],
            endpoint_url=d.get("endpoint_url"),
            auth_env_var=d.get("auth_env_var", "CERTPROBE_API_KEY"),
            max_in_flight=d.get("max_in_flight", 4),
            timeout_ms=d.get("timeout_ms", 60_000),
            retry_limit=d.get("retry_limit", 3),
        )


def fingerprint_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def fingerprint_params(params: DecodingParams) -> str:
    blob = json.dumps(params.to_json_dict(), sort_keys=True)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def cache_key(backend_id: str, prompt_fp: str, params_fp: str, sample_index: int) -> str:
    return f"{backend_id}|{prompt_fp}|{params_fp}|{sample_index}"


class CompletionBackend(Protocol):
    backend_id: str

    def generate(self, prompt_text: str, params: DecodingParams, n: int) -> list[Generation]:
        """Return n completions for the prompt; may omit logprobs."""
        ...


class ScriptedMockBackend:
    """Deterministic offline backend driven by a substring -> response table.

    Table format (JSON-loadable)::

        [{"match": "Question: Q1", "text": "Paris", "logprobs": [-0.1],
          "samples": [{"text": "Paris", "logprobs": [-0.1]}, ...]}, ...]

    ``samples`` are served cyclically for n-sample requests. Counters track
    backend traffic and peak concurrency so tests can assert the cache and
    in-flight contracts.
    """

    def __init__(self, table: list[dict], backend_id: str = "mock"):
        self.table = table
        self.backend_id = backend_id
        self.call_count = 0
        self._inflight = 0
        self.max_observed_inflight = 0
        self._lock = threading.Lock()

    @classmethod
    def from_json_file(cls, path: str | os.PathLike, backend_id: str = "mock") -> "ScriptedMockBackend":
        with open(path, "r", encoding="utf-8") as f:
            return cls(json.load(f), backend_id=backend_id)

    def _find_rule(self, prompt_text: str) -> dict:
        for rule in self.table:
            if rule["match"] in prompt_text:
                return rule
        raise BackendUnreachable(f"mock table has no rule matching prompt: {prompt_text[:80]!r}")

    def generate(self, prompt_text: str, params: DecodingParams, n: int) -> list[Generation]:
        with self._lock:
            self.call_count += 1
            self._inflight += 1
            self.max_observed_inflight = max(self.max_observed_inflight, self._inflight)
        try:
            rule = self._find_rule(prompt_text)
            fp = fingerprint_text(prompt_text)
            if n == 1 and params.temperature == 0:
                return [
                    Generation(
                        text=rule["text"],
                        token_logprobs=tuple(rule.get("logprobs", ())),
                        finish_reason=FinishReason.STOP,
                        prompt_fingerprint=fp,
                    )
                ]
            variants = rule.get("samples") or [
                {"text": rule["text"], "logprobs": rule.get("logprobs", [])}
            ]
            out = []
            for i in range(n):
                v = variants[i % len(variants)]
                out.append(
                    Generation(
                        text=v["text"],
                        token_logprobs=tuple(v.get("logprobs", ())),
                        finish_reason=FinishReason.STOP,
                        prompt_fingerprint=fp,
                    )
                )
            return out
        finally:
            with self._lock:
                self._inflight -= 1


class HttpCompletionBackend:
    """OpenAI-compatible /completions client with retries and bearer auth."""

    def __init__(self, config: BackendConfig, session: Optional[requests.Session] = None):
        if config.kind is not BackendKind.HTTP_COMPLETION:
            raise ValueError("HttpCompletionBackend requires an HttpCompletion config")
        self.config = config
        self.backend_id = f"http:{config.model_name}"
        self._session = session or requests.Session()

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(self.config.auth_env_var)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        return headers

    def generate(self, prompt_text: str, params: DecodingParams, n: int) -> list[Generation]:
        payload = {
            "model": self.config.model_name,
            "prompt": prompt_text,
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
            "logprobs": 1,
            "n": n,
        }
        url = self.config.endpoint_url.rstrip("/") + "/completions"
        last_err: Exception | None = None
        for attempt in range(self.config.retry_limit + 1):
            try:
                resp = self._session.post(
                    url,
                    json=payload,
                    headers=self._headers(),
                    timeout=self.config.timeout_ms / 1000.0,
                )
                resp.raise_for_status()
                return self._parse(resp.json(), prompt_text, n)
            except requests.Timeout as e:
                last_err = BackendTimeout(str(e))
            except (requests.ConnectionError, requests.HTTPError) as e:
                last_err = BackendUnreachable(str(e))
            if attempt < self.config.retry_limit:
                time.sleep(min(2.0**attempt, 8.0))
        raise last_err  # type: ignore[misc]

    def _parse(self, body: dict, prompt_text: str, n: int) -> list[Generation]:
        choices = body.get("choices", [])
        if len(choices) < n:
            raise BackendUnreachable(f"backend returned {len(choices)} choices, expected {n}")
        fp = fingerprint_text(prompt_text)
        out = []
        for choice in choices[:n]:
            lp = choice.get("logprobs") or {}
            token_lps = lp.get("token_logprobs") or []
            # some backends report epsilon-positive logprobs; clamp to 0
            token_lps = tuple(min(float(v), 0.0) for v in token_lps if v is not None)
            reason = choice.get("finish_reason") or "unknown"
            try:
                finish = FinishReason(reason)
            except ValueError:
                finish = FinishReason.UNKNOWN
            out.append(
                Generation(
                    text=choice.get("text", ""),
                    token_logprobs=token_lps,
                    finish_reason=finish,
                    prompt_fingerprint=fp,
                )
            )
        return out


class CompletionGateway:
    """Caching front door for a completion backend."""

    def __init__(self, backend: CompletionBackend, cache_dir: str | os.PathLike, max_in_flight: int = 4):
        self.backend = backend
        self.cache = JsonlKvCache(cache_dir, namespace="llm")
        self._sem = threading.Semaphore(max_in_flight)

    def _key(self, prompt: PromptRendering, params: DecodingParams, sample_index: int) -> str:
        return cache_key(
            self.backend.backend_id,
            fingerprint_text(prompt.text),
            fingerprint_params(params),
            sample_index,
        )

    def complete(self, prompt: PromptRendering, params: DecodingParams) -> Generation:
        """Single completion; token logprobs are required on this path."""
        gen = self.sample_n(prompt, params, 1, require_logprobs=True)[0]
        return gen

    def sample_n(
        self,
        prompt: PromptRendering,
        params: DecodingParams,
        n: int,
        require_logprobs: bool = False,
    ) -> list[Generation]:
        """n cached completions; sample order is stable across reruns."""
        if n > 1 and params.temperature == 0:
            raise InvalidSampling("n > 1 requires temperature > 0")
        keys = [self._key(prompt, params, i) for i in range(n)]
        cached = [self.cache.get(k) for k in keys]
        if all(c is not None for c in cached):
            gens = [Generation.from_json_dict(c) for c in cached]
        else:
            with self._sem:
                raw = self.backend.generate(prompt.text, params, n)
            self.cache.put_many({k: g.to_json_dict() for k, g in zip(keys, raw)})
            # read back through the cache so a concurrent first-writer wins
            gens = [Generation.from_json_dict(self.cache.get(k)) for k in keys]
        if require_logprobs:
            for g in gens:
                if not g.token_logprobs:
                    raise MissingLogprobs(
                        f"backend omitted token logprobs for prompt {prompt.question_id}"
                    )
        return gens
