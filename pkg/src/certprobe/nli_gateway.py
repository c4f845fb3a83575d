"""NLI pair construction and pluggable 3-class logit scoring.

The pair format keeps the question as a shared prefix on both sides;
the [SEP] join is the scorer's tokenizer-level concern, never embedded
in the strings here.
"""

from __future__ import annotations

import hashlib
import os
import threading
from dataclasses import dataclass
from typing import Callable, Optional, Protocol

import requests

from .cachestore import JsonlKvCache
from .core import NliVerdict
from .errors import EmptyField, MalformedScorerReply, ScorerUnreachable


@dataclass(frozen=True)
class NliInput:
    text_a: str  # question + reference
    text_b: str  # question + candidate


def build_nli_input(
    question: str, reference: str, candidate: str, join: str = " "
) -> NliInput:
    """Pair (question+reference, question+candidate) for the scorer."""
    if not question:
        raise EmptyField("question must be nonempty")
    if not reference:
        raise EmptyField("reference must be nonempty")
    if not candidate:
        raise EmptyField("candidate must be nonempty")
    return NliInput(
        text_a=f"{question}{join}{reference}",
        text_b=f"{question}{join}{candidate}",
    )


class NliScorer(Protocol):
    model_version: str

    def score_pairs(self, pairs: list[NliInput]) -> list[NliVerdict]:
        ...


class CallableMockNli:
    """Rule-driven mock scorer; the rule maps (text_a, text_b) -> logit triple."""

    def __init__(
        self,
        rule: Callable[[str, str], tuple[float, float, float]],
        model_version: str = "mock-nli-1",
    ):
        self._rule = rule
        self.model_version = model_version
        self.call_count = 0

    def score_pairs(self, pairs: list[NliInput]) -> list[NliVerdict]:
        self.call_count += 1
        return [NliVerdict(*self._rule(p.text_a, p.text_b)) for p in pairs]


def equality_mock_nli(
    normalizer: Callable[[str], str],
    entail_logits: tuple[float, float, float] = (9.0, 0.0, -9.0),
    contradict_logits: tuple[float, float, float] = (-9.0, 0.0, 9.0),
    model_version: str = "mock-nli-eq",
) -> CallableMockNli:
    """Entailment iff the two texts normalize equal, else contradiction."""

    def rule(a: str, b: str) -> tuple[float, float, float]:
        return entail_logits if normalizer(a) == normalizer(b) else contradict_logits

    return CallableMockNli(rule, model_version=model_version)


def answer_equality_mock_nli(
    normalizer: Callable[[str], str],
    entail_logits: tuple[float, float, float] = (9.0, 0.0, -9.0),
    contradict_logits: tuple[float, float, float] = (-9.0, 0.0, 9.0),
    model_version: str = "mock-nli-answer-eq",
) -> CallableMockNli:
    """Equality mock aware of the shared question prefix.

    Both pair sides start with the same question; the rule drops the
    longest common leading token run, normalizes what remains (which also
    strips a leading (un)certainty phrase), and compares. Entailment iff
    the residual answers are equal, else contradiction.
    """

    def rule(a: str, b: str) -> tuple[float, float, float]:
        ta, tb = normalizer(a).split(), normalizer(b).split()
        k = 0
        while k < len(ta) and k < len(tb) and ta[k] == tb[k]:
            k += 1
        rest_a = normalizer(" ".join(ta[k:]))
        rest_b = normalizer(" ".join(tb[k:]))
        return entail_logits if rest_a == rest_b else contradict_logits

    return CallableMockNli(rule, model_version=model_version)


class HttpNliScorer:
    """Client for the sidecar wire format: POST {endpoint}/v1/nli."""

    def __init__(
        self,
        endpoint_url: str,
        timeout_ms: int = 60_000,
        session: Optional[requests.Session] = None,
    ):
        self.endpoint_url = endpoint_url.rstrip("/")
        self.timeout_s = timeout_ms / 1000.0
        self._session = session or requests.Session()
        self.model_version = self._fetch_version()

    def _fetch_version(self) -> str:
        try:
            resp = self._session.get(self.endpoint_url + "/healthz", timeout=self.timeout_s)
            resp.raise_for_status()
            return resp.json()["model_version"]
        except (requests.RequestException, KeyError, ValueError) as e:
            raise ScorerUnreachable(f"healthz failed: {e}") from e

    def score_pairs(self, pairs: list[NliInput]) -> list[NliVerdict]:
        payload = {"pairs": [{"text_a": p.text_a, "text_b": p.text_b} for p in pairs]}
        try:
            resp = self._session.post(
                self.endpoint_url + "/v1/nli", json=payload, timeout=self.timeout_s
            )
            resp.raise_for_status()
            body = resp.json()
        except requests.RequestException as e:
            raise ScorerUnreachable(str(e)) from e
        except ValueError as e:
            raise MalformedScorerReply(str(e)) from e
        try:
            verdicts = [
                NliVerdict(v["entailment"], v["neutral"], v["contradiction"])
                for v in body["verdicts"]
            ]
        except (KeyError, TypeError) as e:
            raise MalformedScorerReply(f"missing field in scorer reply: {e}") from e
        if len(verdicts) != len(pairs):
            raise MalformedScorerReply(
                f"scorer returned {len(verdicts)} verdicts for {len(pairs)} pairs"
            )
        return verdicts


class NliGateway:
    """Caching wrapper keyed by (model_version, pair hash)."""

    def __init__(self, scorer: NliScorer, cache_dir: str | os.PathLike, max_batch: int = 32):
        self.scorer = scorer
        self.cache = JsonlKvCache(cache_dir, namespace="nli")
        self.max_batch = max_batch
        self._lock = threading.Lock()

    def _key(self, pair: NliInput) -> str:
        h = hashlib.sha256()
        h.update(pair.text_a.encode("utf-8"))
        h.update(b"\x00")
        h.update(pair.text_b.encode("utf-8"))
        return f"{self.scorer.model_version}|{h.hexdigest()}"

    def score(self, pair: NliInput) -> NliVerdict:
        return self.score_batch([pair])[0]

    def score_batch(self, pairs: list[NliInput]) -> list[NliVerdict]:
        """Order-preserving batch scoring; equivalent to mapping score."""
        if not pairs:
            raise EmptyField("score_batch requires a nonempty list")
        results: list[Optional[NliVerdict]] = []
        misses: list[tuple[int, NliInput]] = []
        for i, pair in enumerate(pairs):
            cached = self.cache.get(self._key(pair))
            if cached is not None:
                results.append(NliVerdict.from_json_dict(cached))
            else:
                results.append(None)
                misses.append((i, pair))
        for start in range(0, len(misses), self.max_batch):
            chunk = misses[start : start + self.max_batch]
            verdicts = self.scorer.score_pairs([p for _, p in chunk])
            entries = {}
            for (i, pair), verdict in zip(chunk, verdicts):
                results[i] = verdict
                entries[self._key(pair)] = verdict.to_json_dict()
            self.cache.put_many(entries)
        return results  # type: ignore[return-value]
