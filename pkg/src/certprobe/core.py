"""Shared domain types for the detection pipeline.

Every value here is immutable and JSONL-serializable; all inter-module
communication happens through these records.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional


class Factuality(str, Enum):
    FACTUAL = "Factual"
    NON_FACTUAL = "NonFactual"


class Consistency(str, Enum):
    CONSISTENT = "Consistent"
    NON_CONSISTENT = "NonConsistent"


class Source(str, Enum):
    HOTPOT_QA = "HotpotQA"
    NQ_OPEN = "NqOpen"
    SYNTHETIC = "Synthetic"


class ExpressionKind(str, Enum):
    CERTAINTY = "Certainty"
    UNCERTAINTY = "Uncertainty"


class MetricName(str, Enum):
    F_CERTAIN = "FCertain"
    F_UNCERTAIN = "FUncertain"
    F_ENSEMBLE = "FEnsemble"
    LOG_P = "LogP"
    ENTROPY = "Entropy"
    SEMANTIC_ENTROPY = "SemanticEntropy"
    LEXICAL_SIMILARITY = "LexicalSimilarity"
    SELFCHECK_NLI = "SelfCheckNli"


class Orientation(str, Enum):
    HIGHER_MEANS_HALLUCINATION = "HigherMeansHallucination"
    LOWER_MEANS_HALLUCINATION = "LowerMeansHallucination"


#: Fixed orientation per metric; evaluation negates Lower* metrics before ranking.
METRIC_ORIENTATION: dict[MetricName, Orientation] = {
    MetricName.F_CERTAIN: Orientation.HIGHER_MEANS_HALLUCINATION,
    MetricName.F_UNCERTAIN: Orientation.HIGHER_MEANS_HALLUCINATION,
    MetricName.F_ENSEMBLE: Orientation.HIGHER_MEANS_HALLUCINATION,
    MetricName.LOG_P: Orientation.LOWER_MEANS_HALLUCINATION,
    MetricName.ENTROPY: Orientation.HIGHER_MEANS_HALLUCINATION,
    MetricName.SEMANTIC_ENTROPY: Orientation.HIGHER_MEANS_HALLUCINATION,
    MetricName.LEXICAL_SIMILARITY: Orientation.LOWER_MEANS_HALLUCINATION,
    MetricName.SELFCHECK_NLI: Orientation.HIGHER_MEANS_HALLUCINATION,
}


class FinishReason(str, Enum):
    STOP = "stop"
    LENGTH = "length"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class QaItem:
    """One question with gold answers and optional human labels.

    Labels are optional so the same record serves collection (unlabeled)
    and evaluation (labeled); evaluation rejects unlabeled items
    explicitly instead of skipping them.
    """

    id: str
    question: str
    gold_answers: tuple[str, ...]
    source: Source = Source.SYNTHETIC
    factuality_label: Optional[Factuality] = None
    # expression-id slug -> per-expression consistency label
    consistency_label: Optional[dict[str, Consistency]] = None

    def __post_init__(self):
        if not self.id:
            raise ValueError("QaItem.id must be nonempty")

    def to_json_dict(self) -> dict:
        d = {
            "id": self.id,
            "question": self.question,
            "gold_answers": list(self.gold_answers),
            "source": self.source.value,
            "factuality_label": self.factuality_label.value if self.factuality_label else None,
            "consistency_label": (
                {k: v.value for k, v in self.consistency_label.items()}
                if self.consistency_label is not None
                else None
            ),
        }
        return d

    @classmethod
    def from_json_dict(cls, d: dict) -> "QaItem":
        return cls(
            id=d["id"],
            question=d["question"],
            gold_answers=tuple(d["gold_answers"]),
            source=Source(d.get("source", "Synthetic")),
            factuality_label=Factuality(d["factuality_label"]) if d.get("factuality_label") else None,
            consistency_label=(
                {k: Consistency(v) for k, v in d["consistency_label"].items()}
                if d.get("consistency_label") is not None
                else None
            ),
        )


@dataclass(frozen=True)
class Expression:
    """A fixed (un)certainty phrase prepended to the answer slot."""

    id: str
    text: str
    kind: ExpressionKind

    def __post_init__(self):
        if not self.text:
            raise ValueError("Expression.text must be nonempty")


_BUILTIN_EXPRESSIONS = (
    Expression("unsure", "I am not sure but it could be", ExpressionKind.UNCERTAINTY),
    Expression("doublecheck", "I would need to double check but maybe it is", ExpressionKind.UNCERTAINTY),
    Expression("mustbe", "It must be", ExpressionKind.CERTAINTY),
    Expression("undoubtedly", "Undoubtedly it is", ExpressionKind.CERTAINTY),
)


def builtin_expressions() -> list[Expression]:
    """The four built-in perturbation phrases, two uncertain then two certain."""
    return list(_BUILTIN_EXPRESSIONS)


def expression_by_id(slug: str) -> Expression:
    for exp in _BUILTIN_EXPRESSIONS:
        if exp.id == slug:
            return exp
    raise KeyError(f"unknown expression slug: {slug!r}")


@dataclass(frozen=True)
class DecodingParams:
    """Sampling configuration for one collection phase."""

    temperature: float = 0.0
    max_tokens: int = 64
    n_samples: int = 1
    seed: Optional[int] = None  # honored by mock backends only

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be nonnegative")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")
        if self.n_samples <= 0:
            raise ValueError("n_samples must be positive")
        if self.temperature == 0 and self.n_samples != 1:
            raise ValueError("temperature 0 implies a single (greedy) sample")

    def to_json_dict(self) -> dict:
        return {
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
            "n_samples": self.n_samples,
            "seed": self.seed,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "DecodingParams":
        return cls(
            temperature=d.get("temperature", 0.0),
            max_tokens=d.get("max_tokens", 64),
            n_samples=d.get("n_samples", 1),
            seed=d.get("seed"),
        )


@dataclass(frozen=True)
class Generation:
    """One model completion with per-token natural-log probabilities."""

    text: str
    token_logprobs: tuple[float, ...]
    finish_reason: FinishReason = FinishReason.UNKNOWN
    prompt_fingerprint: str = ""

    def __post_init__(self):
        for lp in self.token_logprobs:
            if not math.isfinite(lp) or lp > 0:
                raise ValueError(f"token logprob must be finite and <= 0, got {lp}")

    def to_json_dict(self) -> dict:
        return {
            "text": self.text,
            "token_logprobs": list(self.token_logprobs),
            "finish_reason": self.finish_reason.value,
            "prompt_fingerprint": self.prompt_fingerprint,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "Generation":
        return cls(
            text=d["text"],
            token_logprobs=tuple(d["token_logprobs"]),
            finish_reason=FinishReason(d.get("finish_reason", "unknown")),
            prompt_fingerprint=d.get("prompt_fingerprint", ""),
        )


@dataclass(frozen=True)
class NliVerdict:
    """Raw 3-class logits for an ordered text pair."""

    logit_entailment: float
    logit_neutral: float
    logit_contradiction: float

    def __post_init__(self):
        for v in (self.logit_entailment, self.logit_neutral, self.logit_contradiction):
            if not math.isfinite(v):
                raise ValueError("NLI logits must be finite")

    def softmax(self) -> tuple[float, float, float]:
        """Probabilities (entailment, neutral, contradiction), summing to 1."""
        logits = (self.logit_entailment, self.logit_neutral, self.logit_contradiction)
        m = max(logits)
        exps = [math.exp(v - m) for v in logits]
        z = sum(exps)
        return (exps[0] / z, exps[1] / z, exps[2] / z)

    def argmax_class(self) -> str:
        triples = [
            (self.logit_entailment, "entailment"),
            (self.logit_neutral, "neutral"),
            (self.logit_contradiction, "contradiction"),
        ]
        return max(triples, key=lambda t: t[0])[1]

    def to_json_dict(self) -> dict:
        return {
            "logit_entailment": self.logit_entailment,
            "logit_neutral": self.logit_neutral,
            "logit_contradiction": self.logit_contradiction,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "NliVerdict":
        return cls(d["logit_entailment"], d["logit_neutral"], d["logit_contradiction"])


@dataclass(frozen=True)
class DetectionScore:
    """A named metric value for one item, carrying its ranking orientation."""

    item_id: str
    metric_name: MetricName
    value: float
    orientation: Orientation

    def __post_init__(self):
        expected = METRIC_ORIENTATION[self.metric_name]
        if self.orientation is not expected:
            raise ValueError(
                f"orientation for {self.metric_name.value} must be {expected.value}"
            )

    @classmethod
    def make(cls, item_id: str, metric_name: MetricName, value: float) -> "DetectionScore":
        return cls(item_id, metric_name, value, METRIC_ORIENTATION[metric_name])

    def to_json_dict(self) -> dict:
        return {
            "item_id": self.item_id,
            "metric_name": self.metric_name.value,
            "value": self.value,
            "orientation": self.orientation.value,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "DetectionScore":
        return cls(
            item_id=d["item_id"],
            metric_name=MetricName(d["metric_name"]),
            value=d["value"],
            orientation=Orientation(d["orientation"]),
        )


def write_jsonl(path, records) -> None:
    """Write records (objects with to_json_dict, or plain dicts) as JSONL."""
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            d = rec.to_json_dict() if hasattr(rec, "to_json_dict") else rec
            f.write(json.dumps(d, sort_keys=True) + "\n")


def read_jsonl(path) -> list[dict]:
    out = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out
