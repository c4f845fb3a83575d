"""Scorer implementations behind the /v1/nli endpoint.

Wire class order is fixed (entailment, neutral, contradiction) regardless
of any checkpoint's internal label indices; checkpoints are mapped by
label *name* so a permuted id2label cannot silently swap classes.
"""

from __future__ import annotations

import string
import threading
from typing import Protocol

LogitTriple = tuple[float, float, float]


class Scorer(Protocol):
    model_version: str

    def score(self, pairs: list[tuple[str, str]]) -> list[LogitTriple]:
        ...


# ---------------------------------------------------------------------------
# Deterministic lexical scorer (no checkpoint required)
# ---------------------------------------------------------------------------

_PUNCT_TABLE = str.maketrans("", "", string.punctuation)
_HEDGE_PREFIXES = (
    "i am not sure but it could be",
    "i would need to double check but maybe it is",
    "it must be",
    "undoubtedly it is",
)
_FILLER = {
    "a", "an", "the", "around", "approximately", "roughly", "about",
    "maybe", "perhaps", "probably", "or", "and", "i", "think",
}

ENTAIL_LOGITS: LogitTriple = (4.5, 0.5, -4.5)
NEUTRAL_LOGITS: LogitTriple = (-0.5, 2.5, -1.0)
CONTRA_LOGITS: LogitTriple = (-4.0, 0.5, 4.0)


def _content_tokens(text: str) -> list[str]:
    s = text.lower().strip()
    for prefix in sorted(_HEDGE_PREFIXES, key=len, reverse=True):
        if s.startswith(prefix):
            s = s[len(prefix):]
            break
    s = s.translate(_PUNCT_TABLE)
    return [t for t in s.split() if t not in _FILLER]


class OverlapHeuristicScorer:
    """Lexical-overlap stand-in scorer for offline operation.

    Both pair sides share the question as a leading token run; the rule
    drops that run, strips hedge phrases and filler, and compares answer
    token sets by containment. High overlap reads as entailment, zero as
    contradiction, anything between as neutral.
    """

    model_version = "overlap-heuristic-1"

    def __init__(self, entail_threshold: float = 0.6):
        self.entail_threshold = entail_threshold

    def _split_answers(self, text_a: str, text_b: str) -> tuple[list[str], list[str]]:
        ta = text_a.lower().translate(_PUNCT_TABLE).split()
        tb = text_b.lower().translate(_PUNCT_TABLE).split()
        k = 0
        while k < len(ta) and k < len(tb) and ta[k] == tb[k]:
            k += 1
        return (
            _content_tokens(" ".join(ta[k:])),
            _content_tokens(" ".join(tb[k:])),
        )

    def _score_one(self, text_a: str, text_b: str) -> LogitTriple:
        ref, cand = self._split_answers(text_a, text_b)
        if not ref and not cand:
            return ENTAIL_LOGITS  # identical texts
        if not ref or not cand:
            return NEUTRAL_LOGITS
        overlap = len(set(ref) & set(cand)) / min(len(set(ref)), len(set(cand)))
        if overlap >= self.entail_threshold:
            return ENTAIL_LOGITS
        if overlap == 0.0:
            return CONTRA_LOGITS
        return NEUTRAL_LOGITS

    def score(self, pairs: list[tuple[str, str]]) -> list[LogitTriple]:
        return [self._score_one(a, b) for a, b in pairs]


# ---------------------------------------------------------------------------
# Cross-encoder checkpoint scorer
# ---------------------------------------------------------------------------

def map_label_indices(id2label: dict[int, str]) -> tuple[int, int, int]:
    """Indices of (entailment, neutral, contradiction) by label name."""
    found: dict[str, int] = {}
    for idx, label in id2label.items():
        name = label.lower()
        if "entail" in name:
            found["entailment"] = int(idx)
        elif "neutral" in name:
            found["neutral"] = int(idx)
        elif "contradict" in name:
            found["contradiction"] = int(idx)
    missing = {"entailment", "neutral", "contradiction"} - set(found)
    if missing:
        raise ValueError(f"checkpoint labels missing classes: {sorted(missing)}")
    return found["entailment"], found["neutral"], found["contradiction"]


class TransformersScorer:
    """3-class cross-encoder served from a transformers checkpoint.

    Tokenizes (text_a, text_b) as a sentence pair so the tokenizer
    inserts its own separator; inference runs in no-grad eval mode so
    repeated identical requests return identical logits.
    """

    def __init__(self, model_identifier: str, device: str = "cpu", max_batch: int = 32):
        import torch
        from transformers import AutoModelForSequenceClassification, AutoTokenizer

        self._torch = torch
        self.tokenizer = AutoTokenizer.from_pretrained(model_identifier)
        self.model = AutoModelForSequenceClassification.from_pretrained(model_identifier)
        self.model.to(device)
        self.model.eval()
        self.device = device
        self.max_batch = max_batch
        self._indices = map_label_indices(self.model.config.id2label)
        self._lock = threading.Lock()  # serialize inference per contract
        self.model_version = f"hf:{model_identifier}"

    def score(self, pairs: list[tuple[str, str]]) -> list[LogitTriple]:
        out: list[LogitTriple] = []
        with self._lock, self._torch.no_grad():
            for start in range(0, len(pairs), self.max_batch):
                chunk = pairs[start : start + self.max_batch]
                enc = self.tokenizer(
                    [a for a, _ in chunk],
                    [b for _, b in chunk],
                    padding=True,
                    truncation=True,
                    return_tensors="pt",
                ).to(self.device)
                logits = self.model(**enc).logits.cpu()
                e, n, c = self._indices
                for row in logits:
                    out.append((float(row[e]), float(row[n]), float(row[c])))
        return out


def build_scorer(model_identifier: str, device: str = "cpu", max_batch: int = 32) -> Scorer:
    if model_identifier == "debug":
        return OverlapHeuristicScorer()
    return TransformersScorer(model_identifier, device=device, max_batch=max_batch)
