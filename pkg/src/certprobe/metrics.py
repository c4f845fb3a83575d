"""Probability and uncertainty arithmetic over collected generations.

All entropies are in nats; the log base is fixed here, not per call.
"""

from __future__ import annotations

import math
import string
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .core import Generation, builtin_expressions
from .errors import EmptyInput, NoSamples, NoTokens

KL_EPSILON = 1e-10
DEFAULT_KL_BINS = 30
DEFAULT_KL_SIGMA = 1.0


@dataclass(frozen=True)
class LogProb:
    """Length-normalized natural-log probability (mean per-token logprob)."""

    value: float

    def __post_init__(self):
        if not math.isfinite(self.value) or self.value > 0:
            raise ValueError(f"LogProb must be finite and <= 0, got {self.value}")


def length_normalized_logprob(gen: Generation) -> LogProb:
    """Arithmetic mean of the generation's token logprobs."""
    if not gen.token_logprobs:
        raise NoTokens("generation carries no token logprobs")
    return LogProb(sum(gen.token_logprobs) / len(gen.token_logprobs))


def logprob_ratio(p1: LogProb, p2: LogProb) -> float:
    """Confidence change induced by the perturbation: log p2 - log p1."""
    return p2.value - p1.value


_ARTICLES = ("a", "an", "the")
_PUNCT_TABLE = str.maketrans("", "", string.punctuation)
# longest first so "I am not sure but it could be" wins over any shorter overlap
_EXPRESSION_PREFIXES = tuple(
    sorted((e.text.lower() for e in builtin_expressions()), key=len, reverse=True)
)


def _normalize_pass(text: str) -> str:
    s = text.lower().strip()
    for prefix in _EXPRESSION_PREFIXES:
        if s.startswith(prefix):
            s = s[len(prefix):]
            break
    s = s.translate(_PUNCT_TABLE)
    tokens = s.split()
    while tokens and tokens[0] in _ARTICLES:
        tokens.pop(0)
    return " ".join(tokens)


def normalize_answer(text: str) -> str:
    """Canonicalize an answer string for bucketing and comparison.

    Lowercase, strip a leading (un)certainty phrase, drop punctuation,
    collapse whitespace, and remove leading articles. Iterated to a
    fixpoint so the function is idempotent even when stripping exposes
    another strippable prefix.
    """
    s = text
    while True:
        nxt = _normalize_pass(s)
        if nxt == s:
            return s
        s = nxt


def response_entropy(samples: list[Generation]) -> float:
    """Shannon entropy (nats) of normalized-answer buckets over the samples."""
    if not samples:
        raise NoSamples("response_entropy requires at least one sample")
    counts = Counter(normalize_answer(g.text) for g in samples)
    n = len(samples)
    return -sum((c / n) * math.log(c / n) for c in counts.values())


def _gaussian_kernel(sigma: float) -> np.ndarray:
    radius = max(1, int(math.ceil(4.0 * sigma)))
    x = np.arange(-radius, radius + 1, dtype=float)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def histogram_kl(
    a: list[float],
    b: list[float],
    bins: int = DEFAULT_KL_BINS,
    sigma: float = DEFAULT_KL_SIGMA,
) -> float:
    """KL(P_a || P_b) between Gaussian-smoothed histograms on a shared range.

    Both samples are binned over [min(a+b), max(a+b)], convolved with a
    discrete Gaussian kernel (std in bins), floored at epsilon, and
    renormalized before taking the divergence.
    """
    if not a or not b:
        raise EmptyInput("histogram_kl requires two nonempty samples")
    if bins < 1 or sigma <= 0:
        raise ValueError("bins must be >= 1 and sigma > 0")
    lo = min(min(a), min(b))
    hi = max(max(a), max(b))
    if lo == hi:
        hi = lo + 1.0  # degenerate range: everything lands in one bin
    p, _ = np.histogram(np.asarray(a, dtype=float), bins=bins, range=(lo, hi))
    q, _ = np.histogram(np.asarray(b, dtype=float), bins=bins, range=(lo, hi))
    kernel = _gaussian_kernel(sigma)
    p = np.convolve(p.astype(float), kernel, mode="same")
    q = np.convolve(q.astype(float), kernel, mode="same")
    p = np.maximum(p / p.sum(), KL_EPSILON)
    q = np.maximum(q / q.sum(), KL_EPSILON)
    p /= p.sum()
    q /= q.sum()
    return float(np.sum(p * np.log(p / q)))
