"""Detection metrics: the consistency score, its ensemble, and baselines.

Every detector maps one item's collected generations to a single real
score; orientation metadata lives in core.METRIC_ORIENTATION.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

from .core import Generation
from .errors import (
    InvalidPartition,
    MissingLogprobs,
    NoSamples,
    TooFewSamples,
    TooFewScores,
)
from .metrics import length_normalized_logprob, normalize_answer, response_entropy
from .nli_gateway import NliGateway, build_nli_input

MASS_TOLERANCE = 1e-9


def f_score(question: str, reference: str, perturbed: str, nli: NliGateway) -> float:
    """Contradiction-minus-entailment logit between reference and perturbed answer.

    Higher means more likely hallucination.
    """
    verdict = nli.score(build_nli_input(question, reference, perturbed))
    return verdict.logit_contradiction - verdict.logit_entailment


def f_ensemble(scores: list[float]) -> float:
    """Minimum of per-expression scores; conservative ensemble."""
    if len(scores) < 2:
        raise TooFewScores("ensemble needs at least two expression scores")
    return min(scores)


def baseline_logp(reference_gen: Generation) -> float:
    """Length-normalized logprob of the reference; lower means hallucination."""
    if not reference_gen.token_logprobs:
        raise MissingLogprobs("reference generation carries no token logprobs")
    return length_normalized_logprob(reference_gen).value


def baseline_entropy(samples: list[Generation]) -> float:
    """Entropy of normalized sampled answers; higher means hallucination."""
    return response_entropy(samples)


@dataclass(frozen=True)
class SemanticCluster:
    member_indices: tuple[int, ...]
    mass: float


def cluster_semantic(
    question: str, samples: list[Generation], nli: NliGateway
) -> list[SemanticCluster]:
    """Greedy agglomeration into semantic-equivalence clusters.

    A sample joins the first existing cluster whose founding member it
    bidirectionally entails (entailment is the argmax class in both
    directions, question-prefixed inputs); otherwise it founds a new
    cluster. Cluster mass is the sum of length-normalized per-sample
    probabilities, renormalized over the sample set.
    """
    if not samples:
        raise NoSamples("cluster_semantic requires at least one sample")
    founders: list[int] = []
    members: list[list[int]] = []
    for i, sample in enumerate(samples):
        placed = False
        for c, founder_idx in enumerate(founders):
            founder = samples[founder_idx]
            if founder.text == sample.text:
                members[c].append(i)
                placed = True
                break
            fwd = nli.score(build_nli_input(question, founder.text, sample.text))
            bwd = nli.score(build_nli_input(question, sample.text, founder.text))
            if fwd.argmax_class() == "entailment" and bwd.argmax_class() == "entailment":
                members[c].append(i)
                placed = True
                break
        if not placed:
            founders.append(i)
            members.append([i])
    weights = []
    for sample in samples:
        if not sample.token_logprobs:
            raise MissingLogprobs("semantic clustering needs per-sample token logprobs")
        weights.append(math.exp(length_normalized_logprob(sample).value))
    total = sum(weights)
    return [
        SemanticCluster(tuple(m), sum(weights[i] for i in m) / total) for m in members
    ]


def semantic_entropy(clusters: list[SemanticCluster]) -> float:
    """Entropy (nats) of the cluster mass distribution."""
    if not clusters:
        raise InvalidPartition("no clusters")
    total = sum(c.mass for c in clusters)
    if abs(total - 1.0) > MASS_TOLERANCE:
        raise InvalidPartition(f"cluster masses sum to {total}, expected 1")
    seen: set[int] = set()
    for c in clusters:
        if c.mass <= 0:
            raise InvalidPartition("cluster mass must be positive")
        for i in c.member_indices:
            if i in seen:
                raise InvalidPartition(f"sample {i} appears in two clusters")
            seen.add(i)
    return -sum(c.mass * math.log(c.mass) for c in clusters)


def _lcs_length(a: list[str], b: list[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            if x == y:
                cur.append(prev[j - 1] + 1)
            else:
                cur.append(max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(a: str, b: str) -> float:
    """ROUGE-L F-measure over whitespace tokens; 0 when either side is empty."""
    ta, tb = a.split(), b.split()
    if not ta or not tb:
        return 0.0
    lcs = _lcs_length(ta, tb)
    if lcs == 0:
        return 0.0
    precision = lcs / len(ta)
    recall = lcs / len(tb)
    return 2 * precision * recall / (precision + recall)


def lexical_similarity(samples: list[Generation]) -> float:
    """Mean pairwise ROUGE-L over all ordered sample pairs; lower means hallucination."""
    m = len(samples)
    if m < 2:
        raise TooFewSamples("lexical similarity needs at least two samples")
    total = 0.0
    for i in range(m):
        for j in range(m):
            if i != j:
                total += rouge_l(samples[i].text, samples[j].text)
    return total / (m * (m - 1))


def selfcheck_nli(
    question: str, reference: str, samples: list[Generation], nli: NliGateway
) -> float:
    """Mean softmax contradiction probability of the reference against each sample."""
    if not samples:
        raise NoSamples("selfcheck_nli requires at least one sample")
    pairs = [build_nli_input(question, reference, s.text) for s in samples]
    verdicts = nli.score_batch(pairs)
    return sum(v.softmax()[2] for v in verdicts) / len(verdicts)


_DEFAULT_ABSTENTION_PATTERNS = (
    "i can not answer",
    "i cannot answer",
    "cannot be determined",
    "can not be determined",
    "need more information",
    "please provide more",
    "impossible to answer",
    "unable to answer",
)


def load_abstention_patterns(path: str | Path) -> tuple[str, ...]:
    """One pattern per line; blank lines and # comments ignored."""
    patterns = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip().lower()
            if line and not line.startswith("#"):
                patterns.append(line)
    return tuple(patterns)


def classify_abstention(
    text: str, patterns: tuple[str, ...] = _DEFAULT_ABSTENTION_PATTERNS
) -> bool:
    """True iff the normalized response matches an abstention pattern."""
    normalized = normalize_answer(text)
    return any(p in normalized for p in patterns)
