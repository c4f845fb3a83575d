"""Shared fixtures: independent oracles and synthetic corpus builders.

The oracles here are deliberately naive (O(n^2) loops, memoized
recursion) and never share code with the implementations they check.
"""

from __future__ import annotations

import functools
import json
import math
from collections import Counter
from pathlib import Path

import pytest

from certprobe.core import (
    Factuality,
    Generation,
    QaItem,
    Source,
    builtin_expressions,
)
from certprobe.corpus import ExperimentManifest
from certprobe.llm_gateway import BackendConfig, BackendKind


# ---------------------------------------------------------------------------
# Oracles
# ---------------------------------------------------------------------------

def oracle_auroc(scores):
    """O(n^2) pair counting: P(pos > neg), ties half."""
    pos = [s for s, l in scores if l]
    neg = [s for s, l in scores if not l]
    total = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                total += 1.0
            elif p == q:
                total += 0.5
    return total / (len(pos) * len(neg))


def oracle_auprc(scores):
    """Naive step sum: recompute precision/recall from scratch per threshold."""
    n_pos = sum(1 for _, l in scores if l)
    thresholds = sorted({s for s, _ in scores}, reverse=True)
    ap = 0.0
    prev_recall = 0.0
    for t in thresholds:
        kept = [(s, l) for s, l in scores if s >= t]
        tp = sum(1 for _, l in kept if l)
        precision = tp / len(kept)
        recall = tp / n_pos
        ap += (recall - prev_recall) * precision
        prev_recall = recall
    return ap


def oracle_lcs(a: tuple, b: tuple) -> int:
    """Memoized-recursion LCS, independent of the iterative DP in detectors."""

    @functools.lru_cache(maxsize=None)
    def rec(i: int, j: int) -> int:
        if i == len(a) or j == len(b):
            return 0
        if a[i] == b[j]:
            return 1 + rec(i + 1, j + 1)
        return max(rec(i + 1, j), rec(i, j + 1))

    return rec(0, 0)


def oracle_rouge_l(a: str, b: str) -> float:
    ta, tb = tuple(a.split()), tuple(b.split())
    if not ta or not tb:
        return 0.0
    lcs = oracle_lcs(ta, tb)
    if lcs == 0:
        return 0.0
    p, r = lcs / len(ta), lcs / len(tb)
    return 2 * p * r / (p + r)


def oracle_entropy(masses) -> float:
    """Direct evaluation of -sum p ln p over explicit masses."""
    return -sum(m * math.log(m) for m in masses if m > 0)


def oracle_bucket_entropy(texts, normalizer) -> float:
    counts = Counter(normalizer(t) for t in texts)
    n = len(texts)
    return oracle_entropy([c / n for c in counts.values()])


def oracle_histogram_kl(a, b, bins, sigma, epsilon=1e-10):
    """Pure-python recomputation of the binned, smoothed, floored KL."""
    lo = min(min(a), min(b))
    hi = max(max(a), max(b))
    if lo == hi:
        hi = lo + 1.0
    width = (hi - lo) / bins

    def hist(xs):
        counts = [0.0] * bins
        for x in xs:
            idx = min(int((x - lo) / width), bins - 1)
            counts[idx] += 1.0
        return counts

    radius = max(1, int(math.ceil(4.0 * sigma)))
    kernel = [math.exp(-0.5 * (k / sigma) ** 2) for k in range(-radius, radius + 1)]
    ksum = sum(kernel)
    kernel = [k / ksum for k in kernel]

    def smooth(counts):
        # centered convolution, zero-padded ('same' mode)
        out = []
        for i in range(bins):
            acc = 0.0
            for k in range(-radius, radius + 1):
                j = i - k
                if 0 <= j < bins:
                    acc += counts[j] * kernel[k + radius]
            out.append(acc)
        return out

    def finish(counts):
        total = sum(counts)
        floored = [max(c / total, epsilon) for c in counts]
        z = sum(floored)
        return [c / z for c in floored]

    p = finish(smooth(hist(a)))
    q = finish(smooth(hist(b)))
    return sum(pi * math.log(pi / qi) for pi, qi in zip(p, q))


# ---------------------------------------------------------------------------
# Synthetic corpus and mock table
# ---------------------------------------------------------------------------

def make_generation(text: str, logprobs=(-0.1, -0.2)) -> Generation:
    return Generation(text=text, token_logprobs=tuple(logprobs))


def synthetic_question(k: int) -> str:
    return f"What is synthetic fact number {k:03d}?"


def build_synthetic_corpus(n_consistent: int = 100, n_switching: int = 100):
    """Items 0..n_consistent-1 answer consistently (Factual); the rest
    switch answers under every expression (NonFactual)."""
    items = []
    for k in range(n_consistent + n_switching):
        consistent = k < n_consistent
        items.append(
            QaItem(
                id=f"syn-{k:03d}",
                question=synthetic_question(k),
                gold_answers=(f"Answer{k:03d}",),
                source=Source.SYNTHETIC,
                factuality_label=Factuality.FACTUAL if consistent else Factuality.NON_FACTUAL,
            )
        )
    return items


def build_mock_table(items, n_consistent: int):
    """Scripted-mock rules: expression prompts answered before the standard
    prompt rule (the standard prompt text is a substring of the perturbed
    one)."""
    table = []
    for k, item in enumerate(items):
        consistent = k < n_consistent
        answer = f"Answer{k:03d}"
        switched = f"Switched{k:03d}"
        for exp in builtin_expressions():
            table.append(
                {
                    "match": f"Question: {item.question}\nAnswer: {exp.text}",
                    "text": f" {answer if consistent else switched}",
                    "logprobs": [-0.3, -0.1],
                }
            )
        table.append(
            {
                "match": f"Question: {item.question}\nAnswer:",
                "text": f" {answer}",
                "logprobs": [-0.2, -0.2],
                "samples": [
                    {"text": f" {answer}", "logprobs": [-0.2, -0.2]},
                    {"text": f" {answer}" if consistent else f" Other{k:03d}", "logprobs": [-0.4, -0.2]},
                ],
            }
        )
    return table


def write_synthetic_experiment(tmp_path: Path, n_consistent=100, n_switching=100,
                               expressions=("unsure", "mustbe")):
    """Materialize corpus, mock table, and manifest files under tmp_path."""
    items = build_synthetic_corpus(n_consistent, n_switching)
    tmp_path.mkdir(parents=True, exist_ok=True)
    corpus_path = tmp_path / "corpus.jsonl"
    with open(corpus_path, "w", encoding="utf-8") as f:
        for it in items:
            f.write(json.dumps(it.to_json_dict(), sort_keys=True) + "\n")
    table_path = tmp_path / "mock_table.json"
    with open(table_path, "w", encoding="utf-8") as f:
        json.dump(build_mock_table(items, n_consistent), f)
    manifest = ExperimentManifest(
        corpus_path=str(corpus_path),
        corpus_format="qaitem_jsonl",
        backend=BackendConfig(kind=BackendKind.SCRIPTED_MOCK, model_name="scripted"),
        output_dir=str(tmp_path / "out"),
        expressions=tuple(expressions),
        mock_table_path=str(table_path),
    )
    return items, manifest


@pytest.fixture
def synthetic_experiment(tmp_path):
    return write_synthetic_experiment(tmp_path)
