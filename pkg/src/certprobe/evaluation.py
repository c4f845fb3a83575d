"""Rank-based evaluation and report emission.

Fixed convention: the positive class is NonFactual (detection framing).
Metrics oriented LowerMeansHallucination are negated upstream before
ranking so every AUROC/AUPRC here reads "higher score = more suspect".
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Optional

import numpy as np

from .core import Consistency, Factuality, QaItem
from .errors import DegenerateLabels, MissingLabels
from .metrics import normalize_answer
from .nli_gateway import NliGateway, build_nli_input

logger = logging.getLogger(__name__)


def _ranks_with_ties(values: np.ndarray) -> np.ndarray:
    """Average ranks (1-based), ties share the mean rank."""
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(len(values), dtype=float)
    sorted_vals = values[order]
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        avg = (i + j) / 2.0 + 1.0
        ranks[order[i : j + 1]] = avg
        i = j + 1
    return ranks


def auroc(scores: list[tuple[float, bool]]) -> float:
    """Mann-Whitney AUROC: P(random positive outranks random negative), ties half."""
    values = np.array([s for s, _ in scores], dtype=float)
    labels = np.array([bool(l) for _, l in scores])
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabels("AUROC needs at least one positive and one negative")
    ranks = _ranks_with_ties(values)
    rank_sum_pos = ranks[labels].sum()
    u = rank_sum_pos - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def auprc(scores: list[tuple[float, bool]]) -> tuple[float, list[tuple[float, float]]]:
    """Average precision via step interpolation over descending thresholds.

    Returns (AP, pr_points) where pr_points is [(recall, precision), ...]
    with nondecreasing recall; tied scores collapse into one threshold.
    """
    values = np.array([s for s, _ in scores], dtype=float)
    labels = np.array([bool(l) for _, l in scores])
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabels("AUPRC needs at least one positive and one negative")
    order = np.argsort(-values, kind="mergesort")
    sorted_vals = values[order]
    sorted_labels = labels[order]
    tp = 0
    seen = 0
    prev_recall = 0.0
    ap = 0.0
    pr_points: list[tuple[float, float]] = []
    i = 0
    n = len(scores)
    while i < n:
        j = i
        while j + 1 < n and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        tp += int(sorted_labels[i : j + 1].sum())
        seen = j + 1
        precision = tp / seen
        recall = tp / n_pos
        ap += (recall - prev_recall) * precision
        pr_points.append((recall, precision))
        prev_recall = recall
        i = j + 1
    return float(ap), pr_points


@dataclass(frozen=True)
class EvalReport:
    metric_name: str
    auroc: float
    auprc: float
    pr_points: tuple[tuple[float, float], ...]
    n_pos: int
    n_neg: int
    breakdowns: Optional[tuple["BreakdownRow", ...]] = None
    consistency_provenance: str = "labels"  # "labels" or "nli_proxy"

    def to_json_dict(self) -> dict:
        return {
            "metric_name": self.metric_name,
            "auroc": self.auroc,
            "auprc": self.auprc,
            "pr_points": [list(p) for p in self.pr_points],
            "n_pos": self.n_pos,
            "n_neg": self.n_neg,
            "breakdowns": [r.to_json_dict() for r in self.breakdowns] if self.breakdowns else None,
            "consistency_provenance": self.consistency_provenance,
        }


def evaluate_metric(metric_name: str, scores: list[tuple[float, bool]]) -> EvalReport:
    """AUROC + AUPRC + PR points for one oriented score list."""
    a = auroc(scores)
    ap, pr_points = auprc(scores)
    n_pos = sum(1 for _, l in scores if l)
    return EvalReport(
        metric_name=metric_name,
        auroc=a,
        auprc=ap,
        pr_points=tuple(pr_points),
        n_pos=n_pos,
        n_neg=len(scores) - n_pos,
    )


@dataclass(frozen=True)
class ExpressionObservation:
    """What one perturbed prompt produced for one item."""

    item_id: str
    expression_id: str
    response_text: str
    logprob_ratio: Optional[float] = None
    entropy: Optional[float] = None
    consistency: Optional[Consistency] = None


@dataclass(frozen=True)
class BreakdownRow:
    expression_id: str
    group: str  # "F" or "NF"
    n: int
    accuracy_pct: float
    consistency_pct: Optional[float]
    mean_logprob_ratio: Optional[float]
    mean_entropy: Optional[float]

    def to_json_dict(self) -> dict:
        return {
            "expression_id": self.expression_id,
            "group": self.group,
            "n": self.n,
            "accuracy_pct": self.accuracy_pct,
            "consistency_pct": self.consistency_pct,
            "mean_logprob_ratio": self.mean_logprob_ratio,
            "mean_entropy": self.mean_entropy,
        }


def _answer_matches_gold(response: str, gold_answers: tuple[str, ...]) -> bool:
    norm = normalize_answer(response)
    return any(norm == normalize_answer(g) for g in gold_answers)


def group_breakdown(
    items: list[QaItem], observations: list[ExpressionObservation]
) -> list[BreakdownRow]:
    """Per (expression x factuality-group) summary rows.

    Accuracy is the normalized-match rate of the perturbed response
    against gold answers; consistency comes from the observation's
    (label or proxy) field. Empty groups are omitted with a warning.
    """
    by_id = {it.id: it for it in items}
    unlabeled = [it.id for it in items if it.factuality_label is None]
    if unlabeled:
        raise MissingLabels(f"items without factuality labels: {unlabeled[:5]}")
    grouped: dict[tuple[str, str], list[ExpressionObservation]] = {}
    for obs in observations:
        item = by_id.get(obs.item_id)
        if item is None:
            continue
        group = "F" if item.factuality_label is Factuality.FACTUAL else "NF"
        grouped.setdefault((obs.expression_id, group), []).append(obs)
    expressions = sorted({e for e, _ in grouped})
    rows: list[BreakdownRow] = []
    for expression_id in expressions:
        for group in ("F", "NF"):
            obs_list = grouped.get((expression_id, group), [])
            if not obs_list:
                logger.warning(
                    "empty group (%s, %s): row omitted", expression_id, group
                )
                continue
            n = len(obs_list)
            acc = sum(
                _answer_matches_gold(o.response_text, by_id[o.item_id].gold_answers)
                for o in obs_list
            ) / n
            cons = [o.consistency for o in obs_list if o.consistency is not None]
            ratios = [o.logprob_ratio for o in obs_list if o.logprob_ratio is not None]
            entropies = [o.entropy for o in obs_list if o.entropy is not None]
            rows.append(
                BreakdownRow(
                    expression_id=expression_id,
                    group=group,
                    n=n,
                    accuracy_pct=100.0 * acc,
                    consistency_pct=(
                        100.0 * sum(c is Consistency.CONSISTENT for c in cons) / len(cons)
                        if cons
                        else None
                    ),
                    mean_logprob_ratio=float(np.mean(ratios)) if ratios else None,
                    mean_entropy=float(np.mean(entropies)) if entropies else None,
                )
            )
    return rows


class TriageDecision(str, Enum):
    AUTO_KEEP = "AutoKeep"
    NEEDS_HUMAN = "NeedsHuman"


@dataclass(frozen=True)
class TriageResult:
    decision: TriageDecision
    suggestion: Optional[Factuality] = None


def triage_for_annotation(
    question: str, reference: str, gold: str, nli: NliGateway
) -> TriageResult:
    """Route (reference, gold) pairs whose neutral logit wins to a human."""
    verdict = nli.score(build_nli_input(question, reference, gold))
    cls = verdict.argmax_class()
    if cls == "neutral":
        return TriageResult(TriageDecision.NEEDS_HUMAN)
    suggestion = Factuality.FACTUAL if cls == "entailment" else Factuality.NON_FACTUAL
    return TriageResult(TriageDecision.AUTO_KEEP, suggestion)


def consistency_proxy(
    question: str, reference: str, perturbed: str, nli: NliGateway
) -> Consistency:
    """Automated stand-in for the manual consistency label; labels win when present."""
    verdict = nli.score(build_nli_input(question, reference, perturbed))
    if verdict.logit_entailment > verdict.logit_contradiction:
        return Consistency.CONSISTENT
    return Consistency.NON_CONSISTENT


def emit_report(report: EvalReport, out_dir: str | Path) -> None:
    """Write report.json and pr_curve_<metric>.csv under out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"report_{report.metric_name}.json"
    with open(path, "w", encoding="utf-8") as f:
        json.dump(report.to_json_dict(), f, indent=2, sort_keys=True)
        f.write("\n")
    with open(out / f"pr_curve_{report.metric_name}.csv", "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["recall", "precision"])
        for recall, precision in report.pr_points:
            writer.writerow([f"{recall:.6f}", f"{precision:.6f}"])


def emit_pr_curve_svg(reports: list[EvalReport], path: str | Path) -> None:
    """Minimal polyline PR-curve rendering, no plotting dependency."""
    width, height, margin = 480, 360, 40
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect x="{margin}" y="{margin}" width="{width - 2 * margin}" '
        f'height="{height - 2 * margin}" fill="none" stroke="black"/>',
    ]
    palette = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"]
    for k, report in enumerate(reports):
        pts = []
        for recall, precision in report.pr_points:
            x = margin + recall * (width - 2 * margin)
            y = height - margin - precision * (height - 2 * margin)
            pts.append(f"{x:.1f},{y:.1f}")
        color = palette[k % len(palette)]
        lines.append(f'<polyline points="{" ".join(pts)}" fill="none" stroke="{color}"/>')
        lines.append(
            f'<text x="{margin + 4}" y="{margin + 14 + 14 * k}" fill="{color}" '
            f'font-size="11">{report.metric_name}</text>'
        )
    lines.append("</svg>")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
