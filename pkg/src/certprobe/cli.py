"""Pipeline orchestration: collect -> score -> eval, resumable over a manifest.

Stages communicate only through files (the gateway caches and JSONL
artifacts), so any stage can be rerun or inspected independently; a
rerun with a warm cache is byte-identical and touches no backend.
"""

from __future__ import annotations

import json
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

import click
import numpy as np

from .core import (
    DetectionScore,
    Expression,
    Factuality,
    Generation,
    MetricName,
    Orientation,
    QaItem,
    expression_by_id,
    read_jsonl,
    write_jsonl,
)
from .corpus import ExperimentManifest
from .detectors import (
    baseline_entropy,
    baseline_logp,
    cluster_semantic,
    f_ensemble,
    f_score,
    lexical_similarity,
    selfcheck_nli,
    semantic_entropy,
)
from .errors import CertprobeError, MissingGeneration, MissingLabels
from .evaluation import (
    EvalReport,
    ExpressionObservation,
    consistency_proxy,
    emit_pr_curve_svg,
    emit_report,
    evaluate_metric,
    group_breakdown,
)
from .llm_gateway import (
    BackendKind,
    CompletionGateway,
    HttpCompletionBackend,
    ScriptedMockBackend,
)
from .metrics import length_normalized_logprob, logprob_ratio, normalize_answer
from .nli_gateway import HttpNliScorer, NliGateway, answer_equality_mock_nli
from .prompting import render_expression, render_standard

logger = logging.getLogger(__name__)

ALL_METRICS = (
    "f_certain",
    "f_uncertain",
    "f_ensemble",
    "logp",
    "entropy",
    "semantic_entropy",
    "lexical_similarity",
    "selfcheck_nli",
)

_METRIC_NAME = {
    "f_certain": MetricName.F_CERTAIN,
    "f_uncertain": MetricName.F_UNCERTAIN,
    "f_ensemble": MetricName.F_ENSEMBLE,
    "logp": MetricName.LOG_P,
    "entropy": MetricName.ENTROPY,
    "semantic_entropy": MetricName.SEMANTIC_ENTROPY,
    "lexical_similarity": MetricName.LEXICAL_SIMILARITY,
    "selfcheck_nli": MetricName.SELFCHECK_NLI,
}

#: expressions backing the named f-metrics; ensemble takes the minimum of both
F_CERTAIN_EXPRESSION = "mustbe"
F_UNCERTAIN_EXPRESSION = "unsure"

_SAMPLE_METRICS = {"entropy", "semantic_entropy", "lexical_similarity"}


def build_completion_gateway(
    manifest: ExperimentManifest, cache_dir: str | Path
) -> CompletionGateway:
    if manifest.backend.kind is BackendKind.SCRIPTED_MOCK:
        if not manifest.mock_table_path:
            raise CertprobeError("ScriptedMock backend requires mock_table_path")
        backend = ScriptedMockBackend.from_json_file(
            manifest.mock_table_path, backend_id=f"mock:{manifest.backend.model_name}"
        )
    else:
        backend = HttpCompletionBackend(manifest.backend)
    return CompletionGateway(backend, cache_dir, max_in_flight=manifest.backend.max_in_flight)


def build_nli_gateway(manifest: ExperimentManifest, cache_dir: str | Path) -> NliGateway:
    if manifest.nli_endpoint:
        scorer = HttpNliScorer(manifest.nli_endpoint)
    else:
        # offline default: entailment iff answers normalize equal
        scorer = answer_equality_mock_nli(normalize_answer)
    return NliGateway(scorer, cache_dir)


def _expressions(manifest: ExperimentManifest) -> list[Expression]:
    return [expression_by_id(slug) for slug in manifest.expressions]


def perturbed_answer_text(exp: Expression, gen: Generation) -> str:
    """Expression phrase plus the model's continuation, as one answer string."""
    continuation = gen.text.strip()
    return f"{exp.text} {continuation}" if continuation else exp.text


def _collect_item(
    item: QaItem, manifest: ExperimentManifest, gateway: CompletionGateway, metrics: Sequence[str]
) -> None:
    gateway.complete(render_standard(item), manifest.reference_decoding)
    for exp in _expressions(manifest):
        gateway.complete(render_expression(item, exp), manifest.expression_decoding)
    if _SAMPLE_METRICS & set(metrics):
        params = manifest.sampling_decoding
        gateway.sample_n(render_standard(item), params, params.n_samples)
    if "selfcheck_nli" in metrics:
        params = manifest.selfcheck_decoding
        gateway.sample_n(render_standard(item), params, params.n_samples)


def cmd_collect(
    manifest: ExperimentManifest,
    cache_dir: str | Path,
    metrics: Sequence[str] = ALL_METRICS,
    gateway: Optional[CompletionGateway] = None,
) -> int:
    """Collect reference, per-expression, and sampled generations into the cache.

    Returns the number of items processed. Fully resumable: items already
    in the cache are no-ops.
    """
    items = manifest.load_items()
    gateway = gateway or build_completion_gateway(manifest, cache_dir)
    workers = manifest.backend.max_in_flight
    errors: list[str] = []

    def work(item: QaItem) -> None:
        try:
            _collect_item(item, manifest, gateway, metrics)
        except CertprobeError as e:
            errors.append(f"{item.id}: {e}")

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(work, items))
    else:
        for item in items:
            work(item)
    if errors:
        raise CertprobeError(
            f"collection failed for {len(errors)} items; first: {errors[0]}"
        )
    return len(items)


def _reference_for(
    item: QaItem, manifest: ExperimentManifest, gateway: CompletionGateway
) -> Generation:
    try:
        return gateway.complete(render_standard(item), manifest.reference_decoding)
    except CertprobeError as e:
        raise MissingGeneration(f"{item.id}: reference generation unavailable ({e})") from e


def _expression_gen(
    item: QaItem, exp: Expression, manifest: ExperimentManifest, gateway: CompletionGateway
) -> Generation:
    try:
        return gateway.complete(render_expression(item, exp), manifest.expression_decoding)
    except CertprobeError as e:
        raise MissingGeneration(f"{item.id}: expression '{exp.id}' generation unavailable ({e})") from e


def _samples_for(
    item: QaItem, manifest: ExperimentManifest, gateway: CompletionGateway, params
) -> list[Generation]:
    try:
        return gateway.sample_n(render_standard(item), params, params.n_samples)
    except CertprobeError as e:
        raise MissingGeneration(f"{item.id}: sample set unavailable ({e})") from e


def _f_metric_score(
    item: QaItem,
    slug: str,
    manifest: ExperimentManifest,
    gateway: CompletionGateway,
    nli: NliGateway,
) -> float:
    exp = expression_by_id(slug)
    reference = _reference_for(item, manifest, gateway)
    gen = _expression_gen(item, exp, manifest, gateway)
    return f_score(
        item.question, reference.text.strip(), perturbed_answer_text(exp, gen), nli
    )


def score_item(
    item: QaItem,
    metric: str,
    manifest: ExperimentManifest,
    gateway: CompletionGateway,
    nli: NliGateway,
) -> DetectionScore:
    """One DetectionScore for (item, metric), reading generations from cache."""
    if metric == "f_certain":
        value = _f_metric_score(item, F_CERTAIN_EXPRESSION, manifest, gateway, nli)
    elif metric == "f_uncertain":
        value = _f_metric_score(item, F_UNCERTAIN_EXPRESSION, manifest, gateway, nli)
    elif metric == "f_ensemble":
        value = f_ensemble(
            [
                _f_metric_score(item, F_CERTAIN_EXPRESSION, manifest, gateway, nli),
                _f_metric_score(item, F_UNCERTAIN_EXPRESSION, manifest, gateway, nli),
            ]
        )
    elif metric == "logp":
        value = baseline_logp(_reference_for(item, manifest, gateway))
    elif metric == "entropy":
        value = baseline_entropy(
            _samples_for(item, manifest, gateway, manifest.sampling_decoding)
        )
    elif metric == "semantic_entropy":
        samples = _samples_for(item, manifest, gateway, manifest.sampling_decoding)
        value = semantic_entropy(cluster_semantic(item.question, samples, nli))
    elif metric == "lexical_similarity":
        value = lexical_similarity(
            _samples_for(item, manifest, gateway, manifest.sampling_decoding)
        )
    elif metric == "selfcheck_nli":
        reference = _reference_for(item, manifest, gateway)
        samples = _samples_for(item, manifest, gateway, manifest.selfcheck_decoding)
        value = selfcheck_nli(item.question, reference.text.strip(), samples, nli)
    else:
        raise CertprobeError(f"unknown metric: {metric}")
    return DetectionScore.make(item.id, _METRIC_NAME[metric], value)


def cmd_score(
    manifest: ExperimentManifest,
    cache_dir: str | Path,
    metrics: Sequence[str],
    out_path: str | Path,
    gateway: Optional[CompletionGateway] = None,
    nli: Optional[NliGateway] = None,
) -> list[DetectionScore]:
    """Score every (item, metric) pair and write a sorted scores JSONL."""
    items = manifest.load_items()
    gateway = gateway or build_completion_gateway(manifest, cache_dir)
    nli = nli or build_nli_gateway(manifest, cache_dir)
    scores = [
        score_item(item, metric, manifest, gateway, nli)
        for item in items
        for metric in metrics
    ]
    scores.sort(key=lambda s: (s.item_id, s.metric_name.value))
    Path(out_path).parent.mkdir(parents=True, exist_ok=True)
    write_jsonl(out_path, scores)
    return scores


def oriented_pairs(
    scores: list[DetectionScore], items_by_id: dict[str, QaItem]
) -> dict[str, list[tuple[float, bool]]]:
    """Group scores by metric, orienting so higher = more suspect; positive = NonFactual."""
    grouped: dict[str, list[tuple[float, bool]]] = {}
    for s in scores:
        item = items_by_id.get(s.item_id)
        if item is None:
            continue
        if item.factuality_label is None:
            raise MissingLabels(f"item {s.item_id} has no factuality label")
        value = s.value
        if s.orientation is Orientation.LOWER_MEANS_HALLUCINATION:
            value = -value
        positive = item.factuality_label is Factuality.NON_FACTUAL
        grouped.setdefault(s.metric_name.value, []).append((value, positive))
    return grouped


def normalize_scores(values: Sequence[float], method: str = "minmax") -> list[float]:
    """Map raw scores to [0, 1] for the 0.5 decision threshold."""
    arr = np.asarray(values, dtype=float)
    if method == "minmax":
        lo, hi = arr.min(), arr.max()
        if hi == lo:
            return [0.5] * len(arr)
        return ((arr - lo) / (hi - lo)).tolist()
    if method == "sigmoid":
        return [1.0 / (1.0 + math.exp(-v)) for v in arr]
    raise CertprobeError(f"unknown normalization method: {method}")


def _build_breakdowns(
    items: list[QaItem],
    manifest: ExperimentManifest,
    gateway: CompletionGateway,
    nli: NliGateway,
) -> tuple[list, str]:
    """Table 3/4/5-style observation rows; proxy consistency when unlabeled."""
    observations = []
    provenance = "labels"
    for item in items:
        reference = _reference_for(item, manifest, gateway)
        p1 = length_normalized_logprob(reference)
        for exp in _expressions(manifest):
            gen = _expression_gen(item, exp, manifest, gateway)
            perturbed = perturbed_answer_text(exp, gen)
            manual = (item.consistency_label or {}).get(exp.id)
            if manual is None:
                consistency = consistency_proxy(
                    item.question, reference.text.strip(), perturbed, nli
                )
                provenance = "nli_proxy"
            else:
                consistency = manual
            ratio = None
            if gen.token_logprobs:
                ratio = logprob_ratio(p1, length_normalized_logprob(gen))
            observations.append(
                ExpressionObservation(
                    item_id=item.id,
                    expression_id=exp.id,
                    response_text=perturbed,
                    logprob_ratio=ratio,
                    consistency=consistency,
                )
            )
    return observations, provenance


def cmd_eval(
    manifest: ExperimentManifest,
    scores: list[DetectionScore],
    cache_dir: str | Path,
    out_dir: str | Path,
    with_breakdowns: bool = False,
    with_svg: bool = False,
    gateway: Optional[CompletionGateway] = None,
    nli: Optional[NliGateway] = None,
) -> dict[str, EvalReport]:
    """Per-metric AUROC/AUPRC reports plus PR-curve CSVs and summary table."""
    items = manifest.load_items()
    items_by_id = {it.id: it for it in items}
    unlabeled = [it.id for it in items_by_id.values() if it.factuality_label is None]
    if unlabeled:
        raise MissingLabels(f"unlabeled items: {unlabeled[:5]}")
    reports: dict[str, EvalReport] = {}
    for metric, pairs in sorted(oriented_pairs(scores, items_by_id).items()):
        report = evaluate_metric(metric, pairs)
        if with_breakdowns:
            gateway = gateway or build_completion_gateway(manifest, cache_dir)
            nli = nli or build_nli_gateway(manifest, cache_dir)
            observations, provenance = _build_breakdowns(items, manifest, gateway, nli)
            rows = group_breakdown(items, observations)
            report = EvalReport(
                metric_name=report.metric_name,
                auroc=report.auroc,
                auprc=report.auprc,
                pr_points=report.pr_points,
                n_pos=report.n_pos,
                n_neg=report.n_neg,
                breakdowns=tuple(rows),
                consistency_provenance=provenance,
            )
        reports[metric] = report
        emit_report(report, out_dir)
    summary = {
        m: {"auroc": r.auroc, "auprc": r.auprc} for m, r in sorted(reports.items())
    }
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "summary.json", "w", encoding="utf-8") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write("\n")
    if with_svg:
        emit_pr_curve_svg(list(reports.values()), out / "pr_curve.svg")
    return reports


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Enable debug logging.")
def main(verbose: bool) -> None:
    """Black-box hallucination detection via (un)certainty perturbation."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )


@main.command("collect")
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--cache-dir", required=True, type=click.Path())
@click.option("--metrics", default=",".join(ALL_METRICS), show_default=True)
def collect_cmd(manifest_path: str, cache_dir: str, metrics: str) -> None:
    """Collect generations for every item into the response cache."""
    manifest = ExperimentManifest.from_json_file(manifest_path)
    n = cmd_collect(manifest, cache_dir, metrics=metrics.split(","))
    click.echo(f"collected generations for {n} items")


@main.command("score")
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--cache-dir", required=True, type=click.Path())
@click.option("--metrics", default="f_certain,f_uncertain,f_ensemble", show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
def score_cmd(manifest_path: str, cache_dir: str, metrics: str, out_path: str) -> None:
    """Compute detection scores from cached generations."""
    manifest = ExperimentManifest.from_json_file(manifest_path)
    scores = cmd_score(manifest, cache_dir, metrics.split(","), out_path)
    click.echo(f"wrote {len(scores)} scores to {out_path}")


@main.command("eval")
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--cache-dir", required=True, type=click.Path())
@click.option("--scores", "scores_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--breakdowns/--no-breakdowns", default=False)
@click.option("--svg/--no-svg", default=False)
def eval_cmd(
    manifest_path: str,
    cache_dir: str,
    scores_path: str,
    out_dir: str,
    breakdowns: bool,
    svg: bool,
) -> None:
    """Evaluate scores against factuality labels; emit reports and PR curves."""
    manifest = ExperimentManifest.from_json_file(manifest_path)
    scores = [DetectionScore.from_json_dict(d) for d in read_jsonl(scores_path)]
    reports = cmd_eval(
        manifest, scores, cache_dir, out_dir, with_breakdowns=breakdowns, with_svg=svg
    )
    for metric, report in sorted(reports.items()):
        click.echo(f"{metric}: AUROC={report.auroc:.4f} AUPRC={report.auprc:.4f}")


@main.command("report")
@click.option("--scores", "scores_path", required=True, type=click.Path(exists=True))
@click.option(
    "--threshold-normalization",
    type=click.Choice(["minmax", "sigmoid"]),
    default="minmax",
    show_default=True,
)
@click.option("--out", "out_path", required=True, type=click.Path())
def report_cmd(scores_path: str, threshold_normalization: str, out_path: str) -> None:
    """Emit binary hallucination decisions at the 0.5 normalized threshold."""
    records = [DetectionScore.from_json_dict(d) for d in read_jsonl(scores_path)]
    by_metric: dict[str, list[DetectionScore]] = {}
    for s in records:
        by_metric.setdefault(s.metric_name.value, []).append(s)
    decisions = []
    for metric, group in sorted(by_metric.items()):
        oriented = [
            s.value if s.orientation is Orientation.HIGHER_MEANS_HALLUCINATION else -s.value
            for s in group
        ]
        normalized = normalize_scores(oriented, threshold_normalization)
        for s, norm in zip(group, normalized):
            decisions.append(
                {
                    "item_id": s.item_id,
                    "metric_name": metric,
                    "normalized_score": norm,
                    "hallucinated": norm > 0.5,
                }
            )
    decisions.sort(key=lambda d: (d["item_id"], d["metric_name"]))
    write_jsonl(out_path, decisions)
    click.echo(f"wrote {len(decisions)} decisions to {out_path}")


if __name__ == "__main__":
    sys.exit(main())
