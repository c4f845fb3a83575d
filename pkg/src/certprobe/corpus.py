"""Dataset ingestion, exclusion lists, label merging, and manifests."""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

from .core import (
    Consistency,
    DecodingParams,
    Factuality,
    QaItem,
    Source,
)
from .errors import MissingField, ParseError
from .llm_gateway import BackendConfig

logger = logging.getLogger(__name__)


def load_hotpotqa(path: str | Path) -> list[QaItem]:
    """Load the HotpotQA dev JSON array (fields _id, question, answer)."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            records = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ParseError(f"cannot read HotpotQA file {path}: {e}") from e
    if not isinstance(records, list):
        raise ParseError(f"expected a JSON array in {path}")
    items = []
    for rec in records:
        item_id = rec.get("_id")
        if not item_id:
            raise MissingField("record missing _id")
        if "question" not in rec:
            raise MissingField(f"record {item_id} missing question")
        if "answer" not in rec:
            raise MissingField(f"record {item_id} missing answer")
        items.append(
            QaItem(
                id=str(item_id),
                question=rec["question"],
                gold_answers=(rec["answer"],),
                source=Source.HOTPOT_QA,
            )
        )
    return items


def load_nq_open(path: str | Path) -> list[QaItem]:
    """Load NQ-open JSONL (fields question, answer: list per line)."""
    items = []
    skipped_blank = 0
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                skipped_blank += 1
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(f"{path}:{lineno}: {e}") from e
            answers = rec.get("answer")
            if isinstance(answers, str):
                answers = [answers]
            if not rec.get("question") or not answers:
                raise ParseError(f"{path}:{lineno}: missing question or answer")
            items.append(
                QaItem(
                    id=rec.get("id", f"nq-{lineno}"),
                    question=rec["question"],
                    gold_answers=tuple(answers),
                    source=Source.NQ_OPEN,
                )
            )
    if skipped_blank:
        logger.info("skipped %d blank lines in %s", skipped_blank, path)
    return items


def load_exclusions(path: str | Path) -> list[str]:
    """One item id per line; blanks and # comments ignored."""
    out = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line and not line.startswith("#"):
                out.append(line)
    return out


def apply_exclusions(items: list[QaItem], exclusion_ids: list[str]) -> list[QaItem]:
    """Drop listed ids, order preserved; unknown ids warn, never fail."""
    wanted = set(exclusion_ids)
    known = {it.id for it in items}
    for unknown in sorted(wanted - known):
        logger.warning("exclusion id not in corpus: %s", unknown)
    return [it for it in items if it.id not in wanted]


def merge_labels(items: list[QaItem], labels_path: str | Path) -> list[QaItem]:
    """Attach factuality/consistency labels from a JSONL label file.

    Lines look like {"id": ..., "factuality": "Factual",
    "consistency": {"mustbe": true, ...}}. Unmatched label ids are
    reported and skipped; duplicate conflicting labels are fatal.
    """
    labels: dict[str, dict] = {}
    with open(labels_path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(f"{labels_path}:{lineno}: {e}") from e
            item_id = rec.get("id")
            if not item_id:
                raise ParseError(f"{labels_path}:{lineno}: missing id")
            if item_id in labels and labels[item_id] != rec:
                raise ParseError(f"conflicting duplicate labels for id {item_id}")
            labels[item_id] = rec
    known = {it.id for it in items}
    for unmatched in sorted(set(labels) - known):
        logger.warning("label id not in corpus: %s", unmatched)
    out = []
    for it in items:
        rec = labels.get(it.id)
        if rec is None:
            out.append(it)
            continue
        factuality = Factuality(rec["factuality"]) if rec.get("factuality") else None
        consistency = None
        if rec.get("consistency") is not None:
            consistency = {
                slug: (Consistency.CONSISTENT if flag else Consistency.NON_CONSISTENT)
                for slug, flag in rec["consistency"].items()
            }
        out.append(replace(it, factuality_label=factuality, consistency_label=consistency))
    return out


def seeded_subset(items: list[QaItem], size: int, seed: int) -> list[QaItem]:
    """Deterministic corpus subsample; original order preserved."""
    if size >= len(items):
        return list(items)
    rng = random.Random(seed)
    chosen = set(rng.sample(range(len(items)), size))
    return [it for i, it in enumerate(items) if i in chosen]


@dataclass(frozen=True)
class ExperimentManifest:
    """Everything one experiment run needs, resolved from a JSON file."""

    corpus_path: str
    corpus_format: str  # "hotpotqa" | "nq_open" | "qaitem_jsonl"
    backend: BackendConfig
    output_dir: str
    expressions: tuple[str, ...] = ("unsure", "mustbe")
    exclusions_path: Optional[str] = None
    labels_path: Optional[str] = None
    nli_endpoint: Optional[str] = None
    reference_decoding: DecodingParams = DecodingParams(temperature=0.0)
    expression_decoding: DecodingParams = DecodingParams(temperature=0.0)
    sampling_decoding: DecodingParams = DecodingParams(temperature=1.0, n_samples=10)
    selfcheck_decoding: DecodingParams = DecodingParams(temperature=0.5, n_samples=8)
    subset_seed: Optional[int] = None
    subset_size: Optional[int] = None
    mock_table_path: Optional[str] = None

    @classmethod
    def from_json_file(cls, path: str | Path) -> "ExperimentManifest":
        base = Path(path).parent
        try:
            with open(path, "r", encoding="utf-8") as f:
                d = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ParseError(f"cannot read manifest {path}: {e}") from e

        def resolve(p: Optional[str]) -> Optional[str]:
            if p is None:
                return None
            q = Path(p)
            return str(q if q.is_absolute() else base / q)

        def params(key: str, default: DecodingParams) -> DecodingParams:
            return DecodingParams.from_json_dict(d[key]) if key in d else default

        manifest = cls(
            corpus_path=resolve(d["corpus_path"]),
            corpus_format=d.get("corpus_format", "qaitem_jsonl"),
            backend=BackendConfig.from_json_dict(d["backend"]),
            output_dir=resolve(d.get("output_dir", "out")),
            expressions=tuple(d.get("expressions", ("unsure", "mustbe"))),
            exclusions_path=resolve(d.get("exclusions_path")),
            labels_path=resolve(d.get("labels_path")),
            nli_endpoint=d.get("nli_endpoint"),
            reference_decoding=params("reference_decoding", DecodingParams(temperature=0.0)),
            expression_decoding=params("expression_decoding", DecodingParams(temperature=0.0)),
            sampling_decoding=params("sampling_decoding", DecodingParams(temperature=1.0, n_samples=10)),
            selfcheck_decoding=params("selfcheck_decoding", DecodingParams(temperature=0.5, n_samples=8)),
            subset_seed=d.get("subset_seed"),
            subset_size=d.get("subset_size"),
            mock_table_path=resolve(d.get("mock_table_path")),
        )
        for p in (manifest.corpus_path, manifest.exclusions_path, manifest.labels_path):
            if p is not None and not Path(p).exists():
                raise ParseError(f"manifest references a missing file: {p}")
        return manifest

    def load_items(self) -> list[QaItem]:
        if self.corpus_format == "hotpotqa":
            items = load_hotpotqa(self.corpus_path)
        elif self.corpus_format == "nq_open":
            items = load_nq_open(self.corpus_path)
        elif self.corpus_format == "qaitem_jsonl":
            from .core import read_jsonl

            items = [QaItem.from_json_dict(d) for d in read_jsonl(self.corpus_path)]
        else:
            raise ParseError(f"unknown corpus_format: {self.corpus_format}")
        if self.exclusions_path:
            items = apply_exclusions(items, load_exclusions(self.exclusions_path))
        if self.subset_size is not None:
            items = seeded_subset(items, self.subset_size, self.subset_seed or 0)
        if self.labels_path:
            items = merge_labels(items, self.labels_path)
        return items
