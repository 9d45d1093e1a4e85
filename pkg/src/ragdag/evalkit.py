"""Dataset loading and QA scoring: normalized exact match and token F1,
with complexity-bucketed reporting.

Normalization follows the standard open-domain QA convention: lowercase,
strip punctuation, drop the articles a/an/the as whole tokens, collapse
whitespace. F1 is multiset token overlap, maximized over the accepted
golden answers.
"""

from __future__ import annotations

import json
import string
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .errors import IdMismatchError, MalformedLineError, MissingFieldError
from .graph import QueryGraph

_PUNCT_TABLE = str.maketrans("", "", string.punctuation)
_ARTICLES = {"a", "an", "the"}


def normalize(text: str) -> str:
    tokens = text.lower().translate(_PUNCT_TABLE).split()
    return " ".join(t for t in tokens if t not in _ARTICLES)


def exact_match(prediction: str, golden_answers: Sequence[str]) -> int:
    pred = normalize(prediction)
    return int(any(pred == normalize(g) for g in golden_answers))


def _pair_f1(pred_tokens: list[str], gold_tokens: list[str]) -> float:
    if not pred_tokens and not gold_tokens:
        return 1.0
    if not pred_tokens or not gold_tokens:
        return 0.0
    overlap = sum((Counter(pred_tokens) & Counter(gold_tokens)).values())
    if overlap == 0:
        return 0.0
    precision = overlap / len(pred_tokens)
    recall = overlap / len(gold_tokens)
    return 2 * precision * recall / (precision + recall)


def f1(prediction: str, golden_answers: Sequence[str]) -> float:
    pred_tokens = normalize(prediction).split()
    return max(_pair_f1(pred_tokens, normalize(g).split()) for g in golden_answers)


@dataclass(frozen=True)
class QAItem:
    id: str
    question: str
    golden_answers: tuple[str, ...]
    hop_count: int | None = None
    gold_decomposition: tuple[str, ...] | None = None

    def __post_init__(self):
        if not self.golden_answers:
            raise ValueError(f"item {self.id} has no golden answers")


def load_dataset(path: str | Path) -> list[QAItem]:
    """Parse a line-delimited dataset of {id, question, golden_answers}
    records with optional metadata.hops / metadata.decomposition."""
    items: list[QAItem] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedLineError(line_no, f"invalid JSON: {exc}") from exc
            for name in ("id", "question", "golden_answers"):
                if name not in obj:
                    raise MissingFieldError(name, line_no)
            golds = obj["golden_answers"]
            if not isinstance(golds, list) or not golds:
                raise MissingFieldError("golden_answers", line_no)
            meta = obj.get("metadata", {})
            decomposition = meta.get("decomposition")
            items.append(
                QAItem(
                    id=str(obj["id"]),
                    question=obj["question"],
                    golden_answers=tuple(str(g) for g in golds),
                    hop_count=meta.get("hops"),
                    gold_decomposition=tuple(decomposition) if decomposition else None,
                )
            )
    return items


ALIGNMENT_F1_THRESHOLD = 0.6


def decomposition_alignment(
    predicted: QueryGraph | Sequence[str], gold_decomposition: Sequence[str]
) -> bool:
    """Heuristic agreement between a predicted decomposition and a
    human-annotated one: counts must match, and a greedy 1-1 matching must
    pair every predicted sub-query with a gold one at token F1 >= 0.6.

    This is an explicit stand-in metric; treat absolute numbers as
    approximate.
    """
    if isinstance(predicted, QueryGraph):
        questions = [n.template for n in predicted.nodes]
    else:
        questions = list(predicted)
    if len(questions) != len(gold_decomposition):
        return False
    remaining = list(gold_decomposition)
    for q in questions:
        scored = [(f1(q, [g]), i) for i, g in enumerate(remaining)]
        best_score, best_idx = max(scored, key=lambda pair: (pair[0], -pair[1]))
        if best_score < ALIGNMENT_F1_THRESHOLD:
            return False
        remaining.pop(best_idx)
    return True


@dataclass
class ScoreReport:
    em: float
    f1: float
    per_item: list[dict]  # {"id", "em", "f1", "hops"}
    by_hops: dict[int, dict] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "em": self.em,
            "f1": self.f1,
            "items": len(self.per_item),
            "per_item": self.per_item,
            "by_hops": {str(h): v for h, v in sorted(self.by_hops.items())},
        }

    def to_rows(self) -> list[list[str]]:
        rows = [["overall", str(len(self.per_item)), f"{self.em:.4f}", f"{self.f1:.4f}"]]
        for hops, bucket in sorted(self.by_hops.items()):
            rows.append(
                [f"{hops}-hop", str(bucket["count"]), f"{bucket['em']:.4f}", f"{bucket['f1']:.4f}"]
            )
        return rows


def report(results: dict[str, str], items: Sequence[QAItem]) -> ScoreReport:
    """Score predictions (id -> answer text) against the dataset items,
    overall and bucketed by hop count when available."""
    item_ids = {item.id for item in items}
    if set(results.keys()) != item_ids:
        missing = sorted(item_ids - set(results.keys()))[:5]
        extra = sorted(set(results.keys()) - item_ids)[:5]
        raise IdMismatchError(f"result ids do not match items (missing {missing}, extra {extra})")
    per_item = []
    for item in items:
        prediction = results[item.id]
        per_item.append(
            {
                "id": item.id,
                "em": exact_match(prediction, item.golden_answers),
                "f1": f1(prediction, item.golden_answers),
                "hops": item.hop_count,
            }
        )
    n = len(per_item)
    by_hops: dict[int, dict] = {}
    for rec in per_item:
        if rec["hops"] is None:
            continue
        bucket = by_hops.setdefault(rec["hops"], {"count": 0, "em": 0.0, "f1": 0.0})
        bucket["count"] += 1
        bucket["em"] += rec["em"]
        bucket["f1"] += rec["f1"]
    for bucket in by_hops.values():
        bucket["em"] /= bucket["count"]
        bucket["f1"] /= bucket["count"]
    return ScoreReport(
        em=sum(r["em"] for r in per_item) / n if n else 0.0,
        f1=sum(r["f1"] for r in per_item) / n if n else 0.0,
        per_item=per_item,
        by_hops=by_hops,
    )
