"""Exact-match entity evaluation over BIO tag sequences.

Chunking follows the default (lenient) behaviour of seqeval: an ``I-t`` that
does not continue an open ``t`` entity starts a new one.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

from .crf import parse_tag


@dataclass(frozen=True)
class EntitySpan:
    entity_type: str
    start: int
    end: int  # exclusive

    def __post_init__(self):
        if not 0 <= self.start < self.end:
            raise ValueError(f"invalid span [{self.start}, {self.end})")


def extract_spans(tags: Sequence[str], strict: bool = False) -> list[EntitySpan]:
    """Entity spans sorted by start.

    In strict mode an entity must open with ``B-t``; stray ``I-t`` tags are
    ignored instead of starting a new entity.
    """
    spans = []
    open_type, open_start = None, 0
    for i, tag in enumerate(tags):
        prefix, typ = parse_tag(tag)
        continues = prefix == "I" and typ == open_type
        if open_type is not None and not continues:
            spans.append(EntitySpan(open_type, open_start, i))
            open_type = None
        if prefix == "B" or (prefix == "I" and not continues and not strict):
            open_type, open_start = typ, i
    if open_type is not None:
        spans.append(EntitySpan(open_type, open_start, len(tags)))
    return spans


@dataclass
class Scores:
    precision: float
    recall: float
    f1: float
    support: int = 0
    tp: int = 0
    n_pred: int = 0

    def as_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "support": self.support,
            "tp": self.tp,
            "predicted": self.n_pred,
        }


def _prf(tp: int, n_pred: int, n_gold: int) -> Scores:
    p = tp / n_pred if n_pred else 0.0
    r = tp / n_gold if n_gold else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return Scores(p, r, f, n_gold, tp, n_pred)


@dataclass
class EvalReport:
    per_type: dict[str, Scores]
    micro: Scores
    macro: Scores
    averages: tuple[str, ...] = field(default=("micro", "macro"))

    def as_dict(self) -> dict:
        out = {}
        if "micro" in self.averages:
            out["micro"] = self.micro.as_dict()
        if "macro" in self.averages:
            out["macro"] = self.macro.as_dict()
        out["per_type"] = {t: s.as_dict() for t, s in sorted(self.per_type.items())}
        return out

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2)

    def to_text(self) -> str:
        rows = [f"{'':<16}{'precision':>10}{'recall':>10}{'f1':>10}{'support':>10}"]
        for t, s in sorted(self.per_type.items()):
            rows.append(f"{t:<16}{s.precision:>10.4f}{s.recall:>10.4f}{s.f1:>10.4f}{s.support:>10d}")
        rows.append("")
        for name in self.averages:
            s = getattr(self, name)
            rows.append(
                f"{name + ' avg':<16}{s.precision:>10.4f}{s.recall:>10.4f}{s.f1:>10.4f}{s.support:>10d}"
            )
        return "\n".join(rows)


def compute_prf(
    gold: Sequence[Sequence[EntitySpan]], pred: Sequence[Sequence[EntitySpan]]
) -> EvalReport:
    """Micro, macro and per-type precision/recall/F1 from aligned span lists.

    Macro averages run over entity types with gold support; types seen only in
    predictions still count toward the micro totals.
    """
    if len(gold) != len(pred):
        raise ValueError(f"{len(gold)} gold sentences vs {len(pred)} predicted")
    tp, n_gold, n_pred = {}, {}, {}
    for g_spans, p_spans in zip(gold, pred):
        g_set, p_set = set(g_spans), set(p_spans)
        for s in g_set:
            n_gold[s.entity_type] = n_gold.get(s.entity_type, 0) + 1
        for s in p_set:
            n_pred[s.entity_type] = n_pred.get(s.entity_type, 0) + 1
        for s in g_set & p_set:
            tp[s.entity_type] = tp.get(s.entity_type, 0) + 1
    types = sorted(set(n_gold) | set(n_pred))
    per_type = {t: _prf(tp.get(t, 0), n_pred.get(t, 0), n_gold.get(t, 0)) for t in types}
    micro = _prf(sum(tp.values()), sum(n_pred.values()), sum(n_gold.values()))
    supported = [per_type[t] for t in types if n_gold.get(t, 0) > 0]
    if supported:
        k = len(supported)
        macro = Scores(
            sum(s.precision for s in supported) / k,
            sum(s.recall for s in supported) / k,
            sum(s.f1 for s in supported) / k,
            sum(s.support for s in supported),
        )
    else:
        macro = Scores(0.0, 0.0, 0.0, 0)
    return EvalReport(per_type, micro, macro)


def evaluate_tags(
    gold_tags: Sequence[Sequence[str]], pred_tags: Sequence[Sequence[str]], strict: bool = False
) -> EvalReport:
    if len(gold_tags) != len(pred_tags):
        raise ValueError(f"{len(gold_tags)} gold sentences vs {len(pred_tags)} predicted")
    for g, p in zip(gold_tags, pred_tags):
        if len(g) != len(p):
            raise ValueError(f"sentence length mismatch: {len(g)} gold vs {len(p)} predicted tags")
    return compute_prf(
        [extract_spans(t, strict) for t in gold_tags],
        [extract_spans(t, strict) for t in pred_tags],
    )
