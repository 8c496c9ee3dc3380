"""Evaluation: answer EM/F1, support EM/F1, joint EM/F1, selector metrics,
and the bridge/comparison breakdown.

Answer normalization follows the public benchmark conventions: lowercase,
strip punctuation, drop the articles a/an/the, collapse whitespace.  Joint
metrics multiply the per-example answer and support precision/recall before
computing F1, so a model must be right on both tasks at once to score.
"""

from __future__ import annotations

import json
import re
import string
from collections import Counter
from dataclasses import dataclass, field

from .data_model import Example

_ARTICLES_RE = re.compile(r"\b(a|an|the)\b")


def normalize_answer(s: str) -> str:
    s = s.lower()
    s = "".join(ch for ch in s if ch not in string.punctuation)
    s = _ARTICLES_RE.sub(" ", s)
    return " ".join(s.split())


def answer_metrics(prediction: str, gold: str) -> tuple[int, float, float, float]:
    """(em, f1, precision, recall) of a predicted answer string."""
    pred_tokens = normalize_answer(prediction).split()
    gold_tokens = normalize_answer(gold).split()
    em = int(pred_tokens == gold_tokens)
    if not pred_tokens or not gold_tokens:
        score = float(pred_tokens == gold_tokens)
        return em, score, score, score
    common = Counter(pred_tokens) & Counter(gold_tokens)
    overlap = sum(common.values())
    if overlap == 0:
        return em, 0.0, 0.0, 0.0
    precision = overlap / len(pred_tokens)
    recall = overlap / len(gold_tokens)
    f1 = 2 * precision * recall / (precision + recall)
    return em, f1, precision, recall


def support_metrics(
    predicted: set[tuple[str, int]], gold: set[tuple[str, int]]
) -> tuple[int, float, float, float]:
    """(em, f1, precision, recall) of a supporting-fact set."""
    em = int(predicted == gold)
    if not predicted and not gold:
        return 1, 1.0, 1.0, 1.0
    overlap = len(predicted & gold)
    if overlap == 0:
        return em, 0.0, 0.0, 0.0
    precision = overlap / len(predicted)
    recall = overlap / len(gold)
    f1 = 2 * precision * recall / (precision + recall)
    return em, f1, precision, recall


def joint_from_parts(
    ans: tuple[int, float, float, float], sup: tuple[int, float, float, float]
) -> tuple[int, float]:
    """Per-example joint EM and F1 from answer/support (em, f1, p, r)."""
    em = ans[0] * sup[0]
    p = ans[2] * sup[2]
    r = ans[3] * sup[3]
    f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return em, f1


@dataclass
class EvalReport:
    n: int = 0
    ans_em: float = 0.0
    ans_f1: float = 0.0
    sup_em: float = 0.0
    sup_f1: float = 0.0
    joint_em: float = 0.0
    joint_f1: float = 0.0
    by_type: dict[str, "EvalReport"] = field(default_factory=dict)
    selector: dict[str, float] | None = None

    def to_dict(self) -> dict:
        out = {
            "n": self.n,
            "ans_em": self.ans_em,
            "ans_f1": self.ans_f1,
            "sup_em": self.sup_em,
            "sup_f1": self.sup_f1,
            "joint_em": self.joint_em,
            "joint_f1": self.joint_f1,
        }
        if self.by_type:
            out["by_type"] = {k: v.to_dict() for k, v in self.by_type.items()}
        if self.selector is not None:
            out["selector"] = self.selector
        return out

    def format_table(self) -> str:
        rows = [("all", self)] + sorted(self.by_type.items())
        lines = [
            f"{'subset':<12} {'n':>6} {'ans EM':>8} {'ans F1':>8} "
            f"{'sup EM':>8} {'sup F1':>8} {'joint EM':>9} {'joint F1':>9}"
        ]
        for name, r in rows:
            lines.append(
                f"{name:<12} {r.n:>6d} {r.ans_em:>8.4f} {r.ans_f1:>8.4f} "
                f"{r.sup_em:>8.4f} {r.sup_f1:>8.4f} {r.joint_em:>9.4f} {r.joint_f1:>9.4f}"
            )
        if self.selector is not None:
            lines.append(
                "selector     EM_S {em_s:.4f}  Recall_S {recall_s:.4f}  Acc_span {acc_span:.4f}".format(
                    **self.selector
                )
            )
        return "\n".join(lines)


def _aggregate(per_example: list[tuple[str, tuple, tuple]]) -> EvalReport:
    r = EvalReport(n=len(per_example))
    if not per_example:
        return r
    for _, ans, sup in per_example:
        jem, jf1 = joint_from_parts(ans, sup)
        r.ans_em += ans[0]
        r.ans_f1 += ans[1]
        r.sup_em += sup[0]
        r.sup_f1 += sup[1]
        r.joint_em += jem
        r.joint_f1 += jf1
    for name in ("ans_em", "ans_f1", "sup_em", "sup_f1", "joint_em", "joint_f1"):
        setattr(r, name, getattr(r, name) / r.n)
    return r


def evaluate_predictions(
    predictions: dict, examples: list[Example], by_type: bool = False
) -> EvalReport:
    """Score a prediction file against gold examples.

    ``predictions`` uses the benchmark shape: {"answer": {id: text},
    "sp": {id: [[title, index], ...]}}.  Missing predictions count as empty.
    """
    answers = predictions.get("answer", {})
    sps = predictions.get("sp", {})
    per_example = []
    for ex in examples:
        ans = answer_metrics(answers.get(ex.id, ""), ex.answer_text)
        pred_sp = {(str(t), int(i)) for t, i in sps.get(ex.id, [])}
        sup = support_metrics(pred_sp, set(ex.supporting_facts))
        per_example.append((ex.reasoning_type, ans, sup))

    report = _aggregate(per_example)
    if by_type:
        for rtype in sorted({t for t, _, _ in per_example}):
            report.by_type[rtype] = _aggregate([p for p in per_example if p[0] == rtype])
    return report


def selector_metrics(
    predicted: list[set[int]], examples: list[Example]
) -> dict[str, float]:
    """EM_S, Recall_S, Acc_span of top-2 document selections.

    EM_S: predicted set equals the gold set.  Recall_S: mean per-example
    fraction of gold documents retrieved.  Acc_span: fraction of examples
    whose score-2 document was selected, over examples that have one.
    """
    if len(predicted) != len(examples):
        raise ValueError("one prediction set per example required")
    em = recall = 0.0
    span_hits = 0
    span_total = 0
    for sel, ex in zip(predicted, examples):
        gold = set(ex.gold_indices())
        em += float(sel == gold)
        recall += len(sel & gold) / len(gold) if gold else 0.0
        span_doc = next((i for i, d in enumerate(ex.documents) if d.score == 2), None)
        if span_doc is not None:
            span_total += 1
            span_hits += int(span_doc in sel)
    n = len(examples)
    return {
        "em_s": em / n if n else 0.0,
        "recall_s": recall / n if n else 0.0,
        "acc_span": span_hits / span_total if span_total else 0.0,
        "n_span": float(span_total),
    }


def load_prediction_file(path) -> dict:
    with open(path, encoding="utf-8") as f:
        pred = json.load(f)
    for key in ("answer", "sp"):
        if key not in pred:
            raise ValueError(f"prediction file missing {key!r} key")
    return pred
