"""Parsing, validation, and label derivation for multi-document QA examples.

Input follows the public HotpotQA JSON shape: a list of objects with
``_id``, ``question``, ``answer``, ``supporting_facts`` as [title, sent_id]
pairs, ``context`` as [title, [sentences]] pairs, and ``type``.  Gold
document labels and per-document relevance scores are derived from the
supporting-fact annotation: every referenced document is gold, and for span
answers the gold document containing the answer string is scored 2.
"""

from __future__ import annotations

import enum
import json
import logging
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, Iterable

from .text import normalize_token, normalize_tokens, tokenize

if TYPE_CHECKING:
    from .embedder import TokenMatrix

logger = logging.getLogger(__name__)

REASONING_TYPES = ("bridge", "comparison")


class DatasetError(Exception):
    pass


class ParseError(DatasetError):
    """Malformed JSON; carries the byte offset of the failure."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class ValidationError(DatasetError):
    """A structurally valid record that violates dataset invariants."""

    def __init__(self, example_id: str, message: str):
        super().__init__(f"example {example_id!r}: {message}")
        self.example_id = example_id


class AnswerType(enum.IntEnum):
    SPAN = 0
    YES = 1
    NO = 2


@dataclass(frozen=True)
class Document:
    title: str
    sentences: tuple[str, ...]
    gold_label: int = 0  # 1 iff some supporting fact references this title
    score: int = 0  # 2: gold doc holding the answer span, 1: other gold, 0: rest


@dataclass(frozen=True)
class Example:
    id: str
    question: str
    documents: tuple[Document, ...]
    supporting_facts: frozenset[tuple[str, int]]
    answer_text: str
    reasoning_type: str
    difficulty: str | None = None
    label_warnings: tuple[str, ...] = ()

    @property
    def answer_type(self) -> AnswerType:
        a = self.answer_text.strip().lower()
        if a == "yes":
            return AnswerType.YES
        if a == "no":
            return AnswerType.NO
        return AnswerType.SPAN

    def gold_indices(self) -> list[int]:
        return [i for i, d in enumerate(self.documents) if d.gold_label == 1]

    def supporting_titles(self) -> set[str]:
        return {t for t, _ in self.supporting_facts}


@dataclass(frozen=True)
class AnswerLabel:
    """Span/Yes/No target of one example.

    For span answers the indices are token positions into a TokenMatrix and
    ``source_doc`` is the owning document index; Yes/No answers carry null
    span fields.
    """

    answer_type: AnswerType
    span_start: int | None = None
    span_end: int | None = None
    source_doc: int | None = None

    def __post_init__(self):
        has_span = self.span_start is not None and self.span_end is not None
        if self.answer_type == AnswerType.SPAN:
            if not has_span or self.span_start > self.span_end:
                raise ValueError("span answers need span_start <= span_end")
        elif has_span or self.span_start is not None or self.span_end is not None:
            raise ValueError("yes/no answers must not carry span indices")


def _require(cond: bool, example_id: str, message: str) -> None:
    if not cond:
        raise ValidationError(example_id, message)


def parse_dataset(raw: bytes | str) -> list[Example]:
    """Parse and validate a HotpotQA-shape JSON byte stream."""
    if isinstance(raw, bytes):
        raw = raw.decode("utf-8")
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as e:
        raise ParseError(e.msg, e.pos) from e
    if not isinstance(data, list):
        raise ParseError("top-level JSON value must be a list of examples", 0)

    examples = []
    seen_ids: set[str] = set()
    for record in data:
        ex = _parse_example(record)
        _require(ex.id not in seen_ids, ex.id, "duplicate example id")
        seen_ids.add(ex.id)
        examples.append(ex)
    return examples


def load_dataset(path) -> list[Example]:
    with open(path, "rb") as f:
        return parse_dataset(f.read())


def _parse_example(record) -> Example:
    if not isinstance(record, dict):
        raise ValidationError("<unknown>", "example record must be an object")
    ex_id = str(record.get("_id", record.get("id", "<missing id>")))
    _require("question" in record, ex_id, "missing question")
    _require("context" in record, ex_id, "missing context")
    _require("answer" in record, ex_id, "missing answer")

    docs = []
    titles: set[str] = set()
    for entry in record["context"]:
        _require(
            isinstance(entry, (list, tuple)) and len(entry) == 2,
            ex_id,
            "context entries must be [title, [sentences]] pairs",
        )
        title, sentences = entry
        _require(isinstance(title, str), ex_id, "document title must be a string")
        _require(title not in titles, ex_id, f"duplicate document title {title!r}")
        titles.add(title)
        _require(
            isinstance(sentences, list) and all(isinstance(s, str) for s in sentences),
            ex_id,
            f"sentences of {title!r} must be a list of strings",
        )
        _require(len(sentences) > 0, ex_id, f"document {title!r} has no sentences")
        docs.append(Document(title=title, sentences=tuple(sentences)))
    _require(len(docs) > 0, ex_id, "empty document list")

    facts = set()
    raw_facts = record.get("supporting_facts", [])
    _require(len(raw_facts) > 0, ex_id, "no supporting facts")
    by_title = {d.title: d for d in docs}
    for fact in raw_facts:
        _require(
            isinstance(fact, (list, tuple)) and len(fact) == 2,
            ex_id,
            "supporting facts must be [title, sentence_index] pairs",
        )
        title, idx = fact
        _require(title in by_title, ex_id, f"supporting fact references unknown title {title!r}")
        _require(
            isinstance(idx, int) and 0 <= idx < len(by_title[title].sentences),
            ex_id,
            f"supporting fact sentence index {idx!r} out of range for {title!r}",
        )
        facts.add((title, idx))

    rtype = record.get("type", "bridge")
    _require(rtype in REASONING_TYPES, ex_id, f"unknown reasoning type {rtype!r}")

    return Example(
        id=ex_id,
        question=str(record["question"]),
        documents=tuple(docs),
        supporting_facts=frozenset(facts),
        answer_text=str(record["answer"]),
        reasoning_type=rtype,
        difficulty=record.get("level"),
    )


def example_to_record(ex: Example, derived: bool = False) -> dict:
    """Serialize back to the input JSON shape (plus labels under "derived")."""
    record = {
        "_id": ex.id,
        "question": ex.question,
        "answer": ex.answer_text,
        "supporting_facts": [[t, i] for t, i in sorted(ex.supporting_facts)],
        "context": [[d.title, list(d.sentences)] for d in ex.documents],
        "type": ex.reasoning_type,
    }
    if ex.difficulty is not None:
        record["level"] = ex.difficulty
    if derived:
        record["derived"] = {
            "gold_labels": [d.gold_label for d in ex.documents],
            "scores": [d.score for d in ex.documents],
            "answer_type": ex.answer_type.name.lower(),
            "warnings": list(ex.label_warnings),
        }
    return record


def dump_dataset(examples: Iterable[Example], derived: bool = False) -> str:
    return json.dumps([example_to_record(e, derived) for e in examples], ensure_ascii=False)


# -- label derivation -------------------------------------------------------
def _contains_answer(tokens: list[str], answer: list[str]) -> list[int]:
    """Start offsets (into the normalized token list) of every occurrence."""
    if not answer or len(answer) > len(tokens):
        return []
    return [
        i
        for i in range(len(tokens) - len(answer) + 1)
        if tokens[i : i + len(answer)] == answer
    ]


def derive_gold_labels(ex: Example) -> Example:
    """Assign gold labels and relevance scores; idempotent.

    Gold documents are exactly those referenced by supporting facts.  For
    span answers, the gold document whose text contains the answer token
    sequence gets score 2 (preferring documents where an occurrence falls in
    a supporting-fact sentence, then the lowest document index); other gold
    documents get 1 and the rest 0.  If no gold document contains the
    answer, all gold documents get score 1 and a warning is recorded.
    """
    gold_titles = ex.supporting_titles()
    warnings: list[str] = []
    if len(gold_titles) != 2:
        warnings.append(f"expected 2 gold documents, found {len(gold_titles)}")
        logger.warning("example %s: %s", ex.id, warnings[-1])

    span_doc_index: int | None = None
    if ex.answer_type == AnswerType.SPAN:
        answer_tokens = normalize_tokens(tokenize(ex.answer_text))
        containing: list[int] = []
        with_support_hit: list[int] = []
        for i, doc in enumerate(ex.documents):
            if doc.title not in gold_titles:
                continue
            doc_tokens = normalize_tokens(tokenize(" ".join(doc.sentences)))
            if not _contains_answer(doc_tokens, answer_tokens):
                continue
            containing.append(i)
            for s_idx, sentence in enumerate(doc.sentences):
                if (doc.title, s_idx) not in ex.supporting_facts:
                    continue
                sent_tokens = normalize_tokens(tokenize(sentence))
                if _contains_answer(sent_tokens, answer_tokens):
                    with_support_hit.append(i)
                    break
        pool = with_support_hit or containing
        if pool:
            span_doc_index = min(pool)
        else:
            warnings.append("span answer not found in any gold document")
            logger.warning("example %s: %s", ex.id, warnings[-1])

    docs = []
    for i, doc in enumerate(ex.documents):
        gold = 1 if doc.title in gold_titles else 0
        if not gold:
            score = 0
        elif span_doc_index is not None and i == span_doc_index:
            score = 2
        else:
            score = 1
        docs.append(replace(doc, gold_label=gold, score=score))
    return replace(ex, documents=tuple(docs), label_warnings=tuple(warnings))


def locate_answer_span(ex: Example, tm: "TokenMatrix") -> AnswerLabel | None:
    """Find the answer token span inside an embedded gold context.

    Matching runs over normalized tokens; occurrences inside a
    supporting-fact sentence win, then the earliest position.  Yes/No
    answers yield a span-free label.  Returns None when a span answer has no
    occurrence, which marks the example untrainable for the span loss.
    """
    atype = ex.answer_type
    if atype != AnswerType.SPAN:
        return AnswerLabel(answer_type=atype)

    answer_tokens = normalize_tokens(tokenize(ex.answer_text))
    if not answer_tokens:
        return None

    # Match against context tokens whose normalization is non-empty, then
    # map back to raw token indices (punctuation sits between words).
    ctx_positions = []
    for span in tm.sentence_spans:
        for t in range(span.start, span.end):
            n = normalize_token(tm.tokens[t])
            if n:
                ctx_positions.append((t, n))

    matches: list[tuple[int, int]] = []
    norm_seq = [n for _, n in ctx_positions]
    for i in _contains_answer(norm_seq, answer_tokens):
        start = ctx_positions[i][0]
        end = ctx_positions[i + len(answer_tokens) - 1][0]
        matches.append((start, end))
    if not matches:
        return None

    def in_supporting_sentence(start: int, end: int) -> bool:
        for span in tm.sentence_spans:
            if span.start <= start and end < span.end:
                return (span.title, span.sentence_index) in ex.supporting_facts
        return False

    preferred = [m for m in matches if in_supporting_sentence(*m)]
    start, end = (preferred or matches)[0]
    source = next(
        (s.doc_index for s in tm.sentence_spans if s.start <= start < s.end), None
    )
    return AnswerLabel(
        answer_type=AnswerType.SPAN, span_start=start, span_end=end, source_doc=source
    )
