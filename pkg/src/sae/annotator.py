"""Mention extraction: named entities and noun phrases, heuristically.

The built-in annotator needs no external NLP toolkit.  Named entities are
maximal runs of capitalized tokens (internal "of"/"and"/"the" connectors
allowed); noun phrases are stopword-delimited chunks of the normalized token
stream.  Mentions compare by exact equality of normalized strings.  A
precomputed-annotation JSON file can override the heuristic with real NER
output, keyed by example id.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .text import STOPWORDS, Token, normalize_phrase, normalize_token, tokenize_with_offsets

CONNECTORS = frozenset({"of", "and", "the"})


@dataclass(frozen=True)
class MentionSet:
    mentions: frozenset[str]
    spans: dict[str, tuple[tuple[int, int], ...]] = field(default_factory=dict)

    def __bool__(self) -> bool:
        return bool(self.mentions)


def mentions_match(a: MentionSet, b: MentionSet) -> bool:
    """True iff the normalized mention sets intersect."""
    return bool(a.mentions & b.mentions)


def _is_capitalized(tok: Token) -> bool:
    return tok.text[0].isupper() and any(c.isalpha() for c in tok.text)


def _entity_runs(tokens: list[Token]) -> list[list[Token]]:
    """Maximal capitalized runs, bridging lowercase connectors."""
    runs: list[list[Token]] = []
    current: list[Token] = []
    for i, tok in enumerate(tokens):
        if _is_capitalized(tok):
            current.append(tok)
        elif (
            current
            and tok.text.lower() in CONNECTORS
            and i + 1 < len(tokens)
            and _is_capitalized(tokens[i + 1])
        ):
            current.append(tok)
        else:
            if current:
                runs.append(current)
            current = []
    if current:
        runs.append(current)

    trimmed = []
    for run in runs:
        while run and run[0].text.lower() in CONNECTORS:
            run = run[1:]
        while run and run[-1].text.lower() in CONNECTORS:
            run = run[:-1]
        # Single capitalized stopwords ("The", "Do", "What") are not entities.
        caps = [t for t in run if _is_capitalized(t)]
        if len(run) == 1 and normalize_token(run[0].text) in STOPWORDS:
            continue
        if caps:
            trimmed.append(run)
    return trimmed


def _chunks(tokens: list[Token]) -> list[list[Token]]:
    """Stopword/punctuation-delimited runs of content tokens."""
    chunks: list[list[Token]] = []
    current: list[Token] = []
    for tok in tokens:
        norm = normalize_token(tok.text)
        if not norm or norm in STOPWORDS:
            if current:
                chunks.append(current)
            current = []
        else:
            current.append(tok)
    if current:
        chunks.append(current)
    return chunks


def annotate(text: str) -> MentionSet:
    """Extract the mention set of a text; deterministic and pure."""
    tokens = tokenize_with_offsets(text)
    spans: dict[str, list[tuple[int, int]]] = {}
    for group in _entity_runs(tokens) + _chunks(tokens):
        phrase = normalize_phrase(" ".join(t.text for t in group))
        if not phrase:
            continue
        spans.setdefault(phrase, [])
        span = (group[0].start, group[-1].end)
        if span not in spans[phrase]:
            spans[phrase].append(span)
    return MentionSet(
        mentions=frozenset(spans),
        spans={m: tuple(sorted(s)) for m, s in spans.items()},
    )


class Annotator:
    """Mention provider for questions and document sentences.

    With an override file, precomputed mentions win wherever present and the
    heuristic fills the gaps.  Override schema::

        {"<example id>": {"question": ["mention", ...],
                          "docs": {"<title>": [["mention", ...], ...]}}}

    where ``docs`` maps a document title to one mention list per sentence.
    """

    def __init__(self, override_path: str | None = None):
        self._override = {}
        if override_path is not None:
            with open(override_path, encoding="utf-8") as f:
                self._override = json.load(f)
        self._cache: dict[str, MentionSet] = {}

    def _heuristic(self, text: str) -> MentionSet:
        got = self._cache.get(text)
        if got is None:
            got = self._cache[text] = annotate(text)
        return got

    @staticmethod
    def _from_list(mentions) -> MentionSet:
        return MentionSet(mentions=frozenset(normalize_phrase(m) for m in mentions))

    def question_mentions(self, example_id: str, question: str) -> MentionSet:
        entry = self._override.get(example_id, {})
        if "question" in entry:
            return self._from_list(entry["question"])
        return self._heuristic(question)

    def sentence_mentions(
        self, example_id: str, title: str, sentence_index: int, sentence: str
    ) -> MentionSet:
        entry = self._override.get(example_id, {})
        doc_lists = entry.get("docs", {}).get(title)
        if doc_lists is not None and sentence_index < len(doc_lists):
            return self._from_list(doc_lists[sentence_index])
        return self._heuristic(sentence)
