"""Deterministic tokenization and normalization shared by the whole pipeline.

The tokenizer splits words (keeping internal apostrophes) and emits each
punctuation mark as its own token, with character offsets so spans can be
mapped back to source text.  Normalization lowercases, drops possessive
suffixes and punctuation, and collapses whitespace; it is the common ground
for answer-span matching and mention comparison.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

_TOKEN_RE = re.compile(r"\w+(?:'\w+)*|[^\w\s]")
_POSSESSIVE_RE = re.compile(r"'s$|'$")
_PUNCT_RE = re.compile(r"[^\w\s]")

# Function words that delimit noun-phrase chunks.  Curated, not exhaustive:
# determiners, prepositions, conjunctions, auxiliaries, pronouns, wh-words.
STOPWORDS = frozenset(
    """
    a an the of in on at to from by with for as and or but if that this
    these those there here is are was were am be been being do does did
    done have has had having will would can could shall should may might
    must not nor so such than then what which who whom whose when where
    why how it its he him his she her hers they them their theirs we us
    our ours you your yours i me my mine same other into over about
    """.split()
)


@dataclass(frozen=True)
class Token:
    text: str
    start: int  # character offset into the source text
    end: int


def tokenize_with_offsets(text: str) -> list[Token]:
    return [Token(m.group(0), m.start(), m.end()) for m in _TOKEN_RE.finditer(text)]


def tokenize(text: str) -> list[str]:
    return [m.group(0) for m in _TOKEN_RE.finditer(text)]


def normalize_token(token: str) -> str:
    """Lowercase, strip possessive suffix, then strip punctuation.

    Pure-punctuation tokens normalize to the empty string.
    """
    t = _POSSESSIVE_RE.sub("", token.lower())
    return _PUNCT_RE.sub("", t)


def normalize_tokens(tokens: list[str]) -> list[str]:
    """Normalized forms of ``tokens`` with empty results dropped."""
    out = []
    for t in tokens:
        n = normalize_token(t)
        if n:
            out.append(n)
    return out


def normalize_phrase(text: str) -> str:
    """Normalize free text to a canonical mention/answer key."""
    return " ".join(normalize_tokens(tokenize(text)))


def is_stopword(token: str) -> bool:
    return normalize_token(token) in STOPWORDS
