"""Contextual token embeddings: built-in deterministic toy encoder, plus the
interchange file that carries real encoder output into the pipeline.

Layout of every embedded pair is ``[CLS] question [SEP] context [SEP]``.
The toy encoder hashes token identity into a unit random vector, adds
sinusoidal position and a segment offset, flags tokens that also occur in a
different region of the pair (question vs. each sentence; the stand-in for
the token matching a real encoder's attention would pick up), and applies
one fixed seeded linear mixing layer over (token, 3-token window mean,
sequence mean, match channel, match-channel mean) so every position carries
local context, global context, and lexical-overlap evidence.  Row 0
([CLS]) doubles as the per-(question, document) summary vector for the
selector.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass

import numpy as np

from . import binformat
from .data_model import Document, Example
from .text import STOPWORDS, normalize_token, tokenize

logger = logging.getLogger(__name__)

CLS = "[CLS]"
SEP = "[SEP]"

SELECTOR_SLOT = "selector:{}"  # one per (question, document) pair
REASONER_SLOT = "reasoner"  # question + concatenated gold documents


@dataclass(frozen=True)
class SentenceSpan:
    """Half-open token range [start, end) of one context sentence."""

    start: int
    end: int
    doc_index: int
    title: str
    sentence_index: int


@dataclass
class TokenMatrix:
    values: np.ndarray  # (L, d) float32
    tokens: list[str]
    segments: np.ndarray  # (L,) int8; 1 = context sentence token, 0 = rest
    sentence_spans: list[SentenceSpan]
    cls_index: int = 0

    @property
    def length(self) -> int:
        return len(self.tokens)

    @property
    def dim(self) -> int:
        return int(self.values.shape[1])

    def summary_vector(self) -> np.ndarray:
        return self.values[self.cls_index]


@dataclass(frozen=True)
class EmbedConfig:
    dim: int = 64
    seed: int = 0
    max_len: int = 512


def _pos_encoding(length: int, dim: int) -> np.ndarray:
    pos = np.arange(length, dtype=np.float64)[:, None]
    i = np.arange(dim, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / dim)
    enc = np.where(i % 2 == 0, np.sin(angle), np.cos(angle))
    return enc.astype(np.float32)


class ToyEmbedder:
    """Deterministic hash-based encoder; identical inputs and seed give
    bitwise-identical output across runs and processes."""

    def __init__(self, config: EmbedConfig = EmbedConfig()):
        self.config = config
        d = config.dim
        rng = self._rng("mixing")
        self._mix = (rng.standard_normal((5 * d, d)) / np.sqrt(5 * d)).astype(np.float32)
        self._segment = (self._rng("segment").standard_normal((2, d)) * 0.2 / np.sqrt(d)).astype(
            np.float32
        )
        flag = self._rng("matchflag").standard_normal(d)
        self._match_flag = (flag / np.linalg.norm(flag)).astype(np.float32)
        self._token_cache: dict[str, np.ndarray] = {}
        self._pos_cache = _pos_encoding(config.max_len, d) * 0.2

    def _rng(self, name: str) -> np.random.Generator:
        digest = hashlib.sha256(f"embed:{self.config.seed}:{name}".encode()).digest()
        return np.random.default_rng(int.from_bytes(digest[:8], "little"))

    def _token_vec(self, token: str) -> np.ndarray:
        """Unit-norm identity vector, case-insensitive."""
        key = token.lower()
        vec = self._token_cache.get(key)
        if vec is None:
            rng = self._rng(f"token:{key}")
            raw = rng.standard_normal(self.config.dim)
            vec = (raw / np.linalg.norm(raw)).astype(np.float32)
            self._token_cache[key] = vec
        return vec

    def embed_pair(self, question: str, documents: list[tuple[int, Document]]) -> TokenMatrix:
        """Embed ``[CLS] question [SEP] sentences... [SEP]``.

        ``documents`` are (original index, document) pairs; their sentences
        are concatenated in the given order.  Whole trailing sentences that
        would overflow ``max_len`` are dropped (never split) and logged.
        """
        q_tokens = tokenize(question)
        tokens = [CLS] + q_tokens + [SEP]
        segments = [0] * len(tokens)
        spans: list[SentenceSpan] = []

        budget = self.config.max_len - 1  # room for the trailing [SEP]
        dropped = 0
        total = 0
        for doc_index, doc in documents:
            for s_idx, sentence in enumerate(doc.sentences):
                total += 1
                s_tokens = tokenize(sentence)
                if dropped or len(tokens) + len(s_tokens) > budget:
                    dropped += 1
                    continue
                start = len(tokens)
                tokens.extend(s_tokens)
                segments.extend([1] * len(s_tokens))
                spans.append(
                    SentenceSpan(
                        start=start,
                        end=len(tokens),
                        doc_index=doc_index,
                        title=doc.title,
                        sentence_index=s_idx,
                    )
                )
        tokens.append(SEP)
        segments.append(0)
        if dropped:
            logger.info(
                "truncated context: dropped %d of %d sentences (max_len=%d)",
                dropped,
                total,
                self.config.max_len,
            )

        seg = np.asarray(segments, dtype=np.int8)
        identity = np.stack([self._token_vec(t) for t in tokens])
        base = identity + self._pos_cache[: len(tokens)] + self._segment[seg]

        # Region id: -1 for question/separators, sentence ordinal otherwise.
        region = np.full(len(tokens), -1, dtype=np.int32)
        for ordinal, span in enumerate(spans):
            region[span.start : span.end] = ordinal
        # A content token "matches" when the same identity occurs in another
        # region (question vs. sentence, or two different sentences).
        # Stopwords and punctuation recur everywhere and carry no relevance
        # evidence, so they never match.
        eligible = np.array(
            [normalize_token(t) not in STOPWORDS and bool(normalize_token(t)) for t in tokens]
        )
        sims = identity @ identity.T
        cross_region = region[:, None] != region[None, :]
        matched = ((sims > 0.5) & cross_region).any(axis=1) & eligible
        # Scaled up so the overlap evidence survives the mixing projection
        # at an amplitude well above the raw bag-of-tokens channels.
        match_vec = 8.0 * matched[:, None] * (identity + self._match_flag)

        prev_ = np.zeros_like(base)
        prev_[1:] = base[:-1]
        next_ = np.zeros_like(base)
        next_[:-1] = base[1:]
        local = (prev_ + base + next_) / 3.0
        gmean = np.broadcast_to(0.5 * base.mean(axis=0), base.shape)
        mmean = np.broadcast_to(match_vec.mean(axis=0), base.shape)
        mixed = (
            np.concatenate([base, local, gmean, match_vec, mmean], axis=1) @ self._mix
        )

        return TokenMatrix(
            values=mixed.astype(np.float32),
            tokens=tokens,
            segments=seg,
            sentence_spans=spans,
            cls_index=0,
        )


# -- interchange file --------------------------------------------------------
def write_interchange(path, entries: list[tuple[str, str, TokenMatrix]]) -> None:
    """Write (example_id, slot, TokenMatrix) groups to one interchange file."""
    dims = {tm.dim for _, _, tm in entries}
    if len(dims) > 1:
        raise ValueError(f"mixed embedding dims in one file: {sorted(dims)}")
    header = {
        "dim": dims.pop() if dims else 0,
        "slots": [
            {
                "example_id": ex_id,
                "slot": slot,
                "length": tm.length,
                "tokens": tm.tokens,
                "segments": tm.segments.astype(int).tolist(),
                "cls_index": tm.cls_index,
                "sentence_spans": [
                    [s.start, s.end, s.doc_index, s.title, s.sentence_index]
                    for s in tm.sentence_spans
                ],
            }
            for ex_id, slot, tm in entries
        ],
    }
    blocks = [tm.values for _, _, tm in entries]
    binformat.write_file(path, binformat.INTERCHANGE_MAGIC, header, blocks)


def _interchange_shapes(header: dict) -> list[tuple[int, int]]:
    d = int(header["dim"])
    return [(int(s["length"]), d) for s in header["slots"]]


def read_interchange(path) -> dict[tuple[str, str], TokenMatrix]:
    """Read an interchange file into {(example id, slot): TokenMatrix}."""
    header, blocks = binformat.read_file(path, binformat.INTERCHANGE_MAGIC, _interchange_shapes)
    out: dict[tuple[str, str], TokenMatrix] = {}
    for slot_info, values in zip(header["slots"], blocks):
        if len(slot_info["tokens"]) != slot_info["length"]:
            raise binformat.CorruptionError(
                f"slot {slot_info['slot']!r} of {slot_info['example_id']!r}: "
                f"token count disagrees with declared length"
            )
        key = (slot_info["example_id"], slot_info["slot"])
        if key in out:
            raise binformat.CorruptionError(f"duplicate slot {key}")
        out[key] = TokenMatrix(
            values=values,
            tokens=list(slot_info["tokens"]),
            segments=np.asarray(slot_info["segments"], dtype=np.int8),
            sentence_spans=[
                SentenceSpan(int(a), int(b), int(c), str(t), int(i))
                for a, b, c, t, i in slot_info["sentence_spans"]
            ],
            cls_index=int(slot_info["cls_index"]),
        )
    return out


# -- embedding providers ------------------------------------------------------
class MissingSlotError(KeyError):
    pass


class ToyProvider:
    """Computes (and caches) toy embeddings on demand."""

    mode = "toy"

    def __init__(self, config: EmbedConfig = EmbedConfig()):
        self.embedder = ToyEmbedder(config)
        self.config = config
        self._cache: dict[tuple[str, tuple[int, ...]], TokenMatrix] = {}

    def selector_matrix(self, ex: Example, doc_index: int) -> TokenMatrix:
        return self._get(ex, (doc_index,))

    def reasoner_matrix(self, ex: Example, doc_indices: list[int]) -> TokenMatrix:
        return self._get(ex, tuple(doc_indices))

    def _get(self, ex: Example, doc_indices: tuple[int, ...]) -> TokenMatrix:
        key = (ex.id, doc_indices)
        tm = self._cache.get(key)
        if tm is None:
            docs = [(i, ex.documents[i]) for i in doc_indices]
            tm = self.embedder.embed_pair(ex.question, docs)
            self._cache[key] = tm
        return tm


class InterchangeProvider:
    """Serves precomputed embeddings from an interchange file.

    Selector slots are named ``selector:<doc index>``; the reasoner slot
    (question + concatenated gold documents) is named ``reasoner`` and is
    only available for the gold document set.
    """

    mode = "interchange"

    def __init__(self, path):
        self.slots = read_interchange(path)
        self.path = str(path)

    def selector_matrix(self, ex: Example, doc_index: int) -> TokenMatrix:
        key = (ex.id, SELECTOR_SLOT.format(doc_index))
        if key not in self.slots:
            raise MissingSlotError(f"no interchange slot {key}")
        return self.slots[key]

    def reasoner_matrix(self, ex: Example, doc_indices: list[int]) -> TokenMatrix:
        key = (ex.id, REASONER_SLOT)
        if key not in self.slots:
            raise MissingSlotError(f"no interchange slot {key}")
        tm = self.slots[key]
        present = {s.doc_index for s in tm.sentence_spans}
        if present != set(doc_indices):
            raise MissingSlotError(
                f"interchange reasoner slot for {ex.id!r} covers documents "
                f"{sorted(present)}, requested {sorted(doc_indices)}"
            )
        return tm
