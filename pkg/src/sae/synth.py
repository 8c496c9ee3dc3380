"""Seeded synthetic multi-hop datasets in the HotpotQA JSON shape.

Bridge template: document A links a described category to a bridge entity
("The tower that stands in Qopul is Brenik Stel."), document B states the
asked attribute of that entity ("The color of Brenik Stel is Vumlor."), and
the question asks for the attribute of the described category.  Comparison
template: two entity documents state an attribute value each; the question
asks whether the values match (yes/no).  Distractor documents reuse the
templates with disjoint entities; bridge distractors mention the question's
category word behind an adjective so their mention chunks never match the
question's.  Entities, places, and values are pronounceable nonsense words
so that learned models must use structure, not token memorization.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import diffcore as dc

CATEGORIES = [
    "tower", "castle", "temple", "harbor", "garden", "statue", "market", "forest",
    "valley", "canyon", "meadow", "lagoon", "citadel", "orchard", "quarry", "archive",
]
ATTRIBUTES = [
    "color", "size", "shape", "weight", "height", "sound",
    "scent", "age", "width", "depth", "glow", "texture",
]
VERBS = ["stands", "sits", "hides", "waits", "grows", "sleeps"]
PAD_VERBS = ["rests", "lingers", "wanders", "settles", "gleams", "echoes"]
PAD_PREPS = ["near", "beside", "beyond", "behind"]
ADJECTIVES = ["old", "grey", "quiet", "tall", "small", "pale"]
# Fixed comparison-value vocabulary: a finite pool keeps value equality
# learnable by the answer-type head.
COMPARISON_VALUES = ["mardel", "vintor", "koslin", "berax", "tulven", "dramok", "selvin", "porvex"]

_SYLLABLES = [
    "ba", "bel", "bri", "dor", "dra", "fen", "gol", "har", "jin", "kel", "kor",
    "lan", "lom", "mar", "mek", "nor", "pel", "pol", "qar", "rin", "sal", "sel",
    "tor", "tul", "ul", "van", "vek", "vor", "wix", "xen", "yal", "zur",
]


@dataclass
class SynthConfig:
    seed: int = 42
    n_examples: int = 1000
    n_distractors: int = 8
    bridge_ratio: float = 0.8  # fraction of bridge examples (rest comparison)
    padding_sentences: int = 2
    vocab_size: int = 4000  # soft cap on distinct nonsense words

    def __post_init__(self):
        if self.n_distractors < 0:
            raise ValueError("n_distractors must be >= 0")
        if not 0.0 < self.bridge_ratio <= 1.0:
            raise ValueError("bridge_ratio must be in (0, 1]")


class _Vocab:
    """Seeded pool of pronounceable nonsense words; draws are unique within
    an example and reused across examples."""

    def __init__(self, rng: np.random.Generator, cap: int):
        self.rng = rng
        words: set[str] = set()
        while len(words) < cap:
            n = int(rng.integers(2, 4))
            words.add("".join(rng.choice(_SYLLABLES) for _ in range(n)))
        reserved = (
            set(COMPARISON_VALUES) | set(CATEGORIES) | set(ATTRIBUTES)
            | set(VERBS) | set(PAD_VERBS) | set(PAD_PREPS) | set(ADJECTIVES)
        )
        self.pool = sorted(words - reserved)
        self.used: set[str] = set()

    def reset_example(self) -> None:
        self.used = set()

    def word(self, capital: bool = True) -> str:
        for _ in range(1000):
            w = self.pool[int(self.rng.integers(0, len(self.pool)))]
            if w not in self.used:
                self.used.add(w)
                return w.capitalize() if capital else w
        raise RuntimeError("nonsense-word pool exhausted; raise vocab_size")

    def entity(self) -> str:
        return f"{self.word()} {self.word()}"


def _padding_sentence(vocab: _Vocab, rng: np.random.Generator) -> str:
    verb = str(rng.choice(PAD_VERBS))
    prep = str(rng.choice(PAD_PREPS))
    return f"{vocab.entity()} {verb} {prep} {vocab.entity()}."


def _doc_sentences(
    support: str, vocab: _Vocab, rng: np.random.Generator, padding: int
) -> tuple[list[str], int]:
    """Support sentence at a random position among padding sentences."""
    pos = int(rng.integers(0, padding + 1))
    sentences = []
    for i in range(padding + 1):
        if i == pos:
            sentences.append(support)
        else:
            sentences.append(_padding_sentence(vocab, rng))
    return sentences, pos


def _bridge_example(idx: int, stream: str, cfg: SynthConfig, vocab: _Vocab, rng: np.random.Generator) -> dict:
    vocab.reset_example()
    attr = str(rng.choice(ATTRIBUTES))
    cat = str(rng.choice(CATEGORIES))
    verb = str(rng.choice(VERBS))
    place = vocab.word()
    entity = vocab.entity()
    value = vocab.word()

    question = f"What is the {attr} of the {cat} that {verb} in {place}?"
    doc_a_title = f"{place} {cat}"
    doc_a_support = f"The {cat} that {verb} in {place} is {entity}."
    doc_b_title = entity
    doc_b_support = f"The {attr} of {entity} is {value}."

    docs = []
    sents_a, pos_a = _doc_sentences(doc_a_support, vocab, rng, cfg.padding_sentences)
    docs.append((doc_a_title, sents_a))
    sents_b, pos_b = _doc_sentences(doc_b_support, vocab, rng, cfg.padding_sentences)
    docs.append((doc_b_title, sents_b))
    facts = [[doc_a_title, pos_a], [doc_b_title, pos_b]]

    other_verbs = [v for v in VERBS if v != verb]
    other_attrs = [a for a in ATTRIBUTES if a != attr]
    for k in range(cfg.n_distractors):
        d_entity = vocab.entity()
        if k % 2 == 0:
            # Mentions the question's category word, hidden inside an
            # adjective chunk so exact mention matching cannot fire.
            adj = str(rng.choice(ADJECTIVES))
            d_verb = str(rng.choice(other_verbs))
            d_place = vocab.word()
            support = f"The {adj} {cat} that {d_verb} in {d_place} is {d_entity}."
            title = f"{d_place} {cat}"
        else:
            d_attr = str(rng.choice(other_attrs))
            d_value = vocab.word()
            support = f"The {d_attr} of {d_entity} is {d_value}."
            title = d_entity
        sents, _ = _doc_sentences(support, vocab, rng, cfg.padding_sentences)
        docs.append((title, sents))

    order = rng.permutation(len(docs))
    return {
        "_id": f"synth-{stream}-bridge-{idx:06d}",
        "question": question,
        "answer": value,
        "supporting_facts": facts,
        "context": [list(docs[i]) for i in order],
        "type": "bridge",
        "level": "synthetic",
    }


def _comparison_example(idx: int, stream: str, cfg: SynthConfig, vocab: _Vocab, rng: np.random.Generator) -> dict:
    vocab.reset_example()
    attr = str(rng.choice(ATTRIBUTES))
    e1, e2 = vocab.entity(), vocab.entity()
    same = bool(rng.integers(0, 2))
    v1 = str(rng.choice(COMPARISON_VALUES))
    if same:
        v2 = v1
    else:
        v2 = str(rng.choice([v for v in COMPARISON_VALUES if v != v1]))

    question = f"Do {e1} and {e2} have the same {attr}?"
    support_1 = f"The {attr} of {e1} is {v1.capitalize()}."
    support_2 = f"The {attr} of {e2} is {v2.capitalize()}."

    docs = []
    sents_1, pos_1 = _doc_sentences(support_1, vocab, rng, cfg.padding_sentences)
    docs.append((e1, sents_1))
    sents_2, pos_2 = _doc_sentences(support_2, vocab, rng, cfg.padding_sentences)
    docs.append((e2, sents_2))
    facts = [[e1, pos_1], [e2, pos_2]]

    other_attrs = [a for a in ATTRIBUTES if a != attr]
    for _ in range(cfg.n_distractors):
        d_attr = str(rng.choice(other_attrs))
        d_entity = vocab.entity()
        d_value = vocab.word()
        support = f"The {d_attr} of {d_entity} is {d_value}."
        sents, _ = _doc_sentences(support, vocab, rng, cfg.padding_sentences)
        docs.append((d_entity, sents))

    order = rng.permutation(len(docs))
    return {
        "_id": f"synth-{stream}-comparison-{idx:06d}",
        "question": question,
        "answer": "yes" if same else "no",
        "supporting_facts": facts,
        "context": [list(docs[i]) for i in order],
        "type": "comparison",
        "level": "synthetic",
    }


def generate(config: SynthConfig, stream: str = "train") -> list[dict]:
    """Generate raw dataset records; deterministic for a (seed, stream) pair."""
    rng = dc.seeded_rng(config.seed, f"synth:{stream}")
    vocab = _Vocab(rng, config.vocab_size)
    n_bridge = round(config.n_examples * config.bridge_ratio)
    records = []
    for i in range(config.n_examples):
        if i < n_bridge:
            records.append(_bridge_example(i, stream, config, vocab, rng))
        else:
            records.append(_comparison_example(i, stream, config, vocab, rng))
    return records


def generate_json(config: SynthConfig, stream: str = "train") -> str:
    return json.dumps(generate(config, stream), ensure_ascii=False, indent=1)
