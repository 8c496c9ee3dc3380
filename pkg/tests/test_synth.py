from __future__ import annotations

import json

import pytest

from sae.annotator import annotate, mentions_match
from sae.data_model import AnswerType, derive_gold_labels, locate_answer_span, parse_dataset
from sae.embedder import EmbedConfig, ToyEmbedder
from sae.graph_builder import build_graph
from sae.synth import SynthConfig, generate, generate_json


def test_generation_is_deterministic():
    cfg = SynthConfig(seed=42, n_examples=10)
    assert generate_json(cfg, "train") == generate_json(cfg, "train")
    assert generate_json(cfg, "train") != generate_json(cfg, "dev")
    assert generate_json(cfg, "train") != generate_json(SynthConfig(seed=43, n_examples=10), "train")


def test_every_example_validates_with_two_gold_docs():
    records = generate(SynthConfig(seed=1, n_examples=40), "train")
    examples = parse_dataset(json.dumps(records).encode())
    assert len(examples) == 40
    for ex in examples:
        labeled = derive_gold_labels(ex)
        assert len(labeled.gold_indices()) == 2
        assert len(labeled.documents) == 10
        assert not labeled.label_warnings


def test_bridge_comparison_ratio():
    records = generate(SynthConfig(seed=2, n_examples=50, bridge_ratio=0.8), "train")
    types = [r["type"] for r in records]
    assert types.count("bridge") == 40
    assert types.count("comparison") == 10


def test_gold_docs_share_mentions_distractors_do_not():
    records = generate(SynthConfig(seed=3, n_examples=30), "train")
    for ex in parse_dataset(json.dumps(records).encode()):
        labeled = derive_gold_labels(ex)
        q = annotate(ex.question)
        for i, doc in enumerate(labeled.documents):
            shares = any(mentions_match(q, annotate(s)) for s in doc.sentences)
            assert shares == (doc.gold_label == 1), (ex.id, doc.title)


def test_bridge_supports_carry_type3_edge():
    records = generate(SynthConfig(seed=4, n_examples=20, bridge_ratio=1.0), "train")
    embedder = ToyEmbedder(EmbedConfig(dim=16, seed=0))
    for ex in parse_dataset(json.dumps(records).encode()):
        ex = derive_gold_labels(ex)
        tm = embedder.embed_pair(ex.question, [(i, ex.documents[i]) for i in ex.gold_indices()])
        mentions = [
            annotate(ex.documents[s.doc_index].sentences[s.sentence_index])
            for s in tm.sentence_spans
        ]
        graph = build_graph(tm.sentence_spans, annotate(ex.question), mentions)
        support_nodes = [
            k
            for k, s in enumerate(tm.sentence_spans)
            if (s.title, s.sentence_index) in ex.supporting_facts
        ]
        assert len(support_nodes) == 2
        a, b = support_nodes
        assert b in graph.neighbors[3][a], ex.id


def test_span_answer_always_locatable():
    records = generate(SynthConfig(seed=5, n_examples=40), "train")
    embedder = ToyEmbedder(EmbedConfig(dim=16, seed=0))
    span_count = 0
    for ex in parse_dataset(json.dumps(records).encode()):
        ex = derive_gold_labels(ex)
        if ex.answer_type != AnswerType.SPAN:
            continue
        span_count += 1
        tm = embedder.embed_pair(ex.question, [(i, ex.documents[i]) for i in ex.gold_indices()])
        label = locate_answer_span(ex, tm)
        assert label is not None and label.answer_type == AnswerType.SPAN, ex.id
    assert span_count > 0


def test_comparison_answers_balanced_and_consistent():
    records = generate(SynthConfig(seed=6, n_examples=60, bridge_ratio=0.5), "train")
    answers = [r["answer"] for r in records if r["type"] == "comparison"]
    assert set(answers) <= {"yes", "no"}
    assert answers.count("yes") > 3 and answers.count("no") > 3
    for r in records:
        if r["type"] != "comparison":
            continue
        # the two supporting sentences state equal values iff the answer is yes
        facts = {tuple(f) for f in r["supporting_facts"]}
        values = []
        for title, sentences in r["context"]:
            for idx, s in enumerate(sentences):
                if (title, idx) in facts:
                    values.append(s.rstrip(".").split()[-1])
        assert len(values) == 2
        assert (values[0] == values[1]) == (r["answer"] == "yes")


def test_config_validation():
    with pytest.raises(ValueError):
        SynthConfig(bridge_ratio=0.0)
    with pytest.raises(ValueError):
        SynthConfig(n_distractors=-1)


def test_padding_controls_sentence_count():
    records = generate(SynthConfig(seed=7, n_examples=5, padding_sentences=3), "train")
    for r in records:
        for _, sentences in r["context"]:
            assert len(sentences) == 4
