from __future__ import annotations

import json

import pytest

from sae.data_model import (
    AnswerLabel,
    AnswerType,
    ParseError,
    ValidationError,
    derive_gold_labels,
    dump_dataset,
    example_to_record,
    locate_answer_span,
    parse_dataset,
)
from sae.embedder import EmbedConfig, ToyEmbedder

from conftest import FILM_EXAMPLE


def make_example(**overrides):
    record = dict(FILM_EXAMPLE)
    record.update(overrides)
    return record


def test_parse_film_example(film_example):
    assert film_example.id == "dev-film-0001"
    assert film_example.answer_text == "Chief of Protocol"
    assert film_example.supporting_facts == frozenset(
        {("Kiss and Tell (1945 film)", 0), ("Shirley Temple", 0), ("Shirley Temple", 1)}
    )
    assert [d.title for d in film_example.documents] == [
        "Kiss and Tell (1945 film)",
        "Shirley Temple",
    ]
    assert film_example.reasoning_type == "bridge"


def test_parse_preserves_document_order():
    record = make_example(context=list(reversed(FILM_EXAMPLE["context"])))
    ex = parse_dataset(json.dumps([record]).encode())[0]
    assert ex.documents[0].title == "Shirley Temple"


def test_malformed_json_reports_byte_offset():
    with pytest.raises(ParseError) as err:
        parse_dataset(b'[{"_id": "x", ')
    assert "byte offset" in str(err.value)


def test_empty_document_list_rejected():
    with pytest.raises(ValidationError):
        parse_dataset(json.dumps([make_example(context=[])]).encode())


def test_unknown_supporting_fact_title_names_example():
    record = make_example(supporting_facts=[["Unknown Title", 0]])
    with pytest.raises(ValidationError) as err:
        parse_dataset(json.dumps([record]).encode())
    assert "dev-film-0001" in str(err.value)
    assert "Unknown Title" in str(err.value)


def test_out_of_range_sentence_index_rejected():
    record = make_example(supporting_facts=[["Shirley Temple", 9]])
    with pytest.raises(ValidationError):
        parse_dataset(json.dumps([record]).encode())


def test_duplicate_ids_rejected():
    with pytest.raises(ValidationError):
        parse_dataset(json.dumps([FILM_EXAMPLE, FILM_EXAMPLE]).encode())


def test_round_trip_identity(film_example):
    dumped = dump_dataset([film_example])
    again = parse_dataset(dumped.encode())[0]
    assert again == film_example
    # serialization with derived labels keeps the original fields intact
    labeled = derive_gold_labels(film_example)
    record = example_to_record(labeled, derived=True)
    assert record["derived"]["gold_labels"] == [1, 1]
    stripped = {k: v for k, v in record.items() if k != "derived"}
    assert parse_dataset(json.dumps([stripped]).encode())[0] == film_example


def test_derive_gold_labels_film(film_example):
    ex = derive_gold_labels(film_example)
    film, temple = ex.documents
    assert (film.gold_label, temple.gold_label) == (1, 1)
    # the answer span sits in the actress document
    assert temple.score == 2
    assert film.score == 1
    assert not ex.label_warnings


def test_derive_is_idempotent(film_example):
    once = derive_gold_labels(film_example)
    assert derive_gold_labels(once) == once


def test_gold_labels_match_supporting_facts_exactly(small_train):
    for ex in small_train:
        gold_titles = {d.title for d in ex.documents if d.gold_label}
        assert gold_titles == ex.supporting_titles()
        assert len(gold_titles) == 2


def test_yes_no_answer_scores_all_gold_one():
    record = make_example(answer="yes")
    ex = derive_gold_labels(parse_dataset(json.dumps([record]).encode())[0])
    assert ex.answer_type == AnswerType.YES
    assert sorted(d.score for d in ex.documents) == [1, 1]


def test_answer_in_two_gold_docs_prefers_supporting_sentence():
    record = {
        "_id": "tie-0001",
        "question": "Where is the marker?",
        "answer": "Porvex",
        "supporting_facts": [["A", 1], ["B", 0]],
        "context": [
            # "Porvex" occurs in a non-supporting sentence of A (index 0)
            ["A", ["The marker near Porvex fell.", "The marker stands tall."]],
            # ... and in the supporting sentence of B
            ["B", ["The marker is in Porvex."]],
            ["C", ["Nothing here."]],
        ],
        "type": "bridge",
    }
    ex = derive_gold_labels(parse_dataset(json.dumps([record]).encode())[0])
    assert [d.score for d in ex.documents] == [1, 2, 0]


def test_answer_tie_breaks_by_lowest_index():
    record = {
        "_id": "tie-0002",
        "question": "Where?",
        "answer": "Porvex",
        "supporting_facts": [["A", 0], ["B", 0]],
        "context": [
            ["A", ["It is in Porvex."]],
            ["B", ["It is in Porvex."]],
        ],
        "type": "comparison",
    }
    ex = derive_gold_labels(parse_dataset(json.dumps([record]).encode())[0])
    assert [d.score for d in ex.documents] == [2, 1]


def test_unlocatable_span_answer_warns_and_falls_back():
    record = make_example(answer="completely absent phrase xyzzy")
    ex = derive_gold_labels(parse_dataset(json.dumps([record]).encode())[0])
    assert ex.label_warnings
    assert sorted(d.score for d in ex.documents) == [1, 1]


# -- locate_answer_span -------------------------------------------------------
def _embed(ex, doc_indices=None):
    embedder = ToyEmbedder(EmbedConfig(dim=16, seed=0))
    indices = doc_indices if doc_indices is not None else list(range(len(ex.documents)))
    return embedder.embed_pair(ex.question, [(i, ex.documents[i]) for i in indices])


def test_locate_film_answer(film_example_labeled):
    ex = film_example_labeled
    tm = _embed(ex)
    label = locate_answer_span(ex, tm)
    assert label is not None and label.answer_type == AnswerType.SPAN
    decoded = " ".join(tm.tokens[label.span_start : label.span_end + 1])
    assert decoded == "Chief of Protocol"
    # the chosen occurrence lies in the supporting sentence of the actress doc
    assert label.source_doc == 1


def test_locate_yes_answer_has_null_span():
    record = make_example(answer="Yes")
    ex = derive_gold_labels(parse_dataset(json.dumps([record]).encode())[0])
    label = locate_answer_span(ex, _embed(ex))
    assert label == AnswerLabel(answer_type=AnswerType.YES)


def test_locate_prefers_supporting_sentence_occurrence():
    record = {
        "_id": "occ-0001",
        "question": "Where is the relic?",
        "answer": "Porvex Hall",
        "supporting_facts": [["A", 1], ["B", 1]],
        "context": [
            # answer occurs early in a NON-supporting sentence of A ...
            ["A", ["The relic was first shown early at Porvex Hall doors.", "The relic is very old."]],
            # ... and again inside the supporting sentence of B
            ["B", ["A plaque mentions it in passing.", "The relic rests in Porvex Hall."]],
        ],
        "type": "bridge",
    }
    ex = derive_gold_labels(parse_dataset(json.dumps([record]).encode())[0])
    tm = _embed(ex)
    label = locate_answer_span(ex, tm)
    # brute-force: earliest occurrence inside a supporting sentence
    answer = ["porvex", "hall"]
    from sae.text import normalize_token

    norm = [normalize_token(t) for t in tm.tokens]
    expected = None
    for span in tm.sentence_spans:
        if (span.title, span.sentence_index) not in ex.supporting_facts:
            continue
        for s in range(span.start, span.end - 1):
            if norm[s : s + 2] == answer:
                expected = (s, s + 1)
                break
        if expected:
            break
    assert (label.span_start, label.span_end) == expected
    # occurrence at a lower position exists outside supporting sentences
    flat_first = norm.index("porvex")
    assert flat_first < label.span_start


def test_locate_unfindable_span_returns_none(film_example_labeled):
    import dataclasses

    ex = dataclasses.replace(film_example_labeled, answer_text="unfindable phrase zz")
    assert locate_answer_span(ex, _embed(ex)) is None


def test_locate_decodes_to_normalized_answer(small_train):
    from sae.text import normalize_phrase

    for ex in small_train:
        if ex.answer_type != AnswerType.SPAN:
            continue
        tm = _embed(ex, ex.gold_indices())
        label = locate_answer_span(ex, tm)
        assert label is not None, ex.id
        decoded = " ".join(tm.tokens[label.span_start : label.span_end + 1])
        assert normalize_phrase(decoded) == normalize_phrase(ex.answer_text)


def test_answer_label_invariants():
    with pytest.raises(ValueError):
        AnswerLabel(answer_type=AnswerType.SPAN)  # span needs indices
    with pytest.raises(ValueError):
        AnswerLabel(answer_type=AnswerType.SPAN, span_start=5, span_end=3)
    with pytest.raises(ValueError):
        AnswerLabel(answer_type=AnswerType.YES, span_start=1, span_end=2)
