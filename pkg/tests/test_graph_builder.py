from __future__ import annotations

import numpy as np
import pytest

from sae.annotator import MentionSet, annotate
from sae.embedder import SentenceSpan
from sae.graph_builder import SentenceGraph, build_graph


def spans_for(doc_ids):
    out = []
    pos = 0
    for i, d in enumerate(doc_ids):
        out.append(SentenceSpan(start=pos, end=pos + 3, doc_index=d, title=f"T{d}", sentence_index=i))
        pos += 3
    return out


def ms(*mentions):
    return MentionSet(mentions=frozenset(mentions))


def brute_force_edges(doc_ids, question, sentences, edge_types=(1, 2, 3)):
    """Independent O(n^2 * |mentions|) pair scan."""
    edges = {r: set() for r in edge_types}
    n = len(doc_ids)
    for i in range(n):
        for j in range(i + 1, n):
            if doc_ids[i] == doc_ids[j]:
                if 1 in edges:
                    edges[1].add((i, j))
                continue
            if 2 in edges:
                hit_i = any(m in question.mentions for m in sentences[i].mentions)
                hit_j = any(m in question.mentions for m in sentences[j].mentions)
                if hit_i and hit_j:
                    edges[2].add((i, j))
            if 3 in edges:
                if any(m in sentences[j].mentions for m in sentences[i].mentions):
                    edges[3].add((i, j))
    return edges


def test_same_document_only_gives_type1_edges():
    doc_ids = [0, 0, 1, 1]
    graph = build_graph(spans_for(doc_ids), ms(), [ms() for _ in doc_ids])
    assert graph.edges(1) == {(0, 1), (2, 3)}
    assert graph.edges(2) == set()
    assert graph.edges(3) == set()


def test_rule2_mentions_may_differ():
    doc_ids = [0, 1]
    question = ms("tower", "color")
    sentences = [ms("tower", "brenik stel"), ms("color", "vumlor")]
    graph = build_graph(spans_for(doc_ids), question, sentences)
    assert graph.edges(2) == {(0, 1)}
    assert graph.edges(3) == set()


def test_rule3_requires_different_documents():
    question = ms()
    shared = [ms("shirley temple"), ms("shirley temple")]
    cross = build_graph(spans_for([0, 1]), question, shared)
    assert cross.edges(3) == {(0, 1)}
    same_doc = build_graph(spans_for([0, 0]), question, shared)
    assert same_doc.edges(3) == set()
    assert same_doc.edges(1) == {(0, 1)}


def test_pair_can_carry_multiple_edge_types():
    question = annotate("What is the color of the tower that stands in Qopul?")
    sents = [
        annotate("The tower that stands in Qopul is Brenik Stel."),
        annotate("The color of Brenik Stel is Vumlor."),
    ]
    graph = build_graph(spans_for([0, 1]), question, sents)
    assert graph.edges(2) == {(0, 1)}
    assert graph.edges(3) == {(0, 1)}  # shared bridge entity


def test_graph_is_undirected_without_self_loops(small_train):
    # structural invariants over real synthetic graphs
    from sae.annotator import Annotator
    from sae.embedder import EmbedConfig, ToyProvider
    from sae.pipeline import graph_for

    provider = ToyProvider(EmbedConfig(dim=16, seed=0))
    ann = Annotator()
    for ex in small_train[:10]:
        tm = provider.reasoner_matrix(ex, ex.gold_indices())
        graph = graph_for(ex, tm, ann)
        for r, per_node in graph.neighbors.items():
            for i, ns in enumerate(per_node):
                assert i not in ns
                for j in ns:
                    assert i in per_node[j]


def _random_fixture(rng):
    n = int(rng.integers(1, 9))
    doc_ids = [int(rng.integers(0, 3)) for _ in range(n)]
    vocab = [f"m{k}" for k in range(6)]
    question = ms(*(v for v in vocab if rng.random() < 0.3))
    sentences = [ms(*(v for v in vocab if rng.random() < 0.35)) for _ in range(n)]
    return doc_ids, question, sentences


@pytest.mark.parametrize("keep", [(1, 2, 3), (2, 3), (1, 3), (1, 2)])
def test_matches_brute_force_oracle_on_random_fixtures(keep):
    rng = np.random.default_rng(hash(keep) % 2**32)
    for _ in range(100):
        doc_ids, question, sentences = _random_fixture(rng)
        graph = build_graph(spans_for(doc_ids), question, sentences, edge_types=keep)
        expected = brute_force_edges(doc_ids, question, sentences, edge_types=keep)
        for r in keep:
            assert graph.edges(r) == expected[r]
        for r in {1, 2, 3} - set(keep):
            assert r not in graph.neighbors


def test_removing_edge_type_equals_oracle_minus_that_type():
    rng = np.random.default_rng(12)
    for _ in range(50):
        doc_ids, question, sentences = _random_fixture(rng)
        full = brute_force_edges(doc_ids, question, sentences)
        for removed in (1, 2, 3):
            keep = tuple(r for r in (1, 2, 3) if r != removed)
            graph = build_graph(spans_for(doc_ids), question, sentences, edge_types=keep)
            assert {r: graph.edges(r) for r in keep} == {r: full[r] for r in keep}


def test_empty_sentence_list_rejected():
    with pytest.raises(ValueError):
        build_graph([], ms(), [])


def test_isolated_nodes_are_kept():
    doc_ids = [0, 1, 2]
    graph = build_graph(spans_for(doc_ids), ms(), [ms(), ms(), ms()])
    assert graph.n_nodes == 3
    assert all(not ns for per_node in graph.neighbors.values() for ns in per_node)
