"""Sentence graph over the concatenated gold-document context.

One node per sentence; three undirected edge types:
  1. both sentences come from the same document;
  2. cross-document, and each sentence shares a mention with the question
     (the two question mentions may differ);
  3. cross-document, and the two sentences share a mention with each other.
A pair may carry several edge types at once; there are no self-loops.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .annotator import MentionSet, mentions_match
from .embedder import SentenceSpan

EDGE_TYPES = (1, 2, 3)


@dataclass
class SentenceGraph:
    nodes: list[SentenceSpan]
    # edge type -> per-node neighbor index sets
    neighbors: dict[int, list[set[int]]]

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def edges(self, edge_type: int) -> set[tuple[int, int]]:
        pairs = set()
        for i, ns in enumerate(self.neighbors.get(edge_type, [])):
            for j in ns:
                pairs.add((min(i, j), max(i, j)))
        return pairs

    def to_json(self) -> str:
        return json.dumps(
            {
                "nodes": [
                    {
                        "index": i,
                        "doc_index": s.doc_index,
                        "title": s.title,
                        "sentence_index": s.sentence_index,
                        "token_span": [s.start, s.end],
                    }
                    for i, s in enumerate(self.nodes)
                ],
                "edges": {
                    str(r): sorted(list(e) for e in self.edges(r)) for r in sorted(self.neighbors)
                },
            },
            indent=2,
        )


def build_graph(
    nodes: list[SentenceSpan],
    question_mentions: MentionSet,
    sentence_mentions: list[MentionSet],
    edge_types: tuple[int, ...] = EDGE_TYPES,
) -> SentenceGraph:
    """Construct the typed sentence graph; deterministic and pure."""
    if len(nodes) != len(sentence_mentions):
        raise ValueError(
            f"{len(nodes)} nodes but {len(sentence_mentions)} sentence mention sets"
        )
    if not nodes:
        raise ValueError("graph needs at least one sentence")

    neighbors = {r: [set() for _ in nodes] for r in edge_types}
    in_question = [mentions_match(m, question_mentions) for m in sentence_mentions]

    def connect(r: int, i: int, j: int) -> None:
        neighbors[r][i].add(j)
        neighbors[r][j].add(i)

    n = len(nodes)
    for i in range(n):
        for j in range(i + 1, n):
            same_doc = nodes[i].doc_index == nodes[j].doc_index
            if same_doc:
                if 1 in neighbors:
                    connect(1, i, j)
                continue
            if 2 in neighbors and in_question[i] and in_question[j]:
                connect(2, i, j)
            if 3 in neighbors and mentions_match(sentence_mentions[i], sentence_mentions[j]):
                connect(3, i, j)
    return SentenceGraph(nodes=nodes, neighbors=neighbors)
