"""Desk-scale multi-hop reading comprehension pipeline.

Select: rank documents with a pairwise learning-to-rank model over
multi-head self-attended document summaries.  Answer and explain: jointly
predict the answer span, the supporting sentences (node classification on
a sentence graph with a gated multi-relational GCN), and the answer type.
"""

__version__ = "0.1.0"
