"""Joint answer and explanation model over the selected-document context.

Heads, in forward order: a 2-layer MLP span head emitting start/end logits
for every token; mixed attentive pooling that turns each sentence's token
block into one embedding using softmax(f_att + start logits + end logits);
a gated multi-relational GCN message-passing over the sentence graph; a
support-sentence classifier on the final node states; and a 3-way
answer-type classifier over a support-weighted graph summary.  The training
loss is gamma * span + support BCE + type CE.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import diffcore as dc
from .data_model import AnswerLabel, AnswerType, Example, locate_answer_span
from .diffcore import Adam, MLP2, Parameter, Tensor
from .embedder import TokenMatrix
from .graph_builder import SentenceGraph

logger = logging.getLogger(__name__)


@dataclass
class ReasonerConfig:
    dim: int = 64  # token embedding dim of the encoder
    graph_dim: int | None = None  # node feature dim; defaults to dim
    hops: int = 2
    gamma: float = 1.0
    act: str = "tanh"
    attention: str = "mixed"  # mixed | self | mean
    use_gnn: bool = True
    edge_types: tuple[int, ...] = (1, 2, 3)
    support_threshold: float = 0.5
    max_span_len: int = 30
    detach_span_attention: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.attention not in ("mixed", "self", "mean"):
            raise ValueError(f"unknown attention mode {self.attention!r}")
        if self.act not in ("tanh", "relu"):
            raise ValueError(f"unknown activation {self.act!r}")
        self.edge_types = tuple(self.edge_types)

    @property
    def d_g(self) -> int:
        return self.graph_dim if self.graph_dim is not None else self.dim


@dataclass
class ReasonerOutputs:
    span_logits: Tensor  # (L, 2): column 0 start, column 1 end
    sentence_attention: list[np.ndarray]  # per-sentence alpha weights
    support_logits: Tensor  # (n, 1)
    support_probs: np.ndarray  # (n,)
    type_logits: Tensor  # (3,)
    gates: list[np.ndarray]  # per-hop gate values


@dataclass
class LossBreakdown:
    span: float
    support: float
    answer_type: float
    gamma: float
    total: float
    loss: Tensor  # differentiable total


@dataclass
class Prediction:
    answer: str
    span: tuple[int, int] | None
    answer_type: AnswerType
    supporting_facts: list[tuple[str, int]]


class ReasonerModel:
    def __init__(self, config: ReasonerConfig, dtype=np.float32):
        self.config = config
        d, dg = config.dim, config.d_g
        self.dtype = dtype

        def rng(name):
            return dc.seeded_rng(config.seed, f"reasoner:{name}")

        self.f_span = MLP2(d, d, 2, "reasoner.f_span", rng("f_span"), act=config.act, dtype=dtype)
        self.f_att = MLP2(d, d, 1, "reasoner.f_att", rng("f_att"), act=config.act, dtype=dtype)
        self.proj = dc.Linear(d, dg, "reasoner.proj", rng("proj"), dtype=dtype)
        self.f_s = dc.Linear(dg, dg, "reasoner.f_s", rng("f_s"), dtype=dtype)
        self.f_r = {
            r: dc.Linear(dg, dg, f"reasoner.f_r{r}", rng(f"f_r{r}"), dtype=dtype)
            for r in config.edge_types
        }
        self.f_g = dc.Linear(2 * dg, dg, "reasoner.f_g", rng("f_g"), dtype=dtype)
        self.f_sp = MLP2(dg, dg, 1, "reasoner.f_sp", rng("f_sp"), act=config.act, dtype=dtype)
        self.f_ans = MLP2(dg, dg, 3, "reasoner.f_ans", rng("f_ans"), act=config.act, dtype=dtype)

        self.params: list[Parameter] = (
            self.f_span.parameters()
            + self.f_att.parameters()
            + self.proj.parameters()
            + self.f_s.parameters()
            + sum((f.parameters() for f in self.f_r.values()), [])
            + self.f_g.parameters()
            + self.f_sp.parameters()
            + self.f_ans.parameters()
        )
        self.span_params = set(p.name for p in self.f_span.parameters())
        self._act = dc.tanh if config.act == "tanh" else dc.relu

    # -- forward -----------------------------------------------------------
    def pool_sentences(self, h: Tensor, span_logits: Tensor, graph: SentenceGraph):
        """Mixed attentive pooling of each sentence's token block."""
        cfg = self.config
        rows = []
        alphas = []
        for span in graph.nodes:
            block = h[span.start : span.end]  # (Lj, d)
            if cfg.attention == "mean":
                alphas.append(np.full(span.end - span.start, 1.0 / (span.end - span.start)))
                rows.append(dc.tmean(block, axis=0, keepdims=True))
                continue
            att = self.f_att(block)  # (Lj, 1)
            if cfg.attention == "mixed":
                sl = span_logits[span.start : span.end]
                if cfg.detach_span_attention:
                    sl = dc.constant(sl.values)
                att = att + sl[:, 0:1] + sl[:, 1:2]
            alpha = dc.softmax(att, axis=0)
            alphas.append(alpha.values.reshape(-1).copy())
            rows.append(alpha.T @ block)  # (1, d)
        return dc.concat(rows, axis=0), alphas

    def _adjacency(self, graph: SentenceGraph) -> dict[int, np.ndarray]:
        """Row-normalized adjacency per edge type; empty neighborhoods give
        zero rows, which drops the relation term entirely."""
        n = graph.n_nodes
        out = {}
        for r in self.config.edge_types:
            a = np.zeros((n, n), dtype=self.dtype)
            for i, ns in enumerate(graph.neighbors.get(r, [])):
                if ns:
                    w = 1.0 / len(ns)
                    for j in ns:
                        a[i, j] = w
            out[r] = a
        return out

    def gcn_hop(self, h: Tensor, adjacency: dict[int, np.ndarray]) -> tuple[Tensor, Tensor]:
        u = self.f_s(h)
        for r, a in adjacency.items():
            u = u + dc.constant(a) @ self.f_r[r](h)
        # Affine squeeze keeps the gate strictly inside (0, 1) even when the
        # trained sigmoid saturates to 1.0 in single precision.
        g = dc.sigmoid(self.f_g(dc.concat([u, h], axis=1))) * (1.0 - 2e-6) + 1e-6
        h_next = self._act(u) * g + h * (1.0 - g)
        return h_next, g

    def forward(self, tm: TokenMatrix, graph: SentenceGraph) -> ReasonerOutputs:
        h = dc.constant(tm.values.astype(self.dtype))
        span_logits = self.f_span(h)  # (L, 2)
        sentences, alphas = self.pool_sentences(h, span_logits, graph)
        nodes = self.proj(sentences)  # (n, d_g)

        gates = []
        if self.config.use_gnn:
            adjacency = self._adjacency(graph)
            for _ in range(self.config.hops):
                nodes, g = self.gcn_hop(nodes, adjacency)
                gates.append(g.values.copy())

        support_logits = self.f_sp(nodes)  # (n, 1)
        support_probs = dc._sigmoid(support_logits.values.astype(np.float64)).reshape(-1)
        # Graph attention for answer-type: softmax over the per-node
        # support probabilities, then a weighted node sum.
        a = dc.softmax(dc.sigmoid(support_logits), axis=0)  # (n, 1)
        pooled = a.T @ nodes  # (1, d_g)
        type_logits = self.f_ans(pooled)[0]  # (3,)
        return ReasonerOutputs(
            span_logits=span_logits,
            sentence_attention=alphas,
            support_logits=support_logits,
            support_probs=support_probs,
            type_logits=type_logits,
            gates=gates,
        )

    # -- losses ---------------------------------------------------------------
    def span_loss(self, span_logits: Tensor, label: AnswerLabel | None) -> Tensor | None:
        """Half the summed start/end cross-entropies; None when masked."""
        if label is None or label.answer_type != AnswerType.SPAN:
            return None
        L = span_logits.shape[0]
        if not (0 <= label.span_start < L and 0 <= label.span_end < L):
            raise ValueError(
                f"span label ({label.span_start}, {label.span_end}) outside [0, {L})"
            )
        start_ce = dc.cross_entropy_with_logits(span_logits[:, 0], label.span_start)
        end_ce = dc.cross_entropy_with_logits(span_logits[:, 1], label.span_end)
        return (start_ce + end_ce) * 0.5

    def joint_loss(
        self,
        outputs: ReasonerOutputs,
        span_label: AnswerLabel | None,
        support_labels: np.ndarray,
        answer_type: AnswerType,
    ) -> LossBreakdown:
        cfg = self.config
        span = self.span_loss(outputs.span_logits, span_label)
        sp = dc.bce_with_logits(
            outputs.support_logits, support_labels.reshape(-1, 1).astype(self.dtype)
        )
        ans = dc.cross_entropy_with_logits(outputs.type_logits, int(answer_type))
        total = sp + ans
        if span is not None and cfg.gamma != 0.0:
            total = total + span * cfg.gamma
        return LossBreakdown(
            span=0.0 if span is None else span.item(),
            support=sp.item(),
            answer_type=ans.item(),
            gamma=cfg.gamma,
            total=total.item() if span is None else cfg.gamma * span.item() + sp.item() + ans.item(),
            loss=total,
        )

    # -- decoding ---------------------------------------------------------------
    def decode_answer(self, outputs: ReasonerOutputs, tm: TokenMatrix) -> tuple[str, tuple[int, int] | None, AnswerType]:
        atype = AnswerType(int(np.argmax(outputs.type_logits.values)))
        if atype == AnswerType.YES:
            return "yes", None, atype
        if atype == AnswerType.NO:
            return "no", None, atype
        span = decode_span(
            outputs.span_logits.values[:, 0],
            outputs.span_logits.values[:, 1],
            tm.segments,
            self.config.max_span_len,
        )
        if span is None:
            logger.warning("no valid span pair; returning empty answer")
            return "", None, atype
        s, e = span
        return " ".join(tm.tokens[s : e + 1]), span, atype

    def predict(self, tm: TokenMatrix, graph: SentenceGraph) -> Prediction:
        outputs = self.forward(tm, graph)
        answer, span, atype = self.decode_answer(outputs, tm)
        facts = [
            (node.title, node.sentence_index)
            for node, p in zip(graph.nodes, outputs.support_probs)
            if p > self.config.support_threshold
        ]
        return Prediction(answer=answer, span=span, answer_type=atype, supporting_facts=facts)


def decode_span(
    start_logits: np.ndarray,
    end_logits: np.ndarray,
    segments: np.ndarray,
    max_span_len: int = 30,
) -> tuple[int, int] | None:
    """Best (start, end) with start <= end, both on context tokens, and
    end - start < max_span_len; None when no valid pair exists."""
    valid = segments == 1
    best = None
    best_score = -np.inf
    for s in np.nonzero(valid)[0]:
        hi = min(len(end_logits), s + max_span_len)
        for e in range(s, hi):
            if not valid[e]:
                continue
            score = start_logits[s] + end_logits[e]
            if score > best_score:
                best_score = score
                best = (int(s), int(e))
    return best


# -- training -------------------------------------------------------------------
@dataclass
class ReasonerBatchItem:
    example: Example
    tm: TokenMatrix
    graph: SentenceGraph
    span_label: AnswerLabel | None
    support_labels: np.ndarray


@dataclass
class TrainLog:
    epoch_losses: list[float] = field(default_factory=list)
    seconds: float = 0.0


def support_label_vector(ex: Example, graph: SentenceGraph) -> np.ndarray:
    return np.asarray(
        [1.0 if (n.title, n.sentence_index) in ex.supporting_facts else 0.0 for n in graph.nodes]
    )


def prepare_item(ex: Example, tm: TokenMatrix, graph: SentenceGraph) -> ReasonerBatchItem:
    label = locate_answer_span(ex, tm)
    if label is None and ex.answer_type == AnswerType.SPAN:
        logger.warning("example %s: span answer not found after tokenization; span loss masked", ex.id)
    return ReasonerBatchItem(
        example=ex,
        tm=tm,
        graph=graph,
        span_label=label,
        support_labels=support_label_vector(ex, graph),
    )


def train_reasoner(
    items: list[ReasonerBatchItem],
    config: ReasonerConfig,
    epochs: int = 12,
    lr: float = 3e-3,
    batch_size: int = 8,
    seed: int = 0,
) -> tuple[ReasonerModel, TrainLog]:
    model = ReasonerModel(config)
    opt = Adam(model.params, lr=lr)
    rng = dc.seeded_rng(seed, "reasoner:shuffle")

    log = TrainLog()
    start = time.time()
    for epoch in range(epochs):
        order = rng.permutation(len(items))
        total = 0.0
        pending = 0
        for pos, idx in enumerate(order):
            item = items[idx]
            outputs = model.forward(item.tm, item.graph)
            breakdown = model.joint_loss(
                outputs, item.span_label, item.support_labels, item.example.answer_type
            )
            total += breakdown.total
            breakdown.loss.backward(seed=1.0 / batch_size)
            pending += 1
            if pending == batch_size or pos == len(order) - 1:
                opt.step()
                pending = 0
        log.epoch_losses.append(total / len(items))
        logger.info("reasoner epoch %d/%d loss %.4f", epoch + 1, epochs, log.epoch_losses[-1])
    log.seconds = time.time() - start
    return model, log


def attention_dump(model: ReasonerModel, tm: TokenMatrix, graph: SentenceGraph, example_id: str) -> str:
    """Per-sentence pooling attention, for heatmap-style inspection."""
    outputs = model.forward(tm, graph)
    return json.dumps(
        {
            "example_id": example_id,
            "sentences": [
                {
                    "title": node.title,
                    "sentence_index": node.sentence_index,
                    "tokens": tm.tokens[node.start : node.end],
                    "attention": [float(a) for a in alpha],
                    "support_probability": float(p),
                }
                for node, alpha, p in zip(
                    graph.nodes, outputs.sentence_attention, outputs.support_probs
                )
            ],
        },
        indent=2,
    )
