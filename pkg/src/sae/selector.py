"""Document selection: rank the documents of a question and keep the top k.

Per-document summary vectors pass through a multi-head self-attention layer
(inter-document interaction, no positional encoding), then a bilinear scorer
produces a probability for every ordered document pair, trained with binary
cross-entropy against pairwise labels l(i,j) = 1 iff S(i) > S(j), where
gold documents score 1 (2 if they hold the answer span).  At inference each
pair probability is thresholded at 0.5 and documents are ranked by the
count of pairs they win.  A per-document classifier trained with plain BCE
is kept as the ablation baseline.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import diffcore as dc
from .data_model import Example
from .diffcore import Adam, Parameter, Tensor

logger = logging.getLogger(__name__)


@dataclass
class SelectorConfig:
    dim: int = 64
    heads: int = 4
    loss: str = "pairwise"  # pairwise | bce
    scores: str = "012"  # 012 | 01  (collapse the answer-span score to 1)
    mhsa: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.dim % self.heads != 0:
            raise ValueError(f"heads ({self.heads}) must divide dim ({self.dim})")
        if self.loss not in ("pairwise", "bce"):
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.scores not in ("012", "01"):
            raise ValueError(f"unknown score scheme {self.scores!r}")

    @property
    def head_dim(self) -> int:
        return self.dim // self.heads


@dataclass
class RelevanceVector:
    counts: np.ndarray  # R_i: pairs won by thresholded probability
    selected: list[int]  # top-k document indices


def doc_scores(ex: Example, scheme: str = "012") -> list[int]:
    scores = [d.score for d in ex.documents]
    if scheme == "01":
        scores = [min(s, 1) for s in scores]
    return scores


def pair_labels(scores: list[int]) -> np.ndarray:
    """Label matrix over ordered pairs: l[i, j] = 1 iff S(i) > S(j)."""
    s = np.asarray(scores)
    return (s[:, None] > s[None, :]).astype(np.float64)


class SelectorModel:
    def __init__(self, config: SelectorConfig, dtype=np.float32):
        self.config = config
        d, h, dk = config.dim, config.heads, config.head_dim
        self.dtype = dtype
        self.params: list[Parameter] = []

        def make(shape, name, rng_name=None):
            rng = dc.seeded_rng(config.seed, f"selector:{rng_name or name}")
            p = Parameter(dc.glorot(rng, shape, dtype), name=f"selector.{name}")
            self.params.append(p)
            return p

        self.W_q = [make((d, dk), f"head{i}.W_q") for i in range(h)]
        self.W_k = [make((d, dk), f"head{i}.W_k") for i in range(h)]
        self.W_v = [make((d, dk), f"head{i}.W_v") for i in range(h)]
        self.W_o = make((d, d), "W_o")
        self.bilinear_W = make((d, d), "bilinear.W")
        self.bilinear_u = make((d, 1), "bilinear.u")
        self.bilinear_v = make((d, 1), "bilinear.v")
        self.bilinear_b = Parameter(np.zeros((1, 1), dtype=dtype), name="selector.bilinear.b")
        self.params.append(self.bilinear_b)
        self.baseline_w = make((d, 1), "baseline.w")
        self.baseline_b = Parameter(np.zeros((1, 1), dtype=dtype), name="selector.baseline.b")
        self.params.append(self.baseline_b)

    # -- forward pieces ----------------------------------------------------
    def mhsa(self, x: Tensor) -> Tensor:
        """Bare multi-head self-attention over n document vectors (n, d)."""
        heads = []
        scale = 1.0 / np.sqrt(self.config.head_dim)
        for W_q, W_k, W_v in zip(self.W_q, self.W_k, self.W_v):
            q = x @ W_q
            k = x @ W_k
            v = x @ W_v
            att = dc.softmax((q @ k.T) * scale, axis=1)
            heads.append(att @ v)
        return dc.concat(heads, axis=1) @ self.W_o

    def attention_weights(self, x: np.ndarray) -> list[np.ndarray]:
        """Per-head attention matrices for inspection (no gradients)."""
        out = []
        scale = 1.0 / np.sqrt(self.config.head_dim)
        for W_q, W_k in zip(self.W_q, self.W_k):
            q = x @ W_q.values
            k = x @ W_k.values
            z = (q @ k.T) * scale
            z -= z.max(axis=1, keepdims=True)
            e = np.exp(z)
            out.append(e / e.sum(axis=1, keepdims=True))
        return out

    def encode(self, summaries: np.ndarray) -> Tensor:
        """Summary vectors with inter-document interaction mixed in.

        The residual path keeps per-document identity alive: with frozen
        summary vectors and a freshly initialized attention layer, the bare
        attention output is nearly identical across documents and gradients
        stall at the label base rate."""
        x = dc.constant(summaries.astype(self.dtype))
        return x + self.mhsa(x) if self.config.mhsa else x

    def pair_logits(self, v: Tensor) -> Tensor:
        """Bilinear logits for all ordered pairs: z[i,j] scores (D_i, D_j)."""
        quad = (v @ self.bilinear_W) @ v.T
        left = v @ self.bilinear_u  # (n, 1), broadcasts over columns
        right = (v @ self.bilinear_v).T  # (1, n), broadcasts over rows
        return quad + left + right + self.bilinear_b

    def score_pair(self, vec_i: np.ndarray, vec_j: np.ndarray) -> float:
        """Probability that document i outranks document j (inference)."""
        v = dc.constant(np.stack([vec_i, vec_j]).astype(self.dtype))
        z = self.pair_logits(v)
        return float(dc.sigmoid(z[0:1, 1:2]).values[0, 0])

    def baseline_logits(self, v: Tensor) -> Tensor:
        return v @ self.baseline_w + self.baseline_b

    # -- losses --------------------------------------------------------------
    def pairwise_loss(self, summaries: np.ndarray, scores: list[int]) -> Tensor:
        n = len(scores)
        if n < 2:
            raise ValueError("pairwise loss needs at least 2 documents")
        labels = pair_labels(scores)
        mask = np.ones((n, n))
        np.fill_diagonal(mask, 0.0)
        z = self.pair_logits(self.encode(summaries))
        return dc.bce_with_logits(z, labels, mask=mask)

    def baseline_bce_loss(self, summaries: np.ndarray, gold: list[int]) -> Tensor:
        """Per-document BCE, summed over documents."""
        z = self.baseline_logits(self.encode(summaries))
        t = np.asarray(gold, dtype=self.dtype).reshape(-1, 1)
        terms = dc.sub(dc.softplus(z), dc.mul(z, dc.constant(t)))
        return dc.tsum(terms)

    def loss(self, summaries: np.ndarray, ex: Example) -> Tensor:
        if self.config.loss == "pairwise":
            return self.pairwise_loss(summaries, doc_scores(ex, self.config.scores))
        return self.baseline_bce_loss(summaries, [d.gold_label for d in ex.documents])

    # -- inference -------------------------------------------------------------
    def pair_probabilities(self, summaries: np.ndarray) -> np.ndarray:
        z = self.pair_logits(self.encode(summaries))
        return dc._sigmoid(z.values.astype(np.float64))

    def rank(self, summaries: np.ndarray, k: int = 2) -> RelevanceVector:
        if self.config.loss == "bce":
            z = self.baseline_logits(self.encode(summaries)).values.reshape(-1)
            order = sorted(range(len(z)), key=lambda i: (-z[i], i))
            counts = np.zeros(len(z), dtype=int)
            return RelevanceVector(counts=counts, selected=sorted(order[: min(k, len(z))]))
        return relevance_rank(self.pair_probabilities(summaries), k)


def pairwise_bce_reference(probs: np.ndarray, labels: np.ndarray) -> float:
    """Numpy reference of the pairwise loss from probabilities (mean over
    off-diagonal ordered pairs)."""
    n = probs.shape[0]
    if n < 2:
        raise ValueError("pairwise loss needs at least 2 documents")
    mask = ~np.eye(n, dtype=bool)
    terms = dc.bce_terms_from_probs(probs, labels)
    return float(terms[mask].mean())


def baseline_bce_reference(probs: np.ndarray, gold: np.ndarray) -> float:
    """Numpy reference of the baseline loss from probabilities (sum)."""
    return float(dc.bce_terms_from_probs(probs, gold).sum())


def relevance_rank(pair_probs: np.ndarray, k: int) -> RelevanceVector:
    """Count thresholded pair wins and keep the top-k documents.

    R_i = #{j != i : P(i, j) > 0.5}; ties break by the larger row sum of
    probabilities, then the lower document index.
    """
    n = pair_probs.shape[0]
    off = ~np.eye(n, dtype=bool)
    counts = ((pair_probs > 0.5) & off).sum(axis=1)
    row_sums = np.where(off, pair_probs, 0.0).sum(axis=1)
    order = sorted(range(n), key=lambda i: (-counts[i], -row_sums[i], i))
    return RelevanceVector(counts=counts, selected=sorted(order[: min(k, n)]))


# -- training -----------------------------------------------------------------
@dataclass
class TrainLog:
    epoch_losses: list[float] = field(default_factory=list)
    seconds: float = 0.0


def summaries_for(ex: Example, provider) -> np.ndarray:
    return np.stack(
        [provider.selector_matrix(ex, i).summary_vector() for i in range(len(ex.documents))]
    )


def train_selector(
    examples: list[Example],
    provider,
    config: SelectorConfig,
    epochs: int = 12,
    lr: float = 3e-3,
    batch_size: int = 8,
    seed: int = 0,
) -> tuple[SelectorModel, TrainLog]:
    """Train on all examples (gold labels must be derived)."""
    model = SelectorModel(config)
    opt = Adam(model.params, lr=lr)
    rng = dc.seeded_rng(seed, "selector:shuffle")
    cached = [(ex, summaries_for(ex, provider)) for ex in examples]

    log = TrainLog()
    start = time.time()
    for epoch in range(epochs):
        order = rng.permutation(len(cached))
        total = 0.0
        pending = 0
        for pos, idx in enumerate(order):
            ex, summaries = cached[idx]
            loss = model.loss(summaries, ex)
            total += loss.item()
            loss.backward(seed=1.0 / batch_size)
            pending += 1
            if pending == batch_size or pos == len(order) - 1:
                opt.step()
                pending = 0
        log.epoch_losses.append(total / len(cached))
        logger.info("selector epoch %d/%d loss %.4f", epoch + 1, epochs, log.epoch_losses[-1])
    log.seconds = time.time() - start
    return model, log
