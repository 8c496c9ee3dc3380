"""End-to-end orchestration: checkpoints, training entry points, prediction.

Prediction runs per example: select the top-k documents (or take the
annotated gold documents in oracle mode), concatenate them in original
dataset order, run the reasoner, decode the answer and the supporting-fact
set, and emit the benchmark-shaped prediction JSON.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

from . import binformat
from .annotator import Annotator
from .data_model import Example, derive_gold_labels
from .embedder import EmbedConfig, InterchangeProvider, MissingSlotError, ToyProvider
from .graph_builder import SentenceGraph, build_graph
from .reasoner import (
    ReasonerConfig,
    ReasonerModel,
    prepare_item,
    train_reasoner,
)
from .selector import SelectorConfig, SelectorModel, summaries_for, train_selector

logger = logging.getLogger(__name__)


# -- checkpoints ---------------------------------------------------------------
def _params_header(params) -> list[dict]:
    return [{"name": p.name, "shape": list(p.values.shape)} for p in params]


def save_selector(path, model: SelectorModel, embed: EmbedConfig) -> None:
    header = {
        "kind": "selector",
        "config": vars(model.config).copy(),
        "embed": vars(embed).copy(),
        "params": _params_header(model.params),
    }
    binformat.write_file(
        path, binformat.CHECKPOINT_MAGIC, header, [p.values for p in model.params]
    )


def save_reasoner(path, model: ReasonerModel, embed: EmbedConfig) -> None:
    cfg = vars(model.config).copy()
    cfg["edge_types"] = list(model.config.edge_types)
    header = {
        "kind": "reasoner",
        "config": cfg,
        "embed": vars(embed).copy(),
        "params": _params_header(model.params),
    }
    binformat.write_file(
        path, binformat.CHECKPOINT_MAGIC, header, [p.values for p in model.params]
    )


def _checkpoint_shapes(header: dict) -> list[tuple[int, ...]]:
    return [tuple(p["shape"]) for p in header["params"]]


def _load_params(model, header, blocks) -> None:
    by_name = {p.name: p for p in model.params}
    if set(by_name) != {p["name"] for p in header["params"]}:
        raise binformat.CorruptionError("checkpoint parameter names do not match the model")
    for info, values in zip(header["params"], blocks):
        p = by_name[info["name"]]
        if p.values.shape != values.shape:
            raise binformat.CorruptionError(
                f"checkpoint shape mismatch for {info['name']}: "
                f"{values.shape} vs model {p.values.shape}"
            )
        p.values = values.astype(p.values.dtype)


def load_selector(path) -> tuple[SelectorModel, EmbedConfig]:
    header, blocks = binformat.read_file(path, binformat.CHECKPOINT_MAGIC, _checkpoint_shapes)
    if header.get("kind") != "selector":
        raise binformat.FormatError(f"not a selector checkpoint: kind={header.get('kind')!r}")
    model = SelectorModel(SelectorConfig(**header["config"]))
    _load_params(model, header, blocks)
    return model, EmbedConfig(**header["embed"])


def load_reasoner(path) -> tuple[ReasonerModel, EmbedConfig]:
    header, blocks = binformat.read_file(path, binformat.CHECKPOINT_MAGIC, _checkpoint_shapes)
    if header.get("kind") != "reasoner":
        raise binformat.FormatError(f"not a reasoner checkpoint: kind={header.get('kind')!r}")
    cfg = dict(header["config"])
    cfg["edge_types"] = tuple(cfg["edge_types"])
    model = ReasonerModel(ReasonerConfig(**cfg))
    _load_params(model, header, blocks)
    return model, EmbedConfig(**header["embed"])


# -- shared assembly -----------------------------------------------------------
def make_provider(mode: str, embed: EmbedConfig, interchange_path=None):
    if mode == "toy":
        return ToyProvider(embed)
    if mode == "interchange":
        if interchange_path is None:
            raise ValueError("interchange mode needs --interchange <file>")
        return InterchangeProvider(interchange_path)
    raise ValueError(f"unknown embed mode {mode!r}")


def graph_for(
    ex: Example,
    tm,
    annotator: Annotator,
    edge_types: tuple[int, ...] = (1, 2, 3),
) -> SentenceGraph:
    question = annotator.question_mentions(ex.id, ex.question)
    sentence_mentions = []
    for span in tm.sentence_spans:
        sentence = ex.documents[span.doc_index].sentences[span.sentence_index]
        sentence_mentions.append(
            annotator.sentence_mentions(ex.id, span.title, span.sentence_index, sentence)
        )
    return build_graph(tm.sentence_spans, question, sentence_mentions, edge_types)


def prepare_reasoner_items(
    examples: list[Example],
    provider,
    annotator: Annotator,
    edge_types: tuple[int, ...],
):
    items = []
    for ex in examples:
        tm = provider.reasoner_matrix(ex, ex.gold_indices())
        graph = graph_for(ex, tm, annotator, edge_types)
        items.append(prepare_item(ex, tm, graph))
    return items


def fit_selector(
    examples: list[Example],
    provider,
    config: SelectorConfig,
    epochs: int,
    lr: float,
    batch_size: int,
    seed: int,
):
    labeled = [derive_gold_labels(ex) for ex in examples]
    return train_selector(labeled, provider, config, epochs, lr, batch_size, seed)


def fit_reasoner(
    examples: list[Example],
    provider,
    annotator: Annotator,
    config: ReasonerConfig,
    epochs: int,
    lr: float,
    batch_size: int,
    seed: int,
):
    labeled = [derive_gold_labels(ex) for ex in examples]
    items = prepare_reasoner_items(labeled, provider, annotator, config.edge_types)
    return train_reasoner(items, config, epochs, lr, batch_size, seed)


# -- prediction -----------------------------------------------------------------
@dataclass
class PredictResult:
    predictions: dict
    selections: dict[str, list[int]]
    errors: dict[str, str]


def select_documents(
    ex: Example, selector: SelectorModel, provider, k: int
) -> list[int]:
    summaries = summaries_for(ex, provider)
    return selector.rank(summaries, k=k).selected


def predict(
    examples: list[Example],
    reasoner: ReasonerModel,
    provider,
    annotator: Annotator,
    selector: SelectorModel | None = None,
    k: int = 2,
    oracle_docs: bool = False,
) -> PredictResult:
    """Run the full pipeline; failed examples are recorded and skipped."""
    answers: dict[str, str] = {}
    sp: dict[str, list[list]] = {}
    selections: dict[str, list[int]] = {}
    errors: dict[str, str] = {}
    if not oracle_docs and selector is None:
        raise ValueError("prediction needs a selector checkpoint or --oracle-docs")

    for ex in examples:
        ex = derive_gold_labels(ex)
        try:
            if oracle_docs:
                chosen = ex.gold_indices()
            else:
                chosen = select_documents(ex, selector, provider, k)
            chosen = sorted(chosen)  # original dataset order
            tm = provider.reasoner_matrix(ex, chosen)
            graph = graph_for(ex, tm, annotator, reasoner.config.edge_types)
            pred = reasoner.predict(tm, graph)
        except MissingSlotError as e:
            errors[ex.id] = str(e)
            logger.error("example %s skipped: %s", ex.id, e)
            continue
        selections[ex.id] = chosen
        answers[ex.id] = pred.answer
        sp[ex.id] = [[t, i] for t, i in pred.supporting_facts]

    return PredictResult(
        predictions={"answer": answers, "sp": sp},
        selections=selections,
        errors=errors,
    )


def write_predictions(path, result: PredictResult) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(result.predictions, f, ensure_ascii=False, indent=1)
