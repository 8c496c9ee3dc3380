"""Export frozen contextual token embeddings for a QA dataset.

For every example the encoder sees ``[CLS] question [SEP] context [SEP]``;
selector slots embed each document separately, the reasoner slot embeds the
gold documents (derived from the supporting-fact titles) concatenated in
dataset order.  Wordpiece alignment is kept exact by tokenizing each
sentence on its own and recording half-open token ranges.  Sentences that
would overflow the length budget are dropped whole, never split.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass

import numpy as np
import torch

from .interchange import Slot, write

logger = logging.getLogger(__name__)

SELECTOR_SLOT = "selector:{}"
REASONER_SLOT = "reasoner"


@dataclass
class ExportManifest:
    model: str
    mode: str
    max_len: int
    dim: int
    slots: list[dict]
    checksum: str

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "mode": self.mode,
            "max_len": self.max_len,
            "dim": self.dim,
            "slots": self.slots,
            "checksum": self.checksum,
        }


class ModelLoadError(RuntimeError):
    pass


def load_encoder(model_name: str):
    try:
        from transformers import AutoModel, AutoTokenizer

        tokenizer = AutoTokenizer.from_pretrained(model_name)
        model = AutoModel.from_pretrained(model_name)
    except Exception as e:  # noqa: BLE001 - surfaced as a load failure
        raise ModelLoadError(f"cannot load encoder {model_name!r}: {e}") from e
    model.eval()
    return tokenizer, model


def _gold_indices(record: dict) -> list[int]:
    gold_titles = {title for title, _ in record.get("supporting_facts", [])}
    return [i for i, (title, _) in enumerate(record["context"]) if title in gold_titles]


@dataclass
class _Assembled:
    tokens: list[str]
    ids: list[int]
    segments: list[int]
    spans: list[tuple[int, int, int, str, int]]


def assemble(tokenizer, question: str, documents: list[tuple[int, str, list[str]]], max_len: int) -> _Assembled:
    """Tokenize and lay out one encoder input with sentence alignment."""
    cls_tok, sep_tok = tokenizer.cls_token, tokenizer.sep_token
    q_pieces = tokenizer.tokenize(question)
    tokens = [cls_tok] + q_pieces + [sep_tok]
    segments = [0] * len(tokens)
    spans: list[tuple[int, int, int, str, int]] = []

    budget = max_len - 1  # trailing [SEP]
    dropped = 0
    total = 0
    for doc_index, title, sentences in documents:
        for s_idx, sentence in enumerate(sentences):
            total += 1
            pieces = tokenizer.tokenize(sentence)
            if not pieces:
                continue
            if dropped or len(tokens) + len(pieces) > budget:
                dropped += 1
                continue
            start = len(tokens)
            tokens.extend(pieces)
            segments.extend([1] * len(pieces))
            spans.append((start, len(tokens), doc_index, title, s_idx))
    tokens.append(sep_tok)
    segments.append(0)
    if dropped:
        logger.info("truncated: dropped %d of %d sentences (max_len=%d)", dropped, total, max_len)
    return _Assembled(
        tokens=tokens,
        ids=tokenizer.convert_tokens_to_ids(tokens),
        segments=segments,
        spans=spans,
    )


@torch.no_grad()
def _hidden_states(model, ids: list[int]) -> np.ndarray:
    input_ids = torch.tensor([ids], dtype=torch.long)
    out = model(input_ids=input_ids, attention_mask=torch.ones_like(input_ids))
    return out.last_hidden_state[0].to(torch.float32).cpu().numpy()


def export(data_path, model_name: str, mode: str, max_len: int, out_path) -> ExportManifest:
    if mode not in ("selector", "reasoner"):
        raise ValueError(f"unknown mode {mode!r}")
    with open(data_path, encoding="utf-8") as f:
        records = json.load(f)

    tokenizer, model = load_encoder(model_name)
    dim = int(model.config.hidden_size)

    slots: list[Slot] = []
    for record in records:
        ex_id = str(record.get("_id", record.get("id")))
        question = record["question"]
        context = [(i, title, sentences) for i, (title, sentences) in enumerate(record["context"])]
        if mode == "selector":
            jobs = [(SELECTOR_SLOT.format(i), [context[i]]) for i, _, _ in context]
        else:
            gold = _gold_indices(record)
            jobs = [(REASONER_SLOT, [context[i] for i in gold])]
        for slot_name, documents in jobs:
            assembled = assemble(tokenizer, question, documents, max_len)
            values = _hidden_states(model, assembled.ids)
            slots.append(
                Slot(
                    example_id=ex_id,
                    slot=slot_name,
                    tokens=assembled.tokens,
                    segments=assembled.segments,
                    sentence_spans=assembled.spans,
                    values=values,
                )
            )

    write(out_path, slots, dim)
    with open(out_path, "rb") as f:
        checksum = hashlib.sha256(f.read()).hexdigest()
    manifest = ExportManifest(
        model=model_name,
        mode=mode,
        max_len=max_len,
        dim=dim,
        slots=[{"example_id": s.example_id, "slot": s.slot, "length": s.length} for s in slots],
        checksum=checksum,
    )
    manifest_path = str(out_path) + ".manifest.json"
    with open(manifest_path, "w", encoding="utf-8") as f:
        json.dump(manifest.to_dict(), f, indent=2)
    logger.info("wrote %d slots (dim %d) to %s", len(slots), dim, out_path)
    return manifest
