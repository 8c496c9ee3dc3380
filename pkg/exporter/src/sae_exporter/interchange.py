"""Writer for the embedding interchange file consumed by the QA pipeline.

Wire format (little-endian):

    magic "SAEE" | u32 version = 1 | u32 header length | UTF-8 JSON header
    | contiguous float32 payload, one row-major (length x dim) block per
      slot, in header order

Header schema::

    {"dim": <int>, "slots": [{"example_id": str, "slot": str,
      "length": int, "tokens": [str, ...], "segments": [0|1, ...],
      "cls_index": int,
      "sentence_spans": [[start, end, doc_index, title, sentence_index], ...]},
      ...]}

Slot names: ``selector:<doc index>`` for (question, single document) pairs
and ``reasoner`` for the question plus concatenated gold documents.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"SAEE"
VERSION = 1


@dataclass
class Slot:
    example_id: str
    slot: str
    tokens: list[str]
    segments: list[int]
    sentence_spans: list[tuple[int, int, int, str, int]]
    values: np.ndarray  # (length, dim) float32
    cls_index: int = 0

    @property
    def length(self) -> int:
        return len(self.tokens)


def encode(slots: list[Slot], dim: int) -> bytes:
    header = {
        "dim": dim,
        "slots": [
            {
                "example_id": s.example_id,
                "slot": s.slot,
                "length": s.length,
                "tokens": s.tokens,
                "segments": list(map(int, s.segments)),
                "cls_index": s.cls_index,
                "sentence_spans": [list(span) for span in s.sentence_spans],
            }
            for s in slots
        ],
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    payload = b"".join(np.ascontiguousarray(s.values, dtype="<f4").tobytes() for s in slots)
    return MAGIC + struct.pack("<II", VERSION, len(header_bytes)) + header_bytes + payload


def write(path, slots: list[Slot], dim: int) -> None:
    for s in slots:
        if s.values.shape != (s.length, dim):
            raise ValueError(
                f"slot {s.slot!r} of {s.example_id!r}: values shape {s.values.shape} "
                f"does not match (length={s.length}, dim={dim})"
            )
    with open(path, "wb") as f:
        f.write(encode(slots, dim))
