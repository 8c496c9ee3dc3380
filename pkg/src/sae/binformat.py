"""Single-file binary container: magic, version, JSON header, f32 payload.

Layout (little-endian): 4-byte magic | u32 version | u32 header length |
UTF-8 JSON header | contiguous float32 payload, one row-major block per
entry, in header order.  Used by the embedding interchange file ("SAEE")
and model checkpoints ("SAEC").
"""

from __future__ import annotations

import json
import struct

import numpy as np

INTERCHANGE_MAGIC = b"SAEE"
CHECKPOINT_MAGIC = b"SAEC"
VERSION = 1


class FormatError(ValueError):
    """Wrong magic or unsupported version."""


class CorruptionError(ValueError):
    """Header/payload disagreement (truncation, trailing bytes, bad shapes)."""


def encode(magic: bytes, header: dict, blocks: list[np.ndarray]) -> bytes:
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    payload = b"".join(np.ascontiguousarray(b, dtype="<f4").tobytes() for b in blocks)
    return magic + struct.pack("<II", VERSION, len(header_bytes)) + header_bytes + payload


def write_file(path, magic: bytes, header: dict, blocks: list[np.ndarray]) -> None:
    with open(path, "wb") as f:
        f.write(encode(magic, header, blocks))


def decode(data: bytes, magic: bytes, block_shapes_of) -> tuple[dict, list[np.ndarray]]:
    """Parse container bytes.

    ``block_shapes_of(header)`` must return the expected block shapes; the
    payload length is validated against them exactly.
    """
    if len(data) < 12 or data[:4] != magic:
        raise FormatError(f"bad magic: expected {magic!r}, got {data[:4]!r}")
    version, header_len = struct.unpack("<II", data[4:12])
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    if len(data) < 12 + header_len:
        raise CorruptionError("truncated header")
    try:
        header = json.loads(data[12 : 12 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CorruptionError(f"unreadable header: {e}") from e

    shapes = block_shapes_of(header)
    expected = sum(int(np.prod(s)) for s in shapes) * 4
    payload = data[12 + header_len :]
    if len(payload) != expected:
        raise CorruptionError(
            f"payload size mismatch: header implies {expected} bytes, found {len(payload)}"
        )
    blocks = []
    offset = 0
    for shape in shapes:
        n = int(np.prod(shape)) * 4
        arr = np.frombuffer(payload[offset : offset + n], dtype="<f4").reshape(shape)
        blocks.append(arr.copy())
        offset += n
    return header, blocks


def read_file(path, magic: bytes, block_shapes_of) -> tuple[dict, list[np.ndarray]]:
    with open(path, "rb") as f:
        return decode(f.read(), magic, block_shapes_of)
