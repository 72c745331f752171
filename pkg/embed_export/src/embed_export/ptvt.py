"""PTVT writer: the order-aligned per-token vector table format.

Layout, all integers little-endian, no padding:
  bytes "PTVT" | u32 version=1 | u32 dim | u64 n_sentences
  | u64 FNV-1a hash of the tokenized text (sentences joined by '\\n',
    tokens by ' ', UTF-8)
  | per sentence: u32 n_tokens, then n_tokens*dim little-endian float32,
    row-major.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"PTVT"
VERSION = 1

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def fnv1a_64(data: bytes) -> int:
    value = _FNV_OFFSET
    for byte in data:
        value = ((value ^ byte) * _FNV_PRIME) & _MASK64
    return value


def corpus_hash(sentences) -> int:
    text = "\n".join(" ".join(tokens) for tokens in sentences)
    return fnv1a_64(text.encode("utf-8"))


def write_table(path, matrices, sentences) -> None:
    """Write one float32 matrix per sentence; row counts must match the
    sentence token counts."""
    matrices = [np.asarray(m, dtype="<f4") for m in matrices]
    if len(matrices) != len(sentences):
        raise ValueError("matrix count does not match sentence count")
    dim = matrices[0].shape[1] if matrices else 0
    with open(path, "wb") as handle:
        handle.write(MAGIC)
        handle.write(struct.pack("<II", VERSION, dim))
        handle.write(struct.pack("<QQ", len(matrices), corpus_hash(sentences)))
        for matrix, tokens in zip(matrices, sentences):
            if matrix.shape != (len(tokens), dim):
                raise ValueError(
                    f"matrix shape {matrix.shape} does not match "
                    f"{len(tokens)} tokens of dim {dim}")
            handle.write(struct.pack("<I", matrix.shape[0]))
            handle.write(matrix.tobytes(order="C"))
