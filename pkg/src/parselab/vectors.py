"""Externally computed per-token vector tables (PTVT files) and the learned
linear projection applied to them.

PTVT layout, all integers little-endian, no padding:
  bytes "PTVT" | u32 version=1 | u32 dim | u64 n_sentences
  | u64 FNV-1a hash of the tokenized text (sentences joined by '\\n',
    tokens by ' ', UTF-8)
  | per sentence: u32 n_tokens, then n_tokens*dim little-endian float32,
    row-major.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .features import fnv1a_64

PTVT_MAGIC = b"PTVT"
PTVT_VERSION = 1


class VectorTableError(ValueError):
    pass


class VectorAlignmentError(VectorTableError):
    pass


def corpus_hash(sentences) -> int:
    """Hash of the tokenized corpus text used for alignment checks."""
    text = "\n".join(" ".join(tokens) for tokens in sentences)
    return fnv1a_64(text.encode("utf-8"))


@dataclass
class VectorTable:
    dim: int
    sentences: list  # one float32 array of shape (n_tokens, dim) per sentence
    alignment_hash: int

    def __len__(self):
        return len(self.sentences)


def write_vector_table(path, matrices, sentences) -> None:
    """Serialize per-sentence float32 matrices aligned with `sentences`
    (sequences of token strings)."""
    matrices = [np.asarray(m, dtype="<f4") for m in matrices]
    if len(matrices) != len(sentences):
        raise ValueError("matrix count does not match sentence count")
    dim = matrices[0].shape[1] if matrices else 0
    with open(path, "wb") as handle:
        handle.write(PTVT_MAGIC)
        handle.write(struct.pack("<II", PTVT_VERSION, dim))
        handle.write(struct.pack("<QQ", len(matrices), corpus_hash(sentences)))
        for matrix, tokens in zip(matrices, sentences):
            if matrix.shape != (len(tokens), dim):
                raise ValueError(
                    f"matrix shape {matrix.shape} does not match "
                    f"{len(tokens)} tokens of dim {dim}")
            handle.write(struct.pack("<I", matrix.shape[0]))
            handle.write(matrix.tobytes(order="C"))


def _read_exactly(handle, count, what):
    data = handle.read(count)
    if len(data) != count:
        raise VectorTableError(f"truncated file while reading {what}")
    return data


def load_vector_table(path, expected_sentences) -> VectorTable:
    """Load a PTVT file and verify it is aligned with the tokenized corpus
    `expected_sentences` (sequences of token strings)."""
    with open(path, "rb") as handle:
        magic = _read_exactly(handle, 4, "magic")
        if magic != PTVT_MAGIC:
            raise VectorTableError(f"bad magic {magic!r}, expected {PTVT_MAGIC!r}")
        version, dim = struct.unpack("<II", _read_exactly(handle, 8, "header"))
        if version != PTVT_VERSION:
            raise VectorTableError(f"unsupported version {version}")
        n_sentences, stored_hash = struct.unpack(
            "<QQ", _read_exactly(handle, 16, "header"))
        expected_hash = corpus_hash(expected_sentences)
        if stored_hash != expected_hash:
            raise VectorAlignmentError(
                f"alignment hash mismatch: file has {stored_hash:#018x}, "
                f"corpus hashes to {expected_hash:#018x}")
        if n_sentences != len(expected_sentences):
            raise VectorAlignmentError(
                f"file has {n_sentences} sentences, corpus has "
                f"{len(expected_sentences)}")
        matrices = []
        for index, tokens in enumerate(expected_sentences):
            (n_tokens,) = struct.unpack(
                "<I", _read_exactly(handle, 4, f"sentence {index} header"))
            if n_tokens != len(tokens):
                raise VectorAlignmentError(
                    f"sentence {index}: file has {n_tokens} rows, "
                    f"corpus has {len(tokens)} tokens")
            payload = _read_exactly(
                handle, 4 * n_tokens * dim, f"sentence {index} payload")
            matrix = np.frombuffer(payload, dtype="<f4").reshape(n_tokens, dim)
            matrices.append(matrix)
        if handle.read(1):
            raise VectorTableError("trailing bytes after last sentence")
    return VectorTable(dim, matrices, stored_hash)


@dataclass
class Projection:
    """Learned linear map from imported vectors to the model's input size."""

    matrix: np.ndarray  # (dim_in, dim_out)

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        if self.matrix.ndim != 2 or self.matrix.shape[1] < 1:
            raise ValueError("projection matrix must be 2-D with dim_out >= 1")
        if not np.all(np.isfinite(self.matrix)):
            raise ValueError("projection matrix must be finite")

    @property
    def dim_in(self) -> int:
        return self.matrix.shape[0]

    @property
    def dim_out(self) -> int:
        return self.matrix.shape[1]


DEFAULT_PROJECTION_DIM = 128


def initialize_projection(dim_in: int, dim_out: int = DEFAULT_PROJECTION_DIM,
                          seed: int = 0) -> Projection:
    rng = np.random.default_rng(seed)
    scale = 1.0 / np.sqrt(dim_in)
    return Projection(rng.normal(0.0, scale, size=(dim_in, dim_out)))


def project(vector, projection: Projection) -> np.ndarray:
    """Matrix-vector product mapping an imported vector to dim_out."""
    vector = np.asarray(vector, dtype=np.float64)
    if vector.shape != (projection.dim_in,):
        raise ValueError(
            f"vector of shape {vector.shape} does not match projection "
            f"input dim {projection.dim_in}")
    return vector @ projection.matrix
