import struct

import numpy as np
import pytest

from parselab.vectors import (Projection, VectorAlignmentError,
                              VectorTableError, corpus_hash,
                              initialize_projection, load_vector_table,
                              project, write_vector_table)


def make_table(tmp_path, rng, n_sentences=3, dim=16):
    sentences = []
    matrices = []
    for i in range(n_sentences):
        n_tokens = int(rng.integers(1, 6))
        sentences.append([f"tok{i}_{j}" for j in range(n_tokens)])
        matrices.append(rng.normal(size=(n_tokens, dim)).astype("<f4"))
    path = tmp_path / "table.ptvt"
    write_vector_table(path, matrices, sentences)
    return path, sentences, matrices


def test_write_load_identity_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    path, sentences, matrices = make_table(tmp_path, rng)
    table = load_vector_table(path, sentences)
    assert table.dim == 16
    assert len(table) == 3
    for loaded, original in zip(table.sentences, matrices):
        assert loaded.dtype == np.dtype("<f4")
        assert np.array_equal(loaded, original)


def test_empty_corpus_file(tmp_path):
    path = tmp_path / "empty.ptvt"
    write_vector_table(path, [], [])
    table = load_vector_table(path, [])
    assert len(table) == 0


def test_corrupted_hash_is_rejected(tmp_path):
    rng = np.random.default_rng(1)
    path, sentences, _ = make_table(tmp_path, rng)
    data = bytearray(path.read_bytes())
    data[20] ^= 0xFF  # magic(4) + version(4) + dim(4) + n_sentences(8) = 20
    path.write_bytes(bytes(data))
    with pytest.raises(VectorAlignmentError) as info:
        load_vector_table(path, sentences)
    assert "hash" in str(info.value)


def test_misaligned_corpus_is_rejected(tmp_path):
    rng = np.random.default_rng(2)
    path, sentences, _ = make_table(tmp_path, rng)
    edited = [list(s) for s in sentences]
    edited[1][0] = "changed"
    with pytest.raises(VectorAlignmentError):
        load_vector_table(path, edited)


def test_row_count_mismatch_names_sentence(tmp_path):
    rng = np.random.default_rng(3)
    sentences = [["a", "b"], ["c", "d", "e"]]
    matrices = [rng.normal(size=(2, 4)).astype("<f4"),
                rng.normal(size=(3, 4)).astype("<f4")]
    path = tmp_path / "t.ptvt"
    write_vector_table(path, matrices, sentences)
    # lie about the corpus but keep the same hash text impossible; instead
    # rewrite the per-sentence token count field of sentence 1
    data = bytearray(path.read_bytes())
    offset = 4 + 8 + 16  # magic + (version, dim) + (n_sentences, hash)
    offset += 4 + 2 * 4 * 4  # sentence 0 header + payload
    data[offset:offset + 4] = struct.pack("<I", 99)
    path.write_bytes(bytes(data))
    with pytest.raises(VectorAlignmentError) as info:
        load_vector_table(path, sentences)
    assert "sentence 1" in str(info.value)


def test_bad_magic_and_version(tmp_path):
    rng = np.random.default_rng(4)
    path, sentences, _ = make_table(tmp_path, rng)
    data = bytearray(path.read_bytes())
    original = bytes(data)
    data[0] = ord("X")
    path.write_bytes(bytes(data))
    with pytest.raises(VectorTableError):
        load_vector_table(path, sentences)
    data = bytearray(original)
    data[4] = 99  # version field
    path.write_bytes(bytes(data))
    with pytest.raises(VectorTableError):
        load_vector_table(path, sentences)


def test_truncated_file(tmp_path):
    rng = np.random.default_rng(5)
    path, sentences, _ = make_table(tmp_path, rng)
    data = path.read_bytes()
    path.write_bytes(data[:-3])
    with pytest.raises(VectorTableError):
        load_vector_table(path, sentences)


def test_corpus_hash_depends_on_tokens():
    assert corpus_hash([["a", "b"]]) != corpus_hash([["a"], ["b"]])
    assert corpus_hash([["a", "b"]]) == corpus_hash([["a", "b"]])


def test_project_identity_and_zero():
    vector = np.arange(4.0)
    identity = Projection(np.eye(4))
    assert np.array_equal(project(vector, identity), vector)
    zero = Projection(np.zeros((4, 2)))
    assert np.array_equal(project(vector, zero), np.zeros(2))


def test_project_matches_per_row_dot_products():
    rng = np.random.default_rng(6)
    matrix = rng.normal(size=(16, 8))
    vector = rng.normal(size=16)
    projection = Projection(matrix)
    out = project(vector, projection)
    for j in range(8):
        expected = sum(vector[i] * matrix[i, j] for i in range(16))
        assert out[j] == pytest.approx(expected, rel=1e-12)


def test_project_is_linear():
    rng = np.random.default_rng(7)
    projection = initialize_projection(12, 5, seed=3)
    u = rng.normal(size=12)
    v = rng.normal(size=12)
    left = project(2.5 * u + 0.5 * v, projection)
    right = 2.5 * project(u, projection) + 0.5 * project(v, projection)
    assert np.allclose(left, right, rtol=1e-5)


def test_project_dimension_mismatch():
    projection = initialize_projection(8, 4, seed=0)
    with pytest.raises(ValueError):
        project(np.zeros(9), projection)


def test_projection_rejects_nonfinite():
    with pytest.raises(ValueError):
        Projection(np.array([[np.inf, 0.0]]))
