"""Acceptance criteria for the exporter: interop with the consumer package's
PTVT loader, and the last-subword representation rule."""

import random
import time

import numpy as np
import pytest
import torch

from parselab.vectors import VectorAlignmentError, VectorTableError, load_vector_table

from embed_export.export import export_vectors

WORD_POOL = ["the", "a", "dog", "cat", "bird", "runs", "sees", "big", "red",
             "old", "parsing", "unhappy", "tokenization", "walked", "walks",
             "playing", "quickly", "houseboat", "over", "under", "river"]


def report_line(name, ok, elapsed, detail=""):
    verdict = "PASS" if ok else "FAIL"
    suffix = f" ({detail})" if detail else ""
    print(f"[ACCEPTANCE] {name}: {verdict} in {elapsed:.2f}s{suffix}")


def test_ptvt_interop_with_consumer(tmp_path, encoder):
    start = time.monotonic()
    rng = random.Random(606060)
    sentences = [[rng.choice(WORD_POOL) for _ in range(rng.randint(1, 9))]
                 for _ in range(50)]
    out = tmp_path / "corpus.ptvt"
    report = export_vectors(sentences, encoder, out_path=out)
    assert report.n_sentences == 50

    table = load_vector_table(out, sentences)
    assert len(table) == 50
    assert table.dim == report.dim
    for matrix, words in zip(table.sentences, sentences):
        assert matrix.shape == (len(words), report.dim)
    for loaded, exported in zip(table.sentences, report.matrices):
        assert np.array_equal(loaded, exported.astype("<f4"))

    # a single corrupted byte in the alignment hash is rejected
    corrupt = bytearray(out.read_bytes())
    corrupt[20] ^= 0x01
    bad = tmp_path / "corrupt.ptvt"
    bad.write_bytes(bytes(corrupt))
    with pytest.raises((VectorAlignmentError, VectorTableError)):
        load_vector_table(bad, sentences)

    # an edited sentence file no longer matches the stored hash
    edited = [list(words) for words in sentences]
    edited[17][0] = "edited"
    with pytest.raises(VectorAlignmentError):
        load_vector_table(out, edited)

    elapsed = time.monotonic() - start
    report_line("ptvt-interop", elapsed < 120.0, elapsed, "50 sentences")
    assert elapsed < 120.0


# 20 words whose WordPiece splits under the toy vocabulary are known
FIXTURE_WORDS = [
    ("the", 1), ("dog", 1), ("parsing", 2), ("unhappy", 2),
    ("tokenization", 3), ("walked", 2), ("walks", 2), ("playing", 2),
    ("quickly", 2), ("houseboat", 2), ("a", 1), ("cat", 1), ("bird", 1),
    ("runs", 1), ("sees", 1), ("big", 1), ("red", 1), ("old", 1),
    ("over", 1), ("river", 1),
]


def test_last_subword_rule(encoder):
    start = time.monotonic()
    tokenizer, model = encoder
    words = [w for w, _ in FIXTURE_WORDS]
    counts = [c for _, c in FIXTURE_WORDS]

    # sanity: the tokenizer splits exactly as the fixture expects
    encoding = tokenizer(words, is_split_into_words=True)
    observed = [0] * len(words)
    for word_id in encoding.word_ids():
        if word_id is not None:
            observed[word_id] += 1
    assert observed == counts

    # hand-computed last-subword positions: [CLS] at 0, words follow
    last_positions = []
    cursor = 1
    for count in counts:
        cursor += count
        last_positions.append(cursor - 1)

    with torch.no_grad():
        tensors = tokenizer(words, is_split_into_words=True,
                            return_tensors="pt")
        hidden = model(**tensors).last_hidden_state[0]
    expected = hidden[last_positions].numpy()

    exported = export_vectors([words], encoder).matrices[0]
    assert exported.shape == (20, hidden.shape[1])
    assert np.allclose(exported, expected, atol=1e-5)

    elapsed = time.monotonic() - start
    report_line("last-subword-rule", True, elapsed, "20-word fixture")
