import numpy as np
import pytest

from embed_export.cli import main
from embed_export.export import (ExportError, encode_sentence, export_vectors,
                                 parse_layer_policy, read_sentences)

SENTENCES = [
    ["the", "dog", "runs"],
    ["parsing", "the", "tokenization"],
    ["a", "cat", "sees", "the", "bird"],
]


def test_export_row_counts_match_word_counts(tmp_path, encoder):
    out = tmp_path / "t.ptvt"
    report = export_vectors(SENTENCES, encoder, out_path=out)
    assert report.n_sentences == 3
    assert report.dim == 32
    assert [m.shape for m in report.matrices] == [(3, 32), (3, 32), (5, 32)]
    assert out.stat().st_size > 0


def test_export_is_deterministic(tmp_path, encoder):
    out_a, out_b = tmp_path / "a.ptvt", tmp_path / "b.ptvt"
    export_vectors(SENTENCES, encoder, out_path=out_a)
    export_vectors(SENTENCES, encoder, out_path=out_b)
    assert out_a.read_bytes() == out_b.read_bytes()


def test_single_vs_batch_export_matches(encoder):
    alone = export_vectors([SENTENCES[0]], encoder).matrices[0]
    batched = export_vectors(SENTENCES, encoder).matrices[0]
    assert np.allclose(alone, batched, atol=1e-4)


def test_layer_policy_selects_different_layers(encoder):
    last = export_vectors([SENTENCES[0]], encoder, layer="last").matrices[0]
    embeddings = export_vectors([SENTENCES[0]], encoder, layer="0").matrices[0]
    assert last.shape == embeddings.shape
    assert not np.allclose(last, embeddings, atol=1e-3)


def test_layer_policy_parsing():
    assert parse_layer_policy("last") == "last"
    assert parse_layer_policy("2") == 2
    with pytest.raises(ExportError):
        parse_layer_policy("penultimate")


def test_layer_index_out_of_range(encoder):
    with pytest.raises(ExportError):
        export_vectors([SENTENCES[0]], encoder, layer="17")


def test_window_overflow_splits_and_flags(encoder, caplog):
    long_sentence = ["the", "dog"] * 18  # 36 subwords > 10 - 2
    with caplog.at_level("WARNING"):
        report = export_vectors([long_sentence], encoder, window=10)
    assert report.segmented == [0]
    assert report.matrices[0].shape == (36, 32)
    assert any("window" in m for m in caplog.messages)


def test_segment_vectors_come_from_their_own_window(encoder):
    tokenizer, model = encoder
    long_sentence = ["the", "dog"] * 18
    rows, was_segmented = encode_sentence(long_sentence, tokenizer, model,
                                          window=10)
    assert was_segmented
    # budget is window - 2 = 8 single-subword words per segment, so the
    # first segment is exactly the first 8 words encoded on their own
    head, head_segmented = encode_sentence(long_sentence[:8], tokenizer,
                                           model, window=10)
    assert not head_segmented
    assert np.allclose(rows[:8], head, atol=1e-5)


def test_word_larger_than_window_is_an_error(encoder):
    with pytest.raises(ExportError):
        export_vectors([["tokenization"]], encoder, window=4)  # budget 2 < 3


def test_alignment_failure_names_sentence(encoder):
    with pytest.raises(ExportError) as info:
        export_vectors([["the", "dog"], ["​"]], encoder)
    assert "sentence 1" in str(info.value)


def test_empty_corpus(tmp_path, encoder):
    out = tmp_path / "empty.ptvt"
    report = export_vectors([], encoder, out_path=out)
    assert report.n_sentences == 0
    assert out.stat().st_size == 28  # bare header


def test_read_sentences(tmp_path):
    path = tmp_path / "s.txt"
    path.write_text("the dog\n\nparsing the tokenization\n")
    assert read_sentences(path) == [
        ["the", "dog"], ["parsing", "the", "tokenization"]]


def test_cli_round_trip(tmp_path, encoder_dir, capsys):
    sentences = tmp_path / "s.txt"
    sentences.write_text("the dog runs\na cat sees the bird\n")
    out = tmp_path / "out.ptvt"
    code = main(["export", "--sentences", str(sentences),
                 "--encoder", str(encoder_dir), "--out", str(out)])
    assert code == 0
    assert "2 sentences" in capsys.readouterr().out
    assert out.stat().st_size > 0


def test_cli_missing_sentences_exits_2(tmp_path, encoder_dir, capsys):
    code = main(["export", "--sentences", str(tmp_path / "none.txt"),
                 "--encoder", str(encoder_dir),
                 "--out", str(tmp_path / "o.ptvt")])
    assert code == 2
    assert "does not exist" in capsys.readouterr().err


def test_cli_make_toy_encoder(tmp_path):
    out = tmp_path / "enc"
    assert main(["make-toy-encoder", "--out", str(out), "--hidden", "16",
                 "--layers", "1"]) == 0
    assert (out / "vocab.txt").is_file()
    assert (out / "config.json").is_file()
