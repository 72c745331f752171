"""Export per-word contextual vectors into a PTVT table.

Each word is represented by the encoder's vector for its last subword unit.
Sentences whose subwords exceed the encoder window are split at the window
boundary and re-encoded per segment (the word's vector comes from the
segment containing it), at the documented cost of cross-segment context.

Frozen exports cannot express joint fine-tuning of the encoder with a
downstream parser; that is the principal fidelity gap of this route.
"""

from __future__ import annotations

import logging
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np
import torch

from . import ptvt
from .align import AlignmentError, align_subwords

log = logging.getLogger(__name__)

LAST_LAYER = "last"


class ExportError(ValueError):
    pass


def load_encoder(name_or_path):
    """Load a tokenizer/encoder pair from a local directory or model name."""
    from transformers import AutoModel, AutoTokenizer

    tokenizer = AutoTokenizer.from_pretrained(name_or_path)
    if not tokenizer.is_fast:
        raise ExportError("a fast tokenizer is required for word alignment")
    model = AutoModel.from_pretrained(name_or_path)
    model.eval()
    return tokenizer, model


def read_sentences(path):
    """One sentence per line, space-separated word forms (no tags)."""
    sentences = []
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                sentences.append(line.split(" "))
    return sentences


def parse_layer_policy(text) -> int | str:
    if text == LAST_LAYER:
        return LAST_LAYER
    try:
        return int(text)
    except (TypeError, ValueError):
        raise ExportError(f"layer policy must be {LAST_LAYER!r} or an integer, "
                          f"not {text!r}")


@contextmanager
def _deterministic_inference():
    threads = torch.get_num_threads()
    torch.set_num_threads(1)
    try:
        with torch.inference_mode():
            yield
    finally:
        torch.set_num_threads(threads)


def _segment_words(words, tokenizer, budget):
    """Greedily split the word sequence so each segment stays within the
    subword budget (encoder window minus the two special tokens)."""
    alignment = align_subwords(words, tokenizer)
    counts = [len(positions) for positions in alignment.subwords]
    if sum(counts) <= budget:
        return [words], False
    segments = []
    current: list = []
    used = 0
    for word, count in zip(words, counts):
        if count > budget:
            raise ExportError(
                f"word {word!r} alone exceeds the encoder window "
                f"({count} > {budget} subwords)")
        if used + count > budget:
            segments.append(current)
            current = []
            used = 0
        current.append(word)
        used += count
    if current:
        segments.append(current)
    return segments, True


def _encode_segment(words, tokenizer, model, layer):
    alignment = align_subwords(words, tokenizer)
    encoded = tokenizer(words, is_split_into_words=True, return_tensors="pt")
    with torch.no_grad():
        if layer == LAST_LAYER:
            hidden = model(**encoded).last_hidden_state[0]
        else:
            output = model(**encoded, output_hidden_states=True)
            try:
                hidden = output.hidden_states[layer][0]
            except IndexError:
                raise ExportError(
                    f"layer {layer} is out of range for this encoder "
                    f"({len(output.hidden_states)} hidden states)")
    rows = hidden[alignment.last_indices]
    return rows.detach().to(torch.float32).cpu().numpy()


def encode_sentence(words, tokenizer, model, layer=LAST_LAYER,
                    window=None) -> tuple:
    """(rows, was_segmented): one vector per word, last-subword rule."""
    window = window or model.config.max_position_embeddings
    budget = window - tokenizer.num_special_tokens_to_add()
    segments, was_segmented = _segment_words(list(words), tokenizer, budget)
    pieces = [_encode_segment(segment, tokenizer, model, layer)
              for segment in segments]
    return np.concatenate(pieces, axis=0), was_segmented


@dataclass
class ExportReport:
    n_sentences: int
    dim: int
    segmented: list = field(default_factory=list)  # overflowed sentence ids


def export_vectors(sentences, encoder, layer=LAST_LAYER, out_path=None,
                   window=None) -> ExportReport:
    """Encode every sentence and write the PTVT table to `out_path`.

    `sentences` is a list of word-form lists; `encoder` is a local directory
    or model name, or a preloaded (tokenizer, model) pair.
    """
    if isinstance(encoder, (str, bytes)) or hasattr(encoder, "__fspath__"):
        tokenizer, model = load_encoder(encoder)
    else:
        tokenizer, model = encoder
    layer = parse_layer_policy(layer) if isinstance(layer, str) else layer
    matrices = []
    segmented = []
    with _deterministic_inference():
        for index, words in enumerate(sentences):
            try:
                rows, was_segmented = encode_sentence(
                    words, tokenizer, model, layer, window)
            except AlignmentError as err:
                raise ExportError(f"sentence {index}: {err}") from err
            if rows.shape[0] != len(words):
                raise ExportError(
                    f"sentence {index}: {rows.shape[0]} vectors for "
                    f"{len(words)} words")
            if was_segmented:
                segmented.append(index)
                log.warning("sentence %d exceeds the encoder window; "
                            "split and re-encoded per segment", index)
            matrices.append(rows)
    dim = matrices[0].shape[1] if matrices else model.config.hidden_size
    if out_path is not None:
        ptvt.write_table(out_path, matrices, sentences)
    report = ExportReport(len(sentences), dim, segmented)
    report.matrices = matrices
    return report
