"""Build a small deterministic masked-LM encoder on disk.

Useful for tests and for environments without model-hub access: the result
is a regular encoder directory that `export_vectors` (or any transformers
loader) can consume.
"""

from __future__ import annotations

import json
from pathlib import Path

SPECIAL_TOKENS = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]

# default WordPiece inventory: some whole words plus pieces that force
# known multi-subword splits (e.g. parsing -> pars ##ing)
DEFAULT_VOCAB = [
    "the", "a", "dog", "cat", "bird", "runs", "sees", "big", "red", "old",
    "pars", "##ing", "un", "##happy", "token", "##iza", "##tion",
    "walk", "##ed", "##s", "play", "jump", "quick", "##ly", "green",
    "house", "##boat", "over", "under", "river",
]


def build_toy_encoder(directory, vocab=None, hidden_size=32,
                      num_layers=2, num_heads=4, window=48,
                      seed=0) -> Path:
    """Write a seeded random BERT-style encoder + WordPiece tokenizer into
    `directory` and return the path."""
    import torch
    from transformers import BertConfig, BertModel

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    tokens = SPECIAL_TOKENS + list(vocab if vocab is not None else DEFAULT_VOCAB)
    if len(set(tokens)) != len(tokens):
        raise ValueError("vocabulary contains duplicates")
    (directory / "vocab.txt").write_text(
        "\n".join(tokens) + "\n", encoding="utf-8")
    (directory / "tokenizer_config.json").write_text(
        json.dumps({"tokenizer_class": "BertTokenizer",
                    "do_lower_case": False}, sort_keys=True),
        encoding="utf-8")
    torch.manual_seed(seed)
    config = BertConfig(
        vocab_size=len(tokens),
        hidden_size=hidden_size,
        num_hidden_layers=num_layers,
        num_attention_heads=num_heads,
        intermediate_size=hidden_size * 2,
        max_position_embeddings=window,
    )
    model = BertModel(config)
    model.eval()
    model.save_pretrained(directory)
    return directory
