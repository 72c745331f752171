"""Word-to-subword alignment over a fast tokenizer."""

from __future__ import annotations

from dataclasses import dataclass


class AlignmentError(ValueError):
    pass


@dataclass
class SubwordAlignment:
    """Per word, the indices of its subword units in the encoder's token
    stream (special tokens excluded).  Alignments partition the non-special
    tokens and every word has at least one subword."""

    subwords: list  # list of lists of token positions

    @property
    def last_indices(self) -> list:
        return [positions[-1] for positions in self.subwords]

    def __len__(self):
        return len(self.subwords)


def align_subwords(words, tokenizer) -> SubwordAlignment:
    """Align `words` with the tokenizer's subword stream.

    The alignment must be contiguous and order-preserving; a word the
    tokenizer maps to zero subwords is an error naming the word index.
    """
    words = list(words)
    if not words:
        raise AlignmentError("cannot align an empty word sequence")
    for index, word in enumerate(words):
        if not word:
            raise AlignmentError(f"word {index} is empty")
    encoding = tokenizer(words, is_split_into_words=True,
                         add_special_tokens=True)
    word_ids = encoding.word_ids()
    subwords = [[] for _ in words]
    previous = -1
    for position, word_id in enumerate(word_ids):
        if word_id is None:
            continue  # special token
        if word_id < previous:
            raise AlignmentError(
                f"tokenizer produced a non-monotone alignment at word {word_id}")
        previous = word_id
        subwords[word_id].append(position)
    for index, positions in enumerate(subwords):
        if not positions:
            raise AlignmentError(
                f"word {index} ({words[index]!r}) has no subword units")
        if positions != list(range(positions[0], positions[-1] + 1)):
            raise AlignmentError(
                f"word {index} ({words[index]!r}) maps to non-contiguous "
                f"subwords {positions}")
    return SubwordAlignment(subwords)
