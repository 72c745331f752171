"""Deterministic hashed sparse features for spans and parser states.

Feature names are hashed with 64-bit FNV-1a and truncated to `bits` bits, so
indices are stable across runs and platforms.
"""

from __future__ import annotations

from dataclasses import dataclass

from .trees import ParseTree

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
MASK64 = 0xFFFFFFFFFFFFFFFF

DEFAULT_HASH_BITS = 22

_BOS = "<s>"
_EOS = "</s>"
_NONE = "<none>"


def fnv1a_64(data: bytes) -> int:
    value = FNV_OFFSET
    for byte in data:
        value = ((value ^ byte) * FNV_PRIME) & MASK64
    return value


def feature_index(name: str, bits: int) -> int:
    return fnv1a_64(name.encode("utf-8")) & ((1 << bits) - 1)


@dataclass(frozen=True)
class FeatureVector:
    """Sparse vector over a 2**bits hashed feature space.

    Indices are unique and sorted; colliding feature names have their
    weights summed.
    """

    bits: int
    pairs: tuple  # ((index, weight), ...) sorted by index

    @classmethod
    def from_names(cls, names, bits: int) -> "FeatureVector":
        weights: dict[int, float] = {}
        for name in names:
            index = feature_index(name, bits)
            weights[index] = weights.get(index, 0.0) + 1.0
        return cls(bits, tuple(sorted(weights.items())))

    def __len__(self):
        return len(self.pairs)


def _length_bucket(length: int) -> str:
    if length <= 5:
        return str(length)
    if length <= 10:
        return "6-10"
    if length <= 20:
        return "11-20"
    return ">20"


def featurize_span(sentence, start: int, end: int,
                   bits: int = DEFAULT_HASH_BITS) -> FeatureVector:
    """Features of span [start, end): boundary words/tags, a length bucket,
    and the tokens immediately outside the span.  Only positions start-1
    through end are consulted."""
    if not 0 <= start < end <= len(sentence):
        raise ValueError(f"invalid span ({start}, {end}) for length {len(sentence)}")
    first = sentence[start]
    last = sentence[end - 1]
    prev_w, prev_t = (sentence[start - 1].form, sentence[start - 1].tag) \
        if start > 0 else (_BOS, _BOS)
    next_w, next_t = (sentence[end].form, sentence[end].tag) \
        if end < len(sentence) else (_EOS, _EOS)
    bucket = _length_bucket(end - start)
    names = [
        "bias",
        f"len={bucket}",
        f"first_w={first.form}",
        f"first_t={first.tag}",
        f"last_w={last.form}",
        f"last_t={last.tag}",
        f"prev_w={prev_w}",
        f"prev_t={prev_t}",
        f"next_w={next_w}",
        f"next_t={next_t}",
        f"first_t|last_t={first.tag}|{last.tag}",
        f"prev_t|next_t={prev_t}|{next_t}",
        f"prev_t|first_t={prev_t}|{first.tag}",
        f"last_t|next_t={last.tag}|{next_t}",
        f"first_t|last_t|len={first.tag}|{last.tag}|{bucket}",
    ]
    return FeatureVector.from_names(names, bits)


def _item_descriptor(item) -> str:
    if item is None:
        return _NONE
    if isinstance(item, ParseTree):
        if item.is_leaf:
            return f"w:{item.word.tag}"
        return f"n:{item.label}"
    return f"o:{item.label}"  # open-nonterminal marker


def featurize_state(state, bits: int = DEFAULT_HASH_BITS) -> FeatureVector:
    """Features of a transition-system state: the top two stack entries, the
    topmost open nonterminal, the front-of-buffer word/tag, and the previous
    action."""
    stack = state.stack
    s0 = _item_descriptor(stack[-1] if len(stack) >= 1 else None)
    s1 = _item_descriptor(stack[-2] if len(stack) >= 2 else None)
    open_label = _NONE
    for item in reversed(stack):
        if not isinstance(item, ParseTree):
            open_label = item.label
            break
    if state.buffer_front < len(state.sentence):
        front = state.sentence[state.buffer_front]
        buf_w, buf_t = front.form, front.tag
    else:
        buf_w = buf_t = "<empty>"
    prev = str(state.last_action) if state.last_action is not None else _NONE
    s0_word = stack[-1].word.form if stack and isinstance(stack[-1], ParseTree) \
        and stack[-1].is_leaf else _NONE
    names = [
        "bias",
        f"s0={s0}",
        f"s1={s1}",
        f"s0_w={s0_word}",
        f"open={open_label}",
        f"buf_w={buf_w}",
        f"buf_t={buf_t}",
        f"prev={prev}",
        f"s0|buf_t={s0}|{buf_t}",
        f"open|s0={open_label}|{s0}",
        f"open|buf_t={open_label}|{buf_t}",
        f"s1|s0={s1}|{s0}",
        f"open|s0|buf_t={open_label}|{s0}|{buf_t}",
    ]
    return FeatureVector.from_names(names, bits)
