"""Labeled constituency trees, spans, and unary-chain transforms.

Trees are immutable: every transform returns a new tree, so trees can be
shared freely across threads.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterator

# Separator used when a unary chain is collapsed into a single label.
# A literal "+" or "\" inside a label is escaped with a backslash, which
# keeps the join/split round-trip lossless for every label string.
UNARY_SEPARATOR = "+"
_ESCAPE = "\\"


@dataclass(frozen=True)
class Word:
    """A surface token with its part-of-speech tag (tags are input data)."""

    form: str
    tag: str

    def __post_init__(self):
        if not self.form:
            raise ValueError("word form must be non-empty")
        if not self.tag:
            raise ValueError("word tag must be non-empty")


@dataclass(frozen=True)
class Span:
    """Half-open word span [start, end) carrying a nonterminal label."""

    start: int
    end: int
    label: str

    def __post_init__(self):
        if not 0 <= self.start < self.end:
            raise ValueError(f"invalid span ({self.start}, {self.end})")

    @property
    def length(self) -> int:
        return self.end - self.start

    def sort_key(self):
        return (self.start, -self.end, self.label)


@dataclass(frozen=True)
class ParseTree:
    """N-ary constituency tree.

    An internal node has a non-empty `label` and at least one child; a leaf
    holds a `word` (form + tag) and nothing else.  Preterminals are not
    separate nodes: the tag lives on the leaf.
    """

    label: str | None = None
    children: tuple[ParseTree, ...] = ()
    word: Word | None = None

    def __post_init__(self):
        if self.word is not None:
            if self.label is not None or self.children:
                raise ValueError("a leaf carries only a word")
        else:
            if not self.label:
                raise ValueError("internal node needs a non-empty label")
            if not self.children:
                raise ValueError("internal node needs at least one child")
            if not isinstance(self.children, tuple):
                object.__setattr__(self, "children", tuple(self.children))

    @property
    def is_leaf(self) -> bool:
        return self.word is not None


def leaf(form: str, tag: str) -> ParseTree:
    return ParseTree(word=Word(form, tag))


def branch(label: str, children) -> ParseTree:
    return ParseTree(label=label, children=tuple(children))


def leaves(tree: ParseTree) -> list[Word]:
    """In-order sequence of leaf words."""
    out: list[Word] = []

    def walk(node: ParseTree):
        if node.is_leaf:
            out.append(node.word)
        else:
            for child in node.children:
                walk(child)

    walk(tree)
    return out


def iter_nodes(tree: ParseTree) -> Iterator[ParseTree]:
    """Pre-order traversal over all nodes, leaves included."""
    stack = [tree]
    while stack:
        node = stack.pop()
        yield node
        stack.extend(reversed(node.children))


def spans_of(tree: ParseTree) -> Counter:
    """Multiset of labeled spans, one per internal node.

    Tags are structural, so no span is emitted for a word itself; members of
    a unary chain each contribute a span with identical endpoints.
    """
    result: Counter = Counter()

    def walk(node: ParseTree, start: int) -> int:
        if node.is_leaf:
            return start + 1
        end = start
        for child in node.children:
            end = walk(child, end)
        result[Span(start, end, node.label)] += 1
        return end

    walk(tree, 0)
    return result


@dataclass(frozen=True)
class CollapsedLabel:
    """An outermost-first unary chain of labels, joined losslessly."""

    parts: tuple[str, ...]

    def __post_init__(self):
        if not self.parts or any(not p for p in self.parts):
            raise ValueError("collapsed label parts must be non-empty")

    @property
    def joined(self) -> str:
        return UNARY_SEPARATOR.join(
            p.replace(_ESCAPE, _ESCAPE * 2).replace(UNARY_SEPARATOR, _ESCAPE + UNARY_SEPARATOR)
            for p in self.parts
        )

    @classmethod
    def from_joined(cls, text: str) -> "CollapsedLabel":
        return cls(tuple(split_collapsed(text)))


def join_collapsed(parts) -> str:
    return CollapsedLabel(tuple(parts)).joined


def split_collapsed(text: str) -> list[str]:
    """Inverse of join_collapsed; a backslash escapes the next character."""
    parts: list[str] = []
    buf: list[str] = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch == _ESCAPE and i + 1 < len(text):
            buf.append(text[i + 1])
            i += 2
        elif ch == UNARY_SEPARATOR:
            parts.append("".join(buf))
            buf = []
            i += 1
        else:
            buf.append(ch)
            i += 1
    parts.append("".join(buf))
    return parts


def collapse_unaries(tree: ParseTree) -> ParseTree:
    """Merge maximal nonterminal unary chains into single collapsed labels."""
    if tree.is_leaf:
        return tree
    labels = [tree.label]
    node = tree
    while len(node.children) == 1 and not node.children[0].is_leaf:
        node = node.children[0]
        labels.append(node.label)
    return branch(join_collapsed(labels), (collapse_unaries(c) for c in node.children))


def expand_unaries(tree: ParseTree) -> ParseTree:
    """Split collapsed labels back into their unary chains."""
    if tree.is_leaf:
        return tree
    children = tuple(expand_unaries(c) for c in tree.children)
    parts = split_collapsed(tree.label)
    node = branch(parts[-1], children)
    for label in reversed(parts[:-1]):
        node = branch(label, (node,))
    return node
