"""Bracketed treebank reading/writing and the normalization pipeline."""

from __future__ import annotations

import logging
from dataclasses import dataclass

from .trees import ParseTree, branch, leaf, leaves

log = logging.getLogger(__name__)

DEFAULT_ROOT_LABEL = "TOP"
EMPTY_ELEMENT_TAG = "-NONE-"

# Labels/tags that start with a separator character ("-NONE-", "-LRB-", ...)
# are token-like and exempt from function-tag stripping.
DEFAULT_TAG_SEPARATORS = frozenset({"-", "="})

_PAREN_ESCAPES = (("(", "-LRB-"), (")", "-RRB-"))


class TreebankParseError(ValueError):
    """Malformed bracketed input; carries 1-based line/column."""

    def __init__(self, message, line, column):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


@dataclass
class RawTreebank:
    trees: list[ParseTree]
    source: str = "<unknown>"

    def __len__(self):
        return len(self.trees)

    def __iter__(self):
        return iter(self.trees)


@dataclass(frozen=True)
class NormalizationConfig:
    strip_function_tags: bool = True
    remove_empty_elements: bool = True
    root_label: str = DEFAULT_ROOT_LABEL
    function_tag_separators: frozenset = DEFAULT_TAG_SEPARATORS

    def __post_init__(self):
        if not self.root_label:
            raise ValueError("root_label must be non-empty")


@dataclass(frozen=True)
class DroppedSentence:
    source: str
    index: int
    reason: str


def _tokenize(text):
    """Yield (token, line, column); parens are single-char tokens."""
    line, col = 1, 1
    buf = []
    buf_pos = (1, 1)
    for ch in text:
        if ch in "()" or ch.isspace():
            if buf:
                yield "".join(buf), *buf_pos
                buf = []
            if ch in "()":
                yield ch, line, col
        else:
            if not buf:
                buf_pos = (line, col)
            buf.append(ch)
        if ch == "\n":
            line += 1
            col = 1
        else:
            col += 1
    if buf:
        yield "".join(buf), *buf_pos


def read_bracketed(text: str, source: str = "<string>",
                   root_label: str = DEFAULT_ROOT_LABEL) -> RawTreebank:
    """Parse whitespace-separated S-expressions, one tree each.

    A PTB-style wrapper node with an empty label is absorbed into
    `root_label`.  An empty input yields an empty treebank.
    """
    tokens = list(_tokenize(text))
    pos = 0

    def error(message, at):
        raise TreebankParseError(message, at[1], at[2])

    def parse_node():
        nonlocal pos
        open_tok = tokens[pos]
        pos += 1  # past "("
        if pos >= len(tokens):
            error("unexpected end of input inside tree", open_tok)
        label = None
        if tokens[pos][0] not in "()":
            label = tokens[pos][0]
            pos += 1
        atoms = []
        children = []
        while pos < len(tokens) and tokens[pos][0] != ")":
            tok = tokens[pos]
            if tok[0] == "(":
                children.append(parse_node())
            else:
                atoms.append(tok)
                pos += 1
        if pos >= len(tokens):
            error("unbalanced parentheses: missing ')'", open_tok)
        pos += 1  # past ")"
        if atoms and children:
            error("mixed tokens and subtrees under one node", atoms[0])
        if atoms:
            if label is None:
                error("token without a tag", atoms[0])
            if len(atoms) > 1:
                error("more than one token under a preterminal", atoms[1])
            return leaf(atoms[0][0], label)
        if not children:
            error("empty node", open_tok)
        if label is None:
            # wrapper parens: absorb into the root label
            if len(children) == 1 and not children[0].is_leaf \
                    and children[0].label == root_label:
                return children[0]
            return branch(root_label, children)
        return branch(label, children)

    trees = []
    while pos < len(tokens):
        tok = tokens[pos]
        if tok[0] != "(":
            error(f"expected '(' but found {tok[0]!r}", tok)
        trees.append(parse_node())
    return RawTreebank(trees, source)


def read_bracketed_file(path, root_label: str = DEFAULT_ROOT_LABEL) -> RawTreebank:
    with open(path, encoding="utf-8") as handle:
        return read_bracketed(handle.read(), source=str(path), root_label=root_label)


def _strip_label(label: str, separators) -> str:
    if not label or label[0] in separators:
        return label
    cut = len(label)
    for sep in separators:
        found = label.find(sep)
        if found != -1:
            cut = min(cut, found)
    return label[:cut]


def normalize(tree: ParseTree, config: NormalizationConfig = NormalizationConfig()):
    """Apply function-tag stripping, empty-element removal, and re-rooting.

    Returns None when the tree loses all of its leaves.
    """
    seps = config.function_tag_separators

    def walk(node: ParseTree):
        if node.is_leaf:
            if config.remove_empty_elements and node.word.tag == EMPTY_ELEMENT_TAG:
                return None
            if config.strip_function_tags:
                tag = _strip_label(node.word.tag, seps)
                if tag != node.word.tag:
                    return leaf(node.word.form, tag)
            return node
        children = tuple(c for c in map(walk, node.children) if c is not None)
        if not children:
            return None
        label = node.label
        if config.strip_function_tags:
            label = _strip_label(label, seps)
        return branch(label, children)

    result = walk(tree)
    if result is None:
        return None
    if result.is_leaf or result.label != config.root_label:
        result = branch(config.root_label, (result,))
    return result


def normalize_treebank(raw: RawTreebank,
                       config: NormalizationConfig = NormalizationConfig()):
    """Normalize every tree; dropped sentences are reported, not fatal."""
    kept = []
    dropped = []
    for index, tree in enumerate(raw.trees):
        result = normalize(tree, config)
        if result is None:
            reason = "no leaves left after normalization"
            dropped.append(DroppedSentence(raw.source, index, reason))
            log.warning("dropping sentence %d of %s: %s", index, raw.source, reason)
        else:
            kept.append(result)
    return RawTreebank(kept, raw.source), dropped


def write_drop_report(dropped, path):
    with open(path, "w", encoding="utf-8") as handle:
        for entry in dropped:
            handle.write(f"{entry.source}\t{entry.index}\t{entry.reason}\n")


def _escape_form(form: str) -> str:
    for raw, escaped in _PAREN_ESCAPES:
        form = form.replace(raw, escaped)
    return form


def _check_writable(text: str, what: str):
    if any(ch.isspace() for ch in text):
        raise ValueError(f"{what} {text!r} contains whitespace")


def format_tree(tree: ParseTree) -> str:
    """Single-line bracketed form; literal parens in forms are escaped."""
    if tree.is_leaf:
        _check_writable(tree.word.tag, "tag")
        form = _escape_form(tree.word.form)
        _check_writable(form, "form")
        return f"({tree.word.tag} {form})"
    _check_writable(tree.label, "label")
    inner = " ".join(format_tree(c) for c in tree.children)
    return f"({tree.label} {inner})"


def write_bracketed(treebank: RawTreebank) -> str:
    """One tree per line; read_bracketed(write_bracketed(tb)) == tb."""
    return "".join(format_tree(t) + "\n" for t in treebank.trees)


def write_bracketed_file(treebank: RawTreebank, path):
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(write_bracketed(treebank))


def load_normalized(path, config: NormalizationConfig = NormalizationConfig()):
    """Read + normalize a treebank file, returning (treebank, dropped)."""
    raw = read_bracketed_file(path, root_label=config.root_label)
    return normalize_treebank(raw, config)


def sentence_of(tree: ParseTree):
    return tuple(leaves(tree))
