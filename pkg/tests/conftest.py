"""Shared generators: a small unambiguous grammar for learning tests and
seeded random trees for property checks."""

import random

import pytest

from parselab.trees import branch, leaf

# Unambiguous toy grammar (structure is a function of the tag sequence):
#   S -> NP VP ; NP -> DT NN | DT JJ NN ; VP -> VBZ | VBZ NP
DETERMINERS = ["the", "a", "every", "some"]
ADJECTIVES = ["big", "red", "old", "tiny"]
NOUNS = ["dog", "cat", "bird", "fox", "mouse", "owl"]
VERBS = ["barks", "sees", "chases", "likes", "hears"]


def toy_np(rng):
    parts = [leaf(rng.choice(DETERMINERS), "DT")]
    if rng.random() < 0.4:
        parts.append(leaf(rng.choice(ADJECTIVES), "JJ"))
    parts.append(leaf(rng.choice(NOUNS), "NN"))
    return branch("NP", parts)


def toy_sentence_tree(rng):
    np = toy_np(rng)
    verb = leaf(rng.choice(VERBS), "VBZ")
    if rng.random() < 0.6:
        vp = branch("VP", [verb, toy_np(rng)])
    else:
        vp = branch("VP", [verb])
    return branch("TOP", [branch("S", [np, vp])])


def toy_corpus(n, seed):
    rng = random.Random(seed)
    return [toy_sentence_tree(rng) for _ in range(n)]


def rename_labels(tree, mapping):
    if tree.is_leaf:
        return tree
    return branch(mapping.get(tree.label, tree.label),
                  [rename_labels(c, mapping) for c in tree.children])


# Random trees for structural property tests.
RANDOM_LABELS = ["S", "NP", "VP", "PP", "ADJP", "SBAR"]
RANDOM_TAGS = ["NN", "VB", "DT", "IN", "JJ", "RB"]
RANDOM_FORMS = ["alpha", "beta", "gamma", "delta", "eps", "zeta", "eta", "theta"]
PUNCT_WORDS = [(".", "."), (",", ","), (":", ":")]


def random_words(rng, n, punctuation=False):
    words = []
    for _ in range(n):
        if punctuation and rng.random() < 0.15:
            form, tag = rng.choice(PUNCT_WORDS)
            words.append((form, tag))
        else:
            words.append((rng.choice(RANDOM_FORMS), rng.choice(RANDOM_TAGS)))
    return words


def random_structure(rng, words, lo, hi, max_chain=2):
    """Random n-ary structure over words[lo:hi] with unary chains of at most
    `max_chain` stacked labels."""
    if hi - lo == 1:
        node = leaf(*words[lo])
        if rng.random() < 0.3:
            node = branch(rng.choice(RANDOM_LABELS), [node])
            if max_chain >= 2 and rng.random() < 0.3:
                node = branch(rng.choice(RANDOM_LABELS), [node])
        return node
    arity = rng.randint(2, min(4, hi - lo))
    cuts = sorted(rng.sample(range(lo + 1, hi), arity - 1))
    bounds = [lo] + cuts + [hi]
    children = [random_structure(rng, words, bounds[i], bounds[i + 1], max_chain)
                for i in range(arity)]
    node = branch(rng.choice(RANDOM_LABELS), children)
    if max_chain >= 2 and rng.random() < 0.2:
        node = branch(rng.choice(RANDOM_LABELS), [node])
    return node


def random_tree(rng, n_words=None, punctuation=False, max_chain=2):
    """A random tree in normalized shape (rooted at TOP)."""
    n = n_words or rng.randint(1, 9)
    words = random_words(rng, n, punctuation)
    return branch("TOP", [random_structure(rng, words, 0, n, max_chain)])


def random_tree_pair(rng, punctuation=True):
    """Two random structures over the same word sequence."""
    n = rng.randint(1, 9)
    words = random_words(rng, n, punctuation)
    gold = branch("TOP", [random_structure(rng, words, 0, n)])
    pred = branch("TOP", [random_structure(rng, words, 0, n)])
    return gold, pred


@pytest.fixture
def rng():
    return random.Random(20240901)


# Independent CKY oracle: enumerate every binary structure; per-span labels
# are chosen independently because the objective sums over all spans and a
# span outside the structure contributes its empty-label score.
def binary_structures(i, j, memo=None):
    if memo is None:
        memo = {}
    key = (i, j)
    if key in memo:
        return memo[key]
    if j - i == 1:
        result = [((i, j),)]
    else:
        result = []
        for split in range(i + 1, j):
            for left in binary_structures(i, split, memo):
                for right in binary_structures(split, j, memo):
                    result.append(((i, j),) + left + right)
    memo[key] = result
    return result


def first_argmax(values):
    best = 0
    for k in range(1, len(values)):
        if values[k] > values[best]:
            best = k
    return best


def brute_force_decode(grid):
    import math

    n = len(grid.sentence)
    scores = grid.scores
    base = sum(scores[i, j, 0] for i in range(n) for j in range(i + 1, n + 1))
    best_total = -math.inf
    best_brackets = None
    for structure in binary_structures(0, n):
        total = base
        brackets = []
        for (i, j) in structure:
            margins = scores[i, j] - scores[i, j, 0]
            if (i, j) == (0, n):
                label = 1 + first_argmax(margins[1:])
            else:
                label = first_argmax(margins)
            total += margins[label]
            if label != 0:
                brackets.append((i, j, grid.labels[label]))
        if total > best_total:
            best_total = total
            best_brackets = brackets
    return best_total, best_brackets


def tree_from_brackets(brackets, sentence):
    """Assemble the n-ary tree named by a nested bracket assignment."""
    from parselab.trees import split_collapsed

    ordered = sorted(brackets, key=lambda b: (b[0], -b[1]))

    def helper(pos, start, end):
        children = []
        cursor = start
        while cursor < end:
            if pos < len(ordered) and ordered[pos][0] == cursor \
                    and ordered[pos][1] <= end:
                s, e, label = ordered[pos]
                pos += 1
                kids, pos = helper(pos, s, e)
                parts = split_collapsed(label)
                node = branch(parts[-1], kids)
                for part in reversed(parts[:-1]):
                    node = branch(part, (node,))
                children.append(node)
                cursor = e
            else:
                children.append(leaf(sentence[cursor].form, sentence[cursor].tag))
                cursor += 1
        return children, pos

    children, _ = helper(0, 0, len(sentence))
    assert len(children) == 1
    return children[0]


def random_grid(rng, n, n_labels):
    import numpy as np

    from parselab.chart import NULL_LABEL, SpanScoreGrid
    from parselab.trees import Word

    labels = (NULL_LABEL,) + tuple(chr(ord("A") + i) for i in range(n_labels - 1))
    sentence = tuple(Word(f"w{i}", f"T{i}") for i in range(n))
    scores = np.zeros((n, n + 1, n_labels))
    for i in range(n):
        for j in range(i + 1, n + 1):
            scores[i, j] = rng.normal(size=n_labels)
    return SpanScoreGrid(sentence, labels, scores)


def assert_well_formed(tree, sentence):
    from parselab.trees import leaves, spans_of

    assert leaves(tree) == list(sentence)
    spans = list(spans_of(tree))
    for a in spans:
        for b in spans:
            assert not (a.start < b.start < a.end < b.end)


# Random in-order models for beam-search property tests.  Weights are random,
# with two structural nudges so that random walks typically terminate:
# finishing is attractive, and shifting onto a markerless non-empty stack
# (which strands items forever) is strongly penalized.  Draws where any
# search still exhausts the action cap are rejected and redrawn; completion
# is a property of the random policy, not of the comparison under test.
def random_inorder_model(seed, scale=1.5, labels=("S", "NP", "VP"), bits=10):
    import numpy as np

    from parselab.features import feature_index
    from parselab.inorder import InOrderModel, action_vocabulary
    from parselab.training import HashedLinear

    generator = np.random.default_rng(seed)
    actions = action_vocabulary(labels)
    model = InOrderModel(actions=actions, bits=bits,
                         weights=HashedLinear(len(actions), bits))
    n_pj = len(actions) - 3
    for index in range(2 ** bits):
        model.weights.rows[index] = generator.normal(size=len(actions)) * scale
    model.weights.rows[feature_index("bias", bits)] += \
        np.array([0.5, 0.5, 4.0] + [-0.5] * n_pj)
    model.weights.rows[feature_index("open=<none>", bits)] += \
        np.array([-12.0, 0.0, 2.0] + [1.0] * n_pj)
    return model


def random_tagged_sentence(rng, max_len=7):
    from parselab.trees import Word
    n = rng.randint(2, max_len)
    tags = ["DT", "NN", "VBZ", "JJ", "IN"]
    return tuple(Word(f"w{i}", rng.choice(tags)) for i in range(n))


def greedy_reference(sentence, model):
    """Independent greedy decoder: repeated first-argmax over the masked
    distribution; None when no derivation finishes within the cap."""
    from parselab.inorder import (action_cap, apply_action, initial_state,
                                  masked_log_probs)

    state = initial_state(sentence)
    actions = []
    total = 0.0
    for _ in range(action_cap(len(sentence))):
        legal, logps = masked_log_probs(model, state)
        if not legal:
            return None
        best = 0
        for k in range(1, len(logps)):
            if logps[k] > logps[best]:
                best = k
        total += float(logps[best])
        actions.append(legal[best])
        state = apply_action(state, legal[best], model.unary_limit)
        if state.is_terminal:
            return actions, total, state.stack[0]
    return None
