"""Span-chart decoder: every (span, label) pair is classified independently
and the best valid tree is assembled by CKY.

Each span of a sentence, including spans that end up carrying no bracket,
takes exactly one label from the collapsed-label vocabulary: index 0 is the
reserved empty label.  A tree's score is the sum of per-span log
probabilities over all spans of the sentence, with non-empty labels required
to nest and the full-sentence span required to take a non-empty label.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import serialize
from .evaluate import DEFAULT_EVAL_CONFIG, corpus_f1, eval_brackets
from .features import featurize_span
from .trees import (ParseTree, branch, collapse_unaries, leaf, leaves,
                    spans_of, split_collapsed)
from .training import (DenseAdam, DenseLinear, EpochStats, HashedLinear,
                       RowAdam, ScheduleState, TrainConfig, log_softmax)
from .vectors import Projection, initialize_projection, project

log = logging.getLogger(__name__)

# Reserved empty label: "no bracket on this span".  Treebank labels are
# non-empty strings, so the empty string can never collide.
NULL_LABEL = ""


@dataclass
class SpanScoreGrid:
    sentence: tuple  # Word per position
    labels: tuple    # collapsed labels, labels[0] == NULL_LABEL
    scores: np.ndarray  # (n, n+1, n_labels); valid where start < end

    def __post_init__(self):
        if self.labels[0] != NULL_LABEL:
            raise ValueError("labels[0] must be the reserved empty label")


@dataclass
class ChartModel:
    labels: tuple
    bits: int
    weights: HashedLinear
    projection: Projection | None = None
    dense: DenseLinear | None = None
    root_label: str = "TOP"
    seed: int = 0
    epochs_trained: int = 0

    @property
    def uses_vectors(self) -> bool:
        return self.projection is not None


def _span_input(model: ChartModel, projected, start: int, end: int):
    return np.concatenate([projected[start], projected[end - 1]])


def score_spans(sentence, model: ChartModel, sentence_vectors=None) -> SpanScoreGrid:
    """Per-span label log-probabilities for every span of the sentence."""
    n = len(sentence)
    if n == 0:
        raise ValueError("cannot score an empty sentence")
    projected = None
    if model.uses_vectors:
        if sentence_vectors is None:
            raise ValueError("model expects per-token vectors for this sentence")
        projected = [project(row, model.projection) for row in sentence_vectors]
    scores = np.zeros((n, n + 1, len(model.labels)))
    for start in range(n):
        for end in range(start + 1, n + 1):
            fv = featurize_span(sentence, start, end, model.bits)
            raw = model.weights.scores(fv)
            if projected is not None:
                raw = raw + model.dense.scores(_span_input(model, projected, start, end))
            scores[start, end] = log_softmax(raw)
    return SpanScoreGrid(tuple(sentence), model.labels, scores)


@dataclass
class CkyResult:
    tree: ParseTree
    score: float


def cky_parse(grid: SpanScoreGrid) -> CkyResult:
    """Exact Viterbi decoding of the best valid tree under the grid.

    Ties prefer the lower label index (the empty label wins a tie) and the
    leftmost split point.
    """
    n = len(grid.sentence)
    if n == 0:
        raise ValueError("cannot decode an empty sentence")
    scores = grid.scores
    # Relative to the everything-empty baseline, a bracket on a span
    # contributes its margin over the empty label.
    margins = scores - scores[:, :, :1]
    base = 0.0
    for start in range(n):
        for end in range(start + 1, n + 1):
            base += scores[start, end, 0]
    best = np.zeros((n + 1, n + 1))
    chosen_label = np.zeros((n + 1, n + 1), dtype=np.int64)
    chosen_split = np.zeros((n + 1, n + 1), dtype=np.int64)
    for width in range(1, n + 1):
        for start in range(0, n - width + 1):
            end = start + width
            span_margins = margins[start, end]
            if (start, end) == (0, n):
                label = 1 + int(np.argmax(span_margins[1:]))
            else:
                label = int(np.argmax(span_margins))
            total = span_margins[label]
            if width > 1:
                splits = np.array([best[start, k] + best[k, end]
                                   for k in range(start + 1, end)])
                k = int(np.argmax(splits))
                chosen_split[start, end] = start + 1 + k
                total += splits[k]
            best[start, end] = total
            chosen_label[start, end] = label

    def build(start: int, end: int):
        if end - start == 1:
            children = [leaf(grid.sentence[start].form, grid.sentence[start].tag)]
        else:
            split = chosen_split[start, end]
            children = build(start, split) + build(split, end)
        label = grid.labels[chosen_label[start, end]]
        if label == NULL_LABEL:
            return children
        node = branch(split_collapsed(label)[-1], children)
        for part in reversed(split_collapsed(label)[:-1]):
            node = branch(part, (node,))
        return [node]

    (tree,) = build(0, n)
    return CkyResult(tree, float(base + best[0, n]))


def cky_decode(grid: SpanScoreGrid) -> ParseTree:
    return cky_parse(grid).tree


def parse_sentence(sentence, model: ChartModel, sentence_vectors=None) -> ParseTree:
    return cky_decode(score_spans(sentence, model, sentence_vectors))


def gold_span_labels(tree: ParseTree) -> dict:
    """(start, end) -> collapsed label for every constituent of the tree."""
    collapsed = collapse_unaries(tree)
    return {(span.start, span.end): span.label
            for span in spans_of(collapsed)}


@dataclass
class TrainResult:
    model: ChartModel
    epochs: list
    dev_history: list


def _label_vocabulary(trees) -> tuple:
    labels = set()
    for tree in trees:
        labels.update(gold_span_labels(tree).values())
    return (NULL_LABEL,) + tuple(sorted(labels))


def train_chart(train_trees, dev_trees, config: TrainConfig, seed: int,
                train_vectors=None, dev_vectors=None,
                eval_config=DEFAULT_EVAL_CONFIG,
                projection_dim: int | None = None) -> TrainResult:
    """Per-span cross-entropy training of the chart model.

    Every span of every training sentence is an example; spans that are not
    constituents of the (collapsed) gold tree have the empty label as their
    target.  Deterministic given the seed.
    """
    import random as _random

    train_trees = list(train_trees)
    dev_trees = list(dev_trees)
    if not train_trees:
        raise ValueError("empty treebank")
    labels = _label_vocabulary(train_trees)
    label_ids = {label: i for i, label in enumerate(labels)}
    unknown_dev = {label for tree in dev_trees
                   for label in gold_span_labels(tree).values()} - set(labels)
    if unknown_dev:
        log.warning("dev labels never seen in training are scored as the "
                    "empty label: %s", ", ".join(sorted(unknown_dev)))

    root_label = train_trees[0].label if not train_trees[0].is_leaf else "TOP"
    model = ChartModel(labels=labels, bits=config.hash_bits,
                       weights=HashedLinear(len(labels), config.hash_bits),
                       root_label=root_label, seed=seed)
    if train_vectors is not None:
        dim_out = projection_dim or 128
        model.projection = initialize_projection(train_vectors.dim, dim_out, seed)
        model.dense = DenseLinear.zeros(2 * dim_out, len(labels))

    # Feature extraction is deterministic, so cache examples once.
    cached = []
    for index, tree in enumerate(train_trees):
        sentence = tuple(leaves(tree))
        gold = gold_span_labels(tree)
        spans = []
        for start in range(len(sentence)):
            for end in range(start + 1, len(sentence) + 1):
                fv = featurize_span(sentence, start, end, config.hash_bits)
                target = label_ids.get(gold.get((start, end), NULL_LABEL), 0)
                spans.append((start, end, fv, target))
        cached.append((index, sentence, spans))

    sparse_adam = RowAdam(config.beta1, config.beta2)
    dense_adam = DenseAdam(config.beta1, config.beta2)
    proj_adam = DenseAdam(config.beta1, config.beta2)
    schedule = ScheduleState(config)
    rng = _random.Random(seed)

    dev_sentences = [tuple(leaves(t)) for t in dev_trees]
    dev_gold = [eval_brackets(t, eval_config) for t in dev_trees]

    def dev_f1() -> float:
        predicted = []
        for i, sentence in enumerate(dev_sentences):
            vecs = dev_vectors.sentences[i] if dev_vectors is not None else None
            predicted.append(eval_brackets(
                parse_sentence(sentence, model, vecs), eval_config))
        return corpus_f1(dev_gold, predicted).f1

    best = None
    stats = []
    order = list(range(len(cached)))
    for epoch in range(1, config.max_epochs + 1):
        rng.shuffle(order)
        epoch_loss = 0.0
        for batch_start in range(0, len(order), config.batch_size):
            batch = order[batch_start:batch_start + config.batch_size]
            grad_rows: dict = {}
            grad_dense = np.zeros_like(model.dense.matrix) if model.dense else None
            grad_proj = np.zeros_like(model.projection.matrix) \
                if model.projection else None
            count = 0
            for sent_id in batch:
                _, sentence, spans = cached[sent_id]
                projected = None
                if model.uses_vectors:
                    rows = train_vectors.sentences[sent_id]
                    projected = [project(row, model.projection) for row in rows]
                for start, end, fv, target in spans:
                    raw = model.weights.scores(fv)
                    if projected is not None:
                        x = _span_input(model, projected, start, end)
                        raw = raw + model.dense.scores(x)
                    logp = log_softmax(raw)
                    epoch_loss -= logp[target]
                    grad_out = np.exp(logp)
                    grad_out[target] -= 1.0
                    model.weights.accumulate_gradient(fv, grad_out, grad_rows)
                    if projected is not None:
                        grad_dense += np.outer(x, grad_out)
                        dx = model.dense.matrix @ grad_out
                        half = model.projection.dim_out
                        rows_in = train_vectors.sentences[sent_id]
                        grad_proj += np.outer(rows_in[start], dx[:half])
                        grad_proj += np.outer(rows_in[end - 1], dx[half:])
                    count += 1
            if count == 0:
                continue
            for index in grad_rows:
                grad_rows[index] = grad_rows[index] / count
            multipliers = schedule.multipliers()
            sparse_adam.step(model.weights, grad_rows,
                             config.decoder_lr * multipliers.decoder)
            if model.dense is not None:
                model.dense.matrix = dense_adam.step(
                    model.dense.matrix, grad_dense / count,
                    config.decoder_lr * multipliers.decoder)
                model.projection.matrix = proj_adam.step(
                    model.projection.matrix, grad_proj / count,
                    config.projection_lr * multipliers.projection)
            schedule.after_update()
        multipliers = schedule.multipliers()
        f1 = dev_f1()
        schedule.after_epoch(f1)
        stats.append(EpochStats(epoch, epoch_loss, f1,
                                multipliers.warmup, multipliers.plateau))
        if best is None or f1 > best[0]:
            best = (f1, model.weights.copy(),
                    model.dense.copy() if model.dense else None,
                    Projection(model.projection.matrix.copy())
                    if model.projection else None,
                    epoch)
    if best is not None:
        model.weights = best[1]
        model.dense = best[2]
        model.projection = best[3]
        model.epochs_trained = best[4]
    return TrainResult(model, stats, schedule.dev_history)


def save_chart_model(model: ChartModel, path) -> None:
    indices, data = model.weights.to_arrays()
    arrays = {"weight_indices": indices, "weight_rows": data}
    meta = {
        "labels": list(model.labels),
        "bits": model.bits,
        "root_label": model.root_label,
        "seed": model.seed,
        "epochs_trained": model.epochs_trained,
        "uses_vectors": model.uses_vectors,
    }
    if model.uses_vectors:
        arrays["projection"] = model.projection.matrix
        arrays["dense"] = model.dense.matrix
    serialize.save_blob(path, "chart", meta, arrays)


def load_chart_model(path) -> ChartModel:
    kind, meta, arrays = serialize.load_blob(path)
    if kind != "chart":
        raise serialize.ModelFormatError(f"expected a chart model, found {kind!r}")
    labels = tuple(meta["labels"])
    weights = HashedLinear.from_arrays(len(labels), meta["bits"],
                                       arrays["weight_indices"],
                                       arrays["weight_rows"])
    model = ChartModel(labels=labels, bits=meta["bits"], weights=weights,
                       root_label=meta["root_label"], seed=meta["seed"],
                       epochs_trained=meta["epochs_trained"])
    if meta.get("uses_vectors"):
        model.projection = Projection(arrays["projection"])
        model.dense = DenseLinear(arrays["dense"])
    return model
