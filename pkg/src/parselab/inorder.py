"""In-order shift-reduce decoder: projection after the first child, with a
static oracle, action legality rules, and beam-search decoding.

Stack items are either completed subtrees or open-nonterminal markers.  A
projection inserts its marker *below* the completed item on top of the
stack (that item becomes the nonterminal's first child), so the top of the
stack is always a completed item.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import serialize
from .evaluate import DEFAULT_EVAL_CONFIG, corpus_f1, eval_brackets
from .features import featurize_state
from .trees import ParseTree, branch, leaf, leaves
from .training import (DenseAdam, DenseLinear, EpochStats, HashedLinear,
                       RowAdam, ScheduleState, TrainConfig, log_softmax)
from .vectors import Projection, initialize_projection, project

log = logging.getLogger(__name__)

DEFAULT_UNARY_LIMIT = 4
DEFAULT_BEAM_SIZE = 10


@dataclass(frozen=True)
class Action:
    kind: str            # SHIFT | PJ | REDUCE | FINISH
    label: str | None = None

    def __str__(self):
        if self.kind == "PJ":
            return f"PJ({self.label})"
        return self.kind


SHIFT = Action("SHIFT")
REDUCE = Action("REDUCE")
FINISH = Action("FINISH")


def pj(label: str) -> Action:
    return Action("PJ", label)


@dataclass(frozen=True)
class OpenMarker:
    label: str


class IllegalActionError(ValueError):
    def __init__(self, action, reason, step=None):
        at = f" at step {step}" if step is not None else ""
        super().__init__(f"illegal action {action}{at}: {reason}")
        self.action = action
        self.step = step
        self.reason = reason


@dataclass(frozen=True)
class ParserState:
    """Transition-system configuration.

    `top_chain_depth` is the length of the unary chain ending at the item on
    top of the stack (0 for a bare word).  Together with the run of open
    markers directly beneath the top item (consecutive projections that have
    not yet reduced), it bounds how deep a unary chain the next projection
    could create; projecting past `unary_limit` is illegal, which caps unary
    depth and keeps decoding finite.
    """

    sentence: tuple
    stack: tuple = ()
    buffer_front: int = 0
    open_count: int = 0
    last_action: Action | None = None
    top_chain_depth: int = 0

    @property
    def is_terminal(self) -> bool:
        return self.last_action == FINISH

    @property
    def top(self):
        return self.stack[-1] if self.stack else None


def initial_state(sentence) -> ParserState:
    sentence = tuple(sentence)
    if not sentence:
        raise ValueError("cannot parse an empty sentence")
    return ParserState(sentence=sentence)


def _finish_ready(state: ParserState) -> bool:
    return (state.buffer_front == len(state.sentence)
            and state.open_count == 0
            and len(state.stack) == 1
            and isinstance(state.stack[0], ParseTree)
            and not state.stack[0].is_leaf)


def _pending_wraps(stack) -> int:
    """Open markers directly beneath the top item; each one will wrap the
    top in another chain level if it reduces without new material."""
    run = 0
    for item in reversed(stack[:-1]):
        if isinstance(item, OpenMarker):
            run += 1
        else:
            break
    return run


def _projection_depth(state: ParserState) -> int:
    return state.top_chain_depth + _pending_wraps(state.stack)


def legal_actions(state: ParserState, pj_labels,
                  unary_limit: int = DEFAULT_UNARY_LIMIT) -> list:
    """Legal actions in canonical order: SHIFT, REDUCE, FINISH, then PJ per
    label.  A terminal state has none."""
    if state.is_terminal:
        return []
    actions = []
    if state.buffer_front < len(state.sentence):
        actions.append(SHIFT)
    if state.open_count >= 1:
        actions.append(REDUCE)
    if _finish_ready(state):
        actions.append(FINISH)
    if state.stack and isinstance(state.top, ParseTree) \
            and _projection_depth(state) < unary_limit:
        actions.extend(pj(label) for label in pj_labels)
    return actions


def apply_action(state: ParserState, action: Action,
                 unary_limit: int = DEFAULT_UNARY_LIMIT) -> ParserState:
    if state.is_terminal:
        raise IllegalActionError(action, "the derivation already finished")
    if action.kind == "SHIFT":
        if state.buffer_front >= len(state.sentence):
            raise IllegalActionError(action, "the buffer is empty")
        word = state.sentence[state.buffer_front]
        return ParserState(state.sentence,
                           state.stack + (leaf(word.form, word.tag),),
                           state.buffer_front + 1, state.open_count,
                           SHIFT, 0)
    if action.kind == "PJ":
        if not state.stack or not isinstance(state.top, ParseTree):
            raise IllegalActionError(action, "no completed item to project over")
        if _projection_depth(state) >= unary_limit:
            raise IllegalActionError(
                action, f"unary chain already at the limit of {unary_limit}")
        stack = state.stack[:-1] + (OpenMarker(action.label), state.top)
        return ParserState(state.sentence, stack, state.buffer_front,
                           state.open_count + 1, action, state.top_chain_depth)
    if action.kind == "REDUCE":
        if state.open_count < 1:
            raise IllegalActionError(action, "no open nonterminal on the stack")
        marker_pos = max(i for i, item in enumerate(state.stack)
                         if isinstance(item, OpenMarker))
        children = state.stack[marker_pos + 1:]
        node = branch(state.stack[marker_pos].label, children)
        depth = state.top_chain_depth + 1 if len(children) == 1 else 1
        return ParserState(state.sentence, state.stack[:marker_pos] + (node,),
                           state.buffer_front, state.open_count - 1,
                           REDUCE, depth)
    if action.kind == "FINISH":
        if not _finish_ready(state):
            reason = "the buffer is not empty" \
                if state.buffer_front < len(state.sentence) else \
                "an open nonterminal remains" if state.open_count else \
                "the stack does not hold a single phrasal constituent"
            raise IllegalActionError(action, reason)
        return ParserState(state.sentence, state.stack, state.buffer_front,
                           0, FINISH, state.top_chain_depth)
    raise IllegalActionError(action, f"unknown action kind {action.kind!r}")


def execute(actions, sentence, unary_limit: int = DEFAULT_UNARY_LIMIT) -> ParseTree:
    """Run an action sequence from the initial state; errors name the step."""
    state = initial_state(sentence)
    for step, action in enumerate(actions):
        try:
            state = apply_action(state, action, unary_limit)
        except IllegalActionError as err:
            raise IllegalActionError(action, err.reason, step) from None
    if not state.is_terminal:
        raise IllegalActionError(FINISH, "action sequence ended before FINISH",
                                 len(actions))
    return state.stack[0]


def oracle_actions(tree: ParseTree) -> list:
    """Static oracle: first child, project, remaining children, reduce."""
    if tree.is_leaf:
        raise ValueError("oracle needs a tree with a phrasal root")

    def recurse(node: ParseTree, out: list):
        if node.is_leaf:
            out.append(SHIFT)
            return
        recurse(node.children[0], out)
        out.append(pj(node.label))
        for child in node.children[1:]:
            recurse(child, out)
        out.append(REDUCE)

    actions: list = []
    recurse(tree, actions)
    actions.append(FINISH)
    return actions


def required_unary_limit(trees) -> int:
    """Smallest unary limit whose legality rules admit every oracle
    derivation of `trees`."""
    limit = 1

    def chain(node: ParseTree) -> int:
        # unary-chain depth of a completed subtree, as tracked by REDUCE
        if node.is_leaf:
            return 0
        if len(node.children) == 1:
            return chain(node.children[0]) + 1
        return 1

    def scan(node: ParseTree):
        nonlocal limit
        if node.is_leaf:
            return
        # projecting this node happens over its completed first child
        limit = max(limit, chain(node.children[0]) + 1)
        for child in node.children:
            scan(child)

    for tree in trees:
        scan(tree)
    return limit


@dataclass
class InOrderModel:
    actions: tuple   # SHIFT, REDUCE, FINISH, then PJ per label
    bits: int
    weights: HashedLinear
    unary_limit: int = DEFAULT_UNARY_LIMIT
    beam_size: int = DEFAULT_BEAM_SIZE
    projection: Projection | None = None
    dense: DenseLinear | None = None
    root_label: str = "TOP"
    seed: int = 0
    epochs_trained: int = 0

    def __post_init__(self):
        if self.beam_size < 1:
            raise ValueError("beam_size must be >= 1")
        if self.unary_limit < 1:
            raise ValueError("unary_limit must be >= 1")
        self.action_ids = {action: i for i, action in enumerate(self.actions)}
        self.pj_labels = tuple(a.label for a in self.actions if a.kind == "PJ")

    @property
    def uses_vectors(self) -> bool:
        return self.projection is not None


def action_vocabulary(labels) -> tuple:
    return (SHIFT, REDUCE, FINISH) + tuple(pj(label) for label in sorted(set(labels)))


def masked_log_probs(model: InOrderModel, state: ParserState, x_front=None):
    """(legal actions, their log-probabilities); illegal actions get no mass."""
    legal = legal_actions(state, model.pj_labels, model.unary_limit)
    if not legal:
        return [], np.zeros(0)
    fv = featurize_state(state, model.bits)
    raw = model.weights.scores(fv)
    if model.dense is not None:
        raw = raw + model.dense.scores(x_front)
    picked = np.array([raw[model.action_ids[a]] for a in legal])
    return legal, log_softmax(picked)


@dataclass
class DecodeResult:
    tree: ParseTree
    actions: tuple
    score: float
    fallback: bool = False


def action_cap(n_words: int) -> int:
    return 12 * n_words + 24


def _front_vector(model, projected_rows, state):
    if model.projection is None:
        return None
    if state.buffer_front < len(state.sentence):
        return projected_rows[state.buffer_front]
    return np.zeros(model.projection.dim_out)


def _force_complete(state: ParserState, root_label: str):
    """Close everything without consulting legality; used only when the beam
    fails to finish within the action cap."""
    items = list(state.stack)
    for index in range(state.buffer_front, len(state.sentence)):
        word = state.sentence[index]
        items.append(leaf(word.form, word.tag))
    while True:
        marker_pos = next((i for i in range(len(items) - 1, -1, -1)
                           if isinstance(items[i], OpenMarker)), None)
        if marker_pos is None:
            break
        children = items[marker_pos + 1:]
        if children:
            items[marker_pos:] = [branch(items[marker_pos].label, children)]
        else:
            del items[marker_pos]
    if len(items) == 1 and isinstance(items[0], ParseTree) and not items[0].is_leaf:
        return items[0]
    return branch(root_label, items)


@dataclass
class _BeamItem:
    score: float
    state: ParserState
    actions: tuple


def beam_decode(sentence, model: InOrderModel, beam_size: int | None = None,
                sentence_vectors=None) -> DecodeResult:
    """Beam search over action sequences.

    Unfinished items advance one action per step; hypotheses taking FINISH
    move to the completed pool, where they keep competing for beam slots
    with unchanged scores.  Search ends once the pool holds beam_size items
    (every surviving slot is finished), everything alive has finished or
    died, or the action cap is hit.  Completed hypotheses compete by raw
    total log-probability.
    """
    beam_size = beam_size or model.beam_size
    if beam_size < 1:
        raise ValueError("beam_size must be >= 1")
    sentence = tuple(sentence)
    projected_rows = None
    if model.uses_vectors:
        if sentence_vectors is None:
            raise ValueError("model expects per-token vectors for this sentence")
        projected_rows = [project(row, model.projection) for row in sentence_vectors]
    active = [_BeamItem(0.0, initial_state(sentence), ())]
    pool: list[_BeamItem] = []
    cap = action_cap(len(sentence))
    rounds = 0
    while active and len(pool) < beam_size and rounds < cap:
        candidates = [(item.score, item, None) for item in pool]
        for item in active:
            x_front = _front_vector(model, projected_rows, item.state)
            legal, logps = masked_log_probs(model, item.state, x_front)
            for action, logp in zip(legal, logps):
                candidates.append((item.score + float(logp), item, action))
        if len(candidates) == len(pool):
            break  # every active item is dead
        candidates.sort(key=lambda c: -c[0])
        active = []
        pool = []
        for score, item, action in candidates[:beam_size]:
            if action is None:
                pool.append(item)
                continue
            new_item = _BeamItem(score,
                                 apply_action(item.state, action, model.unary_limit),
                                 item.actions + (action,))
            if action == FINISH:
                pool.append(new_item)
            else:
                active.append(new_item)
        rounds += 1
    if pool:
        best = max(pool, key=lambda item: item.score)
        return DecodeResult(best.state.stack[0], best.actions, best.score, False)
    log.warning("beam search did not finish within %d actions; force-completing", cap)
    best = max(active, key=lambda item: item.score) if active \
        else _BeamItem(0.0, initial_state(sentence), ())
    tree = _force_complete(best.state, model.root_label)
    return DecodeResult(tree, best.actions, best.score, True)


def parse_sentence(sentence, model: InOrderModel, beam_size: int | None = None,
                   sentence_vectors=None) -> ParseTree:
    return beam_decode(sentence, model, beam_size, sentence_vectors).tree


@dataclass
class TrainResult:
    model: InOrderModel
    epochs: list
    dev_history: list


def train_inorder(train_trees, dev_trees, config: TrainConfig, seed: int,
                  train_vectors=None, dev_vectors=None,
                  eval_config=DEFAULT_EVAL_CONFIG,
                  unary_limit=DEFAULT_UNARY_LIMIT,
                  beam_size: int = DEFAULT_BEAM_SIZE,
                  projection_dim: int | None = None) -> TrainResult:
    """Cross-entropy over oracle action sequences with teacher forcing.

    The softmax at each state covers legal actions only.  `unary_limit`
    may be "auto" to use the smallest limit admitting every training
    derivation.  Deterministic given the seed."""
    import random as _random

    train_trees = list(train_trees)
    dev_trees = list(dev_trees)
    if not train_trees:
        raise ValueError("empty treebank")
    if unary_limit == "auto":
        unary_limit = required_unary_limit(train_trees)
    labels = {node.label
              for tree in train_trees
              for node in _internal_nodes(tree)}
    actions = action_vocabulary(labels)
    dev_labels = {node.label for tree in dev_trees for node in _internal_nodes(tree)}
    unknown_dev = dev_labels - set(labels)
    if unknown_dev:
        log.warning("dev labels never seen in training cannot be predicted: %s",
                    ", ".join(sorted(unknown_dev)))
    root_label = train_trees[0].label if not train_trees[0].is_leaf else "TOP"
    model = InOrderModel(actions=actions, bits=config.hash_bits,
                         weights=HashedLinear(len(actions), config.hash_bits),
                         unary_limit=unary_limit, beam_size=beam_size,
                         root_label=root_label, seed=seed)
    if train_vectors is not None:
        dim_out = projection_dim or 128
        model.projection = initialize_projection(train_vectors.dim, dim_out, seed)
        model.dense = DenseLinear.zeros(dim_out, len(actions))

    # Teacher forcing visits a fixed state sequence per sentence, so the
    # features and legal sets can be cached up front.
    cached = []
    for index, tree in enumerate(train_trees):
        sentence = tuple(leaves(tree))
        try:
            gold_actions = oracle_actions(tree)
            steps = []
            state = initial_state(sentence)
            for action in gold_actions:
                legal = legal_actions(state, model.pj_labels, unary_limit)
                gold_pos = legal.index(action)
                fv = featurize_state(state, config.hash_bits)
                legal_ids = tuple(model.action_ids[a] for a in legal)
                steps.append((state.buffer_front, fv, legal_ids, gold_pos))
                state = apply_action(state, action, unary_limit)
        except (IllegalActionError, ValueError) as err:
            log.warning("skipping training sentence %d: %s", index, err)
            continue
        cached.append((index, steps))
    if not cached:
        raise ValueError("no training sentence admits an oracle derivation")

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
                parse_sentence(sentence, model, sentence_vectors=vecs), eval_config))
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
            for cache_id in batch:
                sent_id, steps = cached[cache_id]
                rows_in = train_vectors.sentences[sent_id] \
                    if train_vectors is not None else None
                for buffer_front, fv, legal_ids, gold_pos in steps:
                    raw = model.weights.scores(fv)
                    x_front = None
                    if model.dense is not None:
                        if buffer_front < len(rows_in):
                            x_front = project(rows_in[buffer_front], model.projection)
                        else:
                            x_front = np.zeros(model.projection.dim_out)
                        raw = raw + model.dense.scores(x_front)
                    picked = raw[list(legal_ids)]
                    logp = log_softmax(picked)
                    epoch_loss -= logp[gold_pos]
                    grad_picked = np.exp(logp)
                    grad_picked[gold_pos] -= 1.0
                    grad_out = np.zeros(len(model.actions))
                    grad_out[list(legal_ids)] = grad_picked
                    model.weights.accumulate_gradient(fv, grad_out, grad_rows)
                    if model.dense is not None:
                        grad_dense += np.outer(x_front, grad_out)
                        if buffer_front < len(rows_in):
                            dx = model.dense.matrix @ grad_out
                            grad_proj += np.outer(rows_in[buffer_front], dx)
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


def _internal_nodes(tree: ParseTree):
    if not tree.is_leaf:
        yield tree
        for child in tree.children:
            yield from _internal_nodes(child)


def dump_actions(actions) -> str:
    return " ".join(str(a) for a in actions)


def save_inorder_model(model: InOrderModel, path) -> None:
    indices, data = model.weights.to_arrays()
    arrays = {"weight_indices": indices, "weight_rows": data}
    meta = {
        "pj_labels": list(model.pj_labels),
        "bits": model.bits,
        "unary_limit": model.unary_limit,
        "beam_size": model.beam_size,
        "root_label": model.root_label,
        "seed": model.seed,
        "epochs_trained": model.epochs_trained,
        "uses_vectors": model.uses_vectors,
    }
    if model.uses_vectors:
        arrays["projection"] = model.projection.matrix
        arrays["dense"] = model.dense.matrix
    serialize.save_blob(path, "inorder", meta, arrays)


def load_inorder_model(path) -> InOrderModel:
    kind, meta, arrays = serialize.load_blob(path)
    if kind != "inorder":
        raise serialize.ModelFormatError(f"expected an inorder model, found {kind!r}")
    actions = action_vocabulary(meta["pj_labels"])
    weights = HashedLinear.from_arrays(len(actions), meta["bits"],
                                       arrays["weight_indices"],
                                       arrays["weight_rows"])
    model = InOrderModel(actions=actions, bits=meta["bits"], weights=weights,
                         unary_limit=meta["unary_limit"],
                         beam_size=meta["beam_size"],
                         root_label=meta["root_label"], seed=meta["seed"],
                         epochs_trained=meta["epochs_trained"])
    if meta.get("uses_vectors"):
        model.projection = Projection(arrays["projection"])
        model.dense = DenseLinear(arrays["dense"])
    return model
