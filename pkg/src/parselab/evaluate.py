"""Bracketing metrics: labeled P/R/F1, exact match, span-length filtered F1,
and the relative-error statistics used for cross-domain comparisons."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

from .trees import ParseTree, Span, leaves, spans_of

# evalb-style defaults: the root bracket is not scored, punctuation words are
# removed before span indices are computed, and PRT compares equal to ADVP.
DEFAULT_DELETED_LABELS = frozenset({"TOP"})
DEFAULT_DELETED_TAGS = frozenset({"``", "''", ":", ",", ".", "-LRB-", "-RRB-"})
DEFAULT_LABEL_EQUIVALENCES = {"PRT": "ADVP"}


class CorpusAlignmentError(ValueError):
    pass


@dataclass(frozen=True)
class EvalConfig:
    deleted_labels: frozenset = DEFAULT_DELETED_LABELS
    deleted_tags: frozenset = DEFAULT_DELETED_TAGS
    label_equivalences: dict = field(default_factory=lambda: dict(DEFAULT_LABEL_EQUIVALENCES))


DEFAULT_EVAL_CONFIG = EvalConfig()


def parse_eval_params(text: str) -> EvalConfig:
    """Parse the evaluation parameter file format.

    Lines are `delete_label X`, `delete_tag X`, or `equal_label FROM TO`;
    blank lines and `#` comments are ignored.  The defaults are replaced,
    not extended.
    """
    deleted_labels = set()
    deleted_tags = set()
    equivalences = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        key, args = parts[0], parts[1:]
        if key == "delete_label" and len(args) == 1:
            deleted_labels.add(args[0])
        elif key == "delete_tag" and len(args) == 1:
            deleted_tags.add(args[0])
        elif key == "equal_label" and len(args) == 2:
            equivalences[args[0]] = args[1]
        else:
            raise ValueError(f"bad evaluation parameter on line {lineno}: {raw!r}")
    return EvalConfig(frozenset(deleted_labels), frozenset(deleted_tags), equivalences)


def load_eval_params(path) -> EvalConfig:
    with open(path, encoding="utf-8") as handle:
        return parse_eval_params(handle.read())


def eval_brackets(tree: ParseTree, config: EvalConfig = DEFAULT_EVAL_CONFIG) -> Counter:
    """Bracket multiset under the deletion and equivalence rules.

    Span indices are recomputed over the word sequence with deleted-tag words
    removed; brackets that become zero-length disappear.
    """
    words = leaves(tree)
    kept_before = [0] * (len(words) + 1)
    for i, word in enumerate(words):
        kept_before[i + 1] = kept_before[i] + (word.tag not in config.deleted_tags)
    result: Counter = Counter()
    for span, count in spans_of(tree).items():
        if span.label in config.deleted_labels:
            continue
        label = config.label_equivalences.get(span.label, span.label)
        start = kept_before[span.start]
        end = kept_before[span.end]
        if start == end:
            continue
        result[Span(start, end, label)] += count
    return result


@dataclass(frozen=True)
class F1Score:
    precision: float
    recall: float
    f1: float
    matched: int
    gold_count: int
    predicted_count: int

    @property
    def empty(self) -> bool:
        """True when the comparison space had no brackets on either side."""
        return self.gold_count == 0 and self.predicted_count == 0

    @classmethod
    def from_counts(cls, matched: int, gold_count: int, predicted_count: int) -> "F1Score":
        precision = 100.0 * matched / predicted_count if predicted_count > 0 else 0.0
        recall = 100.0 * matched / gold_count if gold_count > 0 else 0.0
        f1 = 0.0
        if precision + recall > 0:
            f1 = 2.0 * precision * recall / (precision + recall)
        return cls(precision, recall, f1, matched, gold_count, predicted_count)


def _check_aligned(gold, predicted):
    if len(gold) != len(predicted):
        raise CorpusAlignmentError(
            f"gold has {len(gold)} sentences but prediction has {len(predicted)}")


def corpus_f1(gold, predicted) -> F1Score:
    """Micro-averaged labeled bracketing F1 over aligned bracket multisets."""
    _check_aligned(gold, predicted)
    matched = gold_count = predicted_count = 0
    for gold_set, pred_set in zip(gold, predicted):
        matched += sum((gold_set & pred_set).values())
        gold_count += sum(gold_set.values())
        predicted_count += sum(pred_set.values())
    return F1Score.from_counts(matched, gold_count, predicted_count)


def exact_match(gold, predicted) -> float:
    """Percentage of sentences whose bracket multisets agree exactly."""
    _check_aligned(gold, predicted)
    if not gold:
        return 0.0
    hits = sum(1 for g, p in zip(gold, predicted) if g == p)
    return 100.0 * hits / len(gold)


def _filter_min_length(sets, min_length: int):
    return [
        Counter({span: n for span, n in s.items() if span.length >= min_length})
        for s in sets
    ]


def f1_min_span_length(gold, predicted, min_length: int) -> F1Score:
    """corpus_f1 after dropping brackets shorter than `min_length` words
    from both sides (lengths measured after punctuation deletion)."""
    if min_length < 0:
        raise ValueError("min_length must be >= 0")
    _check_aligned(gold, predicted)
    return corpus_f1(_filter_min_length(gold, min_length),
                     _filter_min_length(predicted, min_length))


@dataclass(frozen=True)
class GapStat:
    """Relative change in error (error = 100 - F1) against a reference F1."""

    f1_reference: float
    f1_other: float
    delta_err: float


def delta_err(f1_reference: float, f1_other: float) -> GapStat:
    """Relative increase in error versus the reference; negative values mean
    the error went down."""
    if f1_reference >= 100.0:
        raise ValueError("delta_err is undefined for a reference F1 of 100")
    reference_error = 100.0 - f1_reference
    other_error = 100.0 - f1_other
    delta = 100.0 * (other_error - reference_error) / reference_error
    return GapStat(f1_reference, f1_other, delta)


def err_reduction(f1_base: float, f1_augmented: float) -> GapStat:
    """delta_err with a base model as the reference; negative = improvement."""
    return delta_err(f1_base, f1_augmented)
