"""parselab: span-chart and in-order shift-reduce constituency parsers with
cross-domain treebank evaluation."""

from .trees import (CollapsedLabel, ParseTree, Span, Word, branch,
                    collapse_unaries, expand_unaries, leaf, leaves, spans_of)
from .treebank import (NormalizationConfig, RawTreebank, normalize,
                       normalize_treebank, read_bracketed, write_bracketed)
from .evaluate import (EvalConfig, F1Score, GapStat, corpus_f1, delta_err,
                       err_reduction, eval_brackets, exact_match,
                       f1_min_span_length)
from .training import TrainConfig, lr_schedule

__version__ = "0.1.0"
