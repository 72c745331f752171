"""Command-line interface: train, parse, eval, oracle, run-experiment,
report.

Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.
Tagged-sentence input uses `form_tag` tokens with backslash escaping for
literal underscores and backslashes.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import chart, inorder, serialize
from .evaluate import (DEFAULT_EVAL_CONFIG, corpus_f1, exact_match,
                       eval_brackets, f1_min_span_length, load_eval_params)
from .experiment import (default_curve_lengths, load_experiment_spec,
                         load_train_config, run_experiment_from_spec,
                         round_half_up, span_length_curve)
from .treebank import (NormalizationConfig, format_tree, load_normalized,
                       write_drop_report)
from .trees import Word, leaves
from .vectors import VectorAlignmentError, load_vector_table

log = logging.getLogger(__name__)


class CliError(Exception):
    def __init__(self, message, code=2):
        super().__init__(message)
        self.code = code


def _require_file(path, what) -> Path:
    path = Path(path)
    if not path.is_file():
        raise CliError(f"{what} {path} does not exist")
    return path


def unescape_token_text(text: str) -> str:
    out = []
    i = 0
    while i < len(text):
        if text[i] == "\\" and i + 1 < len(text) and text[i + 1] in "\\_":
            out.append(text[i + 1])
            i += 2
        else:
            out.append(text[i])
            i += 1
    return "".join(out)


def escape_token_text(text: str) -> str:
    return text.replace("\\", "\\\\").replace("_", "\\_")


def parse_tagged_token(token: str) -> Word:
    """Split `form_tag` at the last unescaped underscore."""
    split_at = None
    for i in range(len(token) - 1, -1, -1):
        if token[i] != "_":
            continue
        backslashes = 0
        j = i - 1
        while j >= 0 and token[j] == "\\":
            backslashes += 1
            j -= 1
        if backslashes % 2 == 0:
            split_at = i
            break
    if split_at is None or split_at == 0 or split_at == len(token) - 1:
        raise ValueError(f"token {token!r} is not of the form word_tag")
    return Word(unescape_token_text(token[:split_at]),
                unescape_token_text(token[split_at + 1:]))


def read_tagged_sentences(path):
    sentences = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                sentences.append(tuple(parse_tagged_token(t)
                                       for t in line.split()))
            except ValueError as err:
                raise CliError(f"{path}: line {lineno}: {err}")
    return sentences


def load_model(path):
    kind, _, _ = serialize.load_blob(path)
    if kind == "chart":
        return chart.load_chart_model(path)
    if kind == "inorder":
        return inorder.load_inorder_model(path)
    raise CliError(f"unknown model kind {kind!r} in {path}")


def _load_vectors_checked(path, sentences, corpus_name):
    tokens = [[w.form for w in sentence] for sentence in sentences]
    try:
        return load_vector_table(path, tokens)
    except VectorAlignmentError as err:
        raise CliError(f"vector table {path} is not aligned with corpus "
                       f"{corpus_name}: {err}")


def _cmd_train(args) -> int:
    _require_file(args.train, "training treebank")
    _require_file(args.dev, "development treebank")
    _require_file(args.config, "config file")
    if args.vectors:
        _require_file(args.vectors, "vector table")
    config, options = load_train_config(args.config)
    kind = args.parser or options["kind"]
    if kind not in ("chart", "inorder"):
        raise CliError(f"unknown parser kind {kind!r}; use --parser")
    norm = NormalizationConfig(root_label=options["root_label"])
    train_trees, train_dropped = load_normalized(args.train, norm)
    dev_trees, dev_dropped = load_normalized(args.dev, norm)
    if not len(train_trees):
        raise CliError(f"training treebank {args.train} is empty")
    dropped = train_dropped + dev_dropped
    if dropped:
        write_drop_report(dropped, str(args.out) + ".drops")
    train_vectors = dev_vectors = None
    if args.vectors:
        train_vectors = _load_vectors_checked(
            args.vectors, [leaves(t) for t in train_trees], args.train)
        if args.dev_vectors:
            dev_vectors = _load_vectors_checked(
                args.dev_vectors, [leaves(t) for t in dev_trees], args.dev)
        else:
            raise CliError("--dev-vectors is required when --vectors is given")
    if kind == "chart":
        result = chart.train_chart(
            list(train_trees), list(dev_trees), config, args.seed,
            train_vectors=train_vectors, dev_vectors=dev_vectors,
            projection_dim=options["projection_dim"])
        chart.save_chart_model(result.model, args.out)
    else:
        result = inorder.train_inorder(
            list(train_trees), list(dev_trees), config, args.seed,
            train_vectors=train_vectors, dev_vectors=dev_vectors,
            unary_limit=options["unary_limit"], beam_size=options["beam_size"],
            projection_dim=options["projection_dim"])
        inorder.save_inorder_model(result.model, args.out)
    log_path = Path(str(args.out) + ".log")
    with open(log_path, "w", encoding="utf-8") as handle:
        for stats in result.epochs:
            handle.write(
                f"epoch {stats.epoch}\tloss {stats.loss:.4f}\t"
                f"dev_f1 {stats.dev_f1:.2f}\twarmup {stats.warmup_multiplier:.4f}\t"
                f"plateau {stats.plateau_multiplier:.4f}\n")
    best = max((s.dev_f1 for s in result.epochs), default=0.0)
    print(f"wrote {args.out} (best dev F1 {best:.2f}); log: {log_path}")
    return 0


def _cmd_parse(args) -> int:
    _require_file(args.model, "model file")
    _require_file(args.input, "input file")
    model = load_model(args.model)
    sentences = read_tagged_sentences(args.input)
    vectors = None
    if getattr(model, "uses_vectors", False):
        if not args.vectors:
            raise CliError("this model needs --vectors with a table aligned "
                           "to the input")
        vectors = _load_vectors_checked(args.vectors, sentences, args.input)
    lines = []
    for i, sentence in enumerate(sentences):
        rows = vectors.sentences[i] if vectors is not None else None
        if isinstance(model, chart.ChartModel):
            tree = chart.parse_sentence(sentence, model, rows)
        else:
            tree = inorder.parse_sentence(sentence, model, args.beam, rows)
        lines.append(format_tree(tree))
    output = "\n".join(lines) + ("\n" if lines else "")
    if args.out:
        Path(args.out).write_text(output, encoding="utf-8")
    else:
        sys.stdout.write(output)
    return 0


def _load_bracket_sets(path, eval_config):
    trees, dropped = load_normalized(path)
    if dropped:
        log.warning("%d sentences dropped from %s", len(dropped), path)
    return [eval_brackets(t, eval_config) for t in trees]


def _cmd_eval(args) -> int:
    _require_file(args.gold, "gold file")
    _require_file(args.pred, "prediction file")
    eval_config = DEFAULT_EVAL_CONFIG
    if args.params:
        eval_config = load_eval_params(_require_file(args.params, "parameter file"))
    gold = _load_bracket_sets(args.gold, eval_config)
    pred = _load_bracket_sets(args.pred, eval_config)
    if len(gold) != len(pred):
        raise CliError(f"sentence count mismatch: {len(gold)} gold vs "
                       f"{len(pred)} predicted")
    if args.min_span:
        score = f1_min_span_length(gold, pred, args.min_span)
        print(f"min_span_length\t{args.min_span}")
    else:
        score = corpus_f1(gold, pred)
    print(f"precision\t{round_half_up(score.precision, 2):.2f}")
    print(f"recall\t{round_half_up(score.recall, 2):.2f}")
    print(f"f1\t{round_half_up(score.f1, 2):.2f}")
    print(f"matched\t{score.matched}")
    print(f"gold_brackets\t{score.gold_count}")
    print(f"predicted_brackets\t{score.predicted_count}")
    if score.empty:
        print("empty\ttrue")
    if args.exact_match:
        print(f"exact_match\t{round_half_up(exact_match(gold, pred), 2):.2f}")
    if args.curve:
        lengths = default_curve_lengths(gold, step=args.curve_step)
        points = " ".join(
            f"{length}:{round_half_up(point.f1, 2):.2f}"
            for length, point in span_length_curve(gold, pred, lengths))
        print(f"curve\t{points}")
    return 0


def _cmd_oracle(args) -> int:
    _require_file(args.treebank, "treebank file")
    trees, dropped = load_normalized(args.treebank)
    violations = 0
    lines = []
    for index, tree in enumerate(trees):
        try:
            actions = inorder.oracle_actions(tree)
            rebuilt = inorder.execute(actions, leaves(tree), args.unary_limit)
            if rebuilt != tree:
                raise ValueError("oracle round-trip mismatch")
        except (inorder.IllegalActionError, ValueError) as err:
            print(f"sentence {index}: {err}", file=sys.stderr)
            violations += 1
            continue
        lines.append(inorder.dump_actions(actions))
    Path(args.out).write_text("".join(line + "\n" for line in lines),
                              encoding="utf-8")
    print(f"wrote {len(lines)} derivations to {args.out}; "
          f"{violations} violations; {len(dropped)} dropped")
    return 0


def _cmd_run_experiment(args) -> int:
    _require_file(args.config, "experiment config")
    try:
        spec = load_experiment_spec(args.config)
    except (KeyError, ValueError) as err:
        raise CliError(f"bad experiment config {args.config}: {err}")
    report = run_experiment_from_spec(spec, args.out,
                                      parallel_seeds=args.parallel_seeds)
    print((Path(args.out) / "report.txt").read_text(encoding="utf-8"))
    print(f"report files written to {args.out}")
    return 0


def _cmd_report(args) -> int:
    _require_file(args.scores, "scores file")
    with open(args.scores, encoding="utf-8") as handle:
        rows = [line.rstrip("\n").split("\t") for line in handle]
    if not rows or rows[0][0] != "variant":
        raise CliError(f"{args.scores} is not a scores.tsv file")
    header = rows[0]
    mean_rows = [row for row in rows[1:] if len(row) == len(header)
                 and row[2] == "mean"]
    columns = ["variant", "corpus", "f1", "exact_match", "delta_err",
               "err_reduction"]
    indices = [header.index(c) for c in columns]
    widths = [max(len(c), max((len(r[i]) for r in mean_rows), default=0)) + 2
              for c, i in zip(columns, indices)]
    print("".join(c.ljust(w) for c, w in zip(columns, widths)))
    for row in mean_rows:
        print("".join((row[i] or "-").ljust(w) for i, w in zip(indices, widths)))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="parselab",
        description="constituency parsing laboratory")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a parser on a treebank")
    p.add_argument("--parser", choices=["chart", "inorder"])
    p.add_argument("--train", required=True)
    p.add_argument("--dev", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--vectors")
    p.add_argument("--dev-vectors")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("parse", help="parse tagged sentences with a model")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--beam", type=int, default=None,
                   help="beam size (in-order models only; chart ignores it)")
    p.add_argument("--vectors")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_parse)

    p = sub.add_parser("eval", help="score predictions against gold trees")
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--params")
    p.add_argument("--min-span", type=int, default=0)
    p.add_argument("--exact-match", action="store_true")
    p.add_argument("--curve", action="store_true",
                   help="also print F1 by minimum span length")
    p.add_argument("--curve-step", type=int, default=5)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("oracle", help="dump in-order oracle action sequences")
    p.add_argument("--treebank", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--unary-limit", type=int,
                   default=inorder.DEFAULT_UNARY_LIMIT)
    p.set_defaults(func=_cmd_oracle)

    p = sub.add_parser("run-experiment",
                       help="run the full multi-corpus protocol")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--parallel-seeds", action="store_true")
    p.set_defaults(func=_cmd_run_experiment)

    p = sub.add_parser("report", help="pretty-print a scores.tsv report")
    p.add_argument("--scores", required=True)
    p.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as err:
        print(f"error: {err}", file=sys.stderr)
        return err.code
    except Exception as err:  # runtime failure
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
