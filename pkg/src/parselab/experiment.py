"""Experiment orchestration: train one model per seed on a single treebank,
evaluate across several corpora, and emit generalization-gap reports and
span-length curves."""

from __future__ import annotations

import configparser
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path

from . import chart, inorder
from .evaluate import (DEFAULT_EVAL_CONFIG, EvalConfig, F1Score, corpus_f1,
                       delta_err, eval_brackets, exact_match,
                       f1_min_span_length, load_eval_params)
from .training import LrMultipliers, TrainConfig, lr_schedule  # re-exported
from .treebank import NormalizationConfig, load_normalized, write_drop_report
from .trees import leaves
from .vectors import load_vector_table

log = logging.getLogger(__name__)

__all__ = [
    "TrainConfig", "LrMultipliers", "lr_schedule", "ReprOptions",
    "SeedResult", "ExperimentReport", "run_experiment", "span_length_curve",
    "default_curve_lengths", "ExperimentSpec", "load_experiment_spec",
    "load_train_config", "run_experiment_from_spec", "write_report",
    "round_half_up",
]

BASE_VARIANT = "base"
VECTOR_VARIANT = "+vectors"


def round_half_up(value: float, places: int) -> float:
    quantum = Decimal(1).scaleb(-places)
    return float(Decimal(repr(value)).quantize(quantum, rounding=ROUND_HALF_UP))


def span_length_curve(gold, predicted, lengths):
    """F1 restricted to spans of at least L words, for each L; the returned
    scores carry bracket counts so empty-filter points are identifiable."""
    return [(length, f1_min_span_length(gold, predicted, length))
            for length in lengths]


def default_curve_lengths(gold_sets, step: int = 5):
    longest = max((span.length for s in gold_sets for span in s), default=0)
    return list(range(0, longest + 1, step))


class ReprOptions:
    """External-vector options; when `compare_base` is set the experiment
    runs both the plain and the vector-augmented variant and reports the
    error reduction of the upgrade."""

    def __init__(self, train_vectors=None, dev_vectors=None,
                 corpus_vectors=None, compare_base=False, projection_dim=128):
        self.train_vectors = train_vectors
        self.dev_vectors = dev_vectors
        self.corpus_vectors = corpus_vectors or {}
        self.compare_base = compare_base
        self.projection_dim = projection_dim


@dataclass
class SeedResult:
    variant: str
    corpus: str
    seed: int
    f1: F1Score
    exact: float
    curve: list
    fallbacks: int = 0


@dataclass
class ExperimentReport:
    parser_kind: str
    reference_corpus: str
    corpus_names: list
    variants: list
    seeds: list
    rows: list

    def _rows(self, variant: str, corpus: str):
        rows = [r for r in self.rows if r.variant == variant and r.corpus == corpus]
        if not rows:
            raise KeyError(f"no results for ({variant!r}, {corpus!r})")
        return rows

    def seed_f1s(self, variant: str, corpus: str):
        return [r.f1.f1 for r in self._rows(variant, corpus)]

    def mean_f1(self, variant: str, corpus: str) -> float:
        values = self.seed_f1s(variant, corpus)
        return sum(values) / len(values)

    def mean_exact(self, variant: str, corpus: str) -> float:
        rows = self._rows(variant, corpus)
        return sum(r.exact for r in rows) / len(rows)

    def mean_curve(self, variant: str, corpus: str):
        rows = self._rows(variant, corpus)
        lengths = [length for length, _ in rows[0].curve]
        out = []
        for i, length in enumerate(lengths):
            out.append((length, sum(r.curve[i][1].f1 for r in rows) / len(rows)))
        return out

    def delta_err_cell(self, variant: str, corpus: str):
        """Generalization gap versus the reference corpus, computed from the
        rounded mean F1 columns; exactly 0 for the reference itself, None
        when the reference error is zero."""
        if corpus == self.reference_corpus:
            return 0.0
        reference = round_half_up(self.mean_f1(variant, self.reference_corpus), 2)
        if reference >= 100.0:
            return None
        other = round_half_up(self.mean_f1(variant, corpus), 2)
        return round_half_up(delta_err(reference, other).delta_err, 1)

    def err_reduction_cell(self, corpus: str):
        """Error reduction of the vector-augmented variant over the base
        variant on the same corpus; None when not comparable."""
        if BASE_VARIANT not in self.variants or VECTOR_VARIANT not in self.variants:
            return None
        base = round_half_up(self.mean_f1(BASE_VARIANT, corpus), 2)
        if base >= 100.0:
            return None
        other = round_half_up(self.mean_f1(VECTOR_VARIANT, corpus), 2)
        return round_half_up(delta_err(base, other).delta_err, 1)


def _parse_corpus(parser_kind: str, model, trees, vectors, beam_size,
                  eval_config: EvalConfig):
    predicted = []
    fallbacks = 0
    for i, tree in enumerate(trees):
        sentence = tuple(leaves(tree))
        rows = vectors.sentences[i] if vectors is not None else None
        if parser_kind == "chart":
            parsed = chart.parse_sentence(sentence, model, rows)
        else:
            result = inorder.beam_decode(sentence, model, beam_size, rows)
            parsed = result.tree
            fallbacks += result.fallback
        predicted.append(eval_brackets(parsed, eval_config))
    return predicted, fallbacks


def _train_one(parser_kind: str, train_trees, dev_trees, config, seed,
               train_vectors, dev_vectors, projection_dim,
               unary_limit, beam_size, eval_config):
    if parser_kind == "chart":
        return chart.train_chart(
            train_trees, dev_trees, config, seed,
            train_vectors=train_vectors, dev_vectors=dev_vectors,
            eval_config=eval_config, projection_dim=projection_dim).model
    return inorder.train_inorder(
        train_trees, dev_trees, config, seed,
        train_vectors=train_vectors, dev_vectors=dev_vectors,
        eval_config=eval_config, unary_limit=unary_limit,
        beam_size=beam_size, projection_dim=projection_dim).model


def run_experiment(train_trees, dev_trees, corpora, reference: str,
                   parser_kind: str, repr_options: ReprOptions | None,
                   config: TrainConfig, *,
                   unary_limit=inorder.DEFAULT_UNARY_LIMIT,
                   beam_size: int = inorder.DEFAULT_BEAM_SIZE,
                   eval_config: EvalConfig = DEFAULT_EVAL_CONFIG,
                   curve_step: int = 5,
                   parallel_seeds: bool = False,
                   out_dir=None) -> ExperimentReport:
    """Full protocol: one model per seed, evaluation on every corpus, mean
    aggregation, generalization gaps against `reference`, and error
    reduction when two representation variants are compared.

    `corpora` is an ordered list of (name, trees); `reference` must name one
    of them.  A failing seed aborts the run after dumping partial results to
    `out_dir` (when given).
    """
    if parser_kind not in ("chart", "inorder"):
        raise ValueError(f"unknown parser kind {parser_kind!r}")
    corpora = list(corpora)
    names = [name for name, _ in corpora]
    if reference not in names:
        raise ValueError(f"reference corpus {reference!r} is not among {names}")
    repr_options = repr_options or ReprOptions()
    variants = []
    if repr_options.train_vectors is None or repr_options.compare_base:
        variants.append(BASE_VARIANT)
    if repr_options.train_vectors is not None:
        variants.append(VECTOR_VARIANT)

    gold_sets = {name: [eval_brackets(t, eval_config) for t in trees]
                 for name, trees in corpora}
    curve_lengths = {name: default_curve_lengths(gold_sets[name], curve_step)
                     for name in names}

    rows: list[SeedResult] = []

    def evaluate(variant, seed, model, uses_vectors):
        for name, trees in corpora:
            vectors = repr_options.corpus_vectors.get(name) \
                if uses_vectors else None
            predicted, fallbacks = _parse_corpus(
                parser_kind, model, trees, vectors, beam_size, eval_config)
            f1 = corpus_f1(gold_sets[name], predicted)
            em = exact_match(gold_sets[name], predicted)
            curve = span_length_curve(gold_sets[name], predicted,
                                      curve_lengths[name])
            rows.append(SeedResult(variant, name, seed, f1, em,
                                   curve, fallbacks))
        log.info("%s seed %d done (%s)", variant, seed, parser_kind)

    try:
        for variant in variants:
            uses_vectors = variant == VECTOR_VARIANT
            train_vecs = repr_options.train_vectors if uses_vectors else None
            dev_vecs = repr_options.dev_vectors if uses_vectors else None
            train_args = [
                (parser_kind, train_trees, dev_trees, config, seed,
                 train_vecs, dev_vecs, repr_options.projection_dim,
                 unary_limit, beam_size, eval_config)
                for seed in config.seeds]
            if parallel_seeds and len(config.seeds) > 1:
                with ProcessPoolExecutor(max_workers=len(config.seeds)) as pool:
                    models = list(pool.map(_train_one_star, train_args))
                for seed, model in zip(config.seeds, models):
                    evaluate(variant, seed, model, uses_vectors)
            else:
                # train and evaluate seed by seed so an aborted run still
                # dumps every completed seed
                for args in train_args:
                    model = _train_one(*args)
                    evaluate(variant, args[4], model, uses_vectors)
    except Exception as err:
        report = ExperimentReport(parser_kind, reference, names, variants,
                                  list(config.seeds), rows)
        if out_dir is not None:
            _dump_partial(report, Path(out_dir))
        raise RuntimeError(f"experiment aborted: {err}") from err
    return ExperimentReport(parser_kind, reference, names, variants,
                            list(config.seeds), rows)


def _train_one_star(args):
    return _train_one(*args)


def _dump_partial(report: ExperimentReport, out_dir: Path):
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "partial-scores.tsv"
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(_scores_tsv(report, partial=True))
    log.error("partial results dumped to %s", path)


_SCORE_COLUMNS = ["variant", "corpus", "seed", "precision", "recall", "f1",
                  "exact_match", "matched", "gold_brackets",
                  "predicted_brackets", "delta_err", "err_reduction",
                  "fallbacks"]


def _fmt(value, places):
    if value is None:
        return ""
    return f"{round_half_up(value, places):.{places}f}"


def _scores_tsv(report: ExperimentReport, partial: bool = False) -> str:
    lines = ["\t".join(_SCORE_COLUMNS)]

    def emit(variant, corpus, seed_label, f1s, exact, matched, gold, predicted,
             delta, reduction, fallbacks):
        lines.append("\t".join([
            variant, corpus, seed_label,
            _fmt(f1s[0], 2), _fmt(f1s[1], 2), _fmt(f1s[2], 2), _fmt(exact, 2),
            matched, gold, predicted,
            _fmt(delta, 1), _fmt(reduction, 1), str(fallbacks)]))

    for variant in report.variants:
        for corpus in report.corpus_names:
            try:
                rows = report._rows(variant, corpus)
            except KeyError:
                if partial:
                    continue
                raise
            for row in rows:
                emit(variant, corpus, str(row.seed),
                     (row.f1.precision, row.f1.recall, row.f1.f1), row.exact,
                     str(row.f1.matched), str(row.f1.gold_count),
                     str(row.f1.predicted_count), None, None, row.fallbacks)
            if partial and len(rows) < len(report.seeds):
                continue
            mean_p = sum(r.f1.precision for r in rows) / len(rows)
            mean_r = sum(r.f1.recall for r in rows) / len(rows)
            delta = report.delta_err_cell(variant, corpus) if not partial else None
            reduction = report.err_reduction_cell(corpus) \
                if not partial and variant == VECTOR_VARIANT else None
            emit(variant, corpus, "mean",
                 (mean_p, mean_r, report.mean_f1(variant, corpus)),
                 report.mean_exact(variant, corpus), "", "", "",
                 delta, reduction,
                 sum(r.fallbacks for r in rows))
    return "\n".join(lines) + "\n"


_CURVE_COLUMNS = ["variant", "corpus", "seed", "min_span_length",
                  "f1", "matched", "gold_brackets", "predicted_brackets"]


def _curves_tsv(report: ExperimentReport) -> str:
    lines = ["\t".join(_CURVE_COLUMNS)]
    for variant in report.variants:
        for corpus in report.corpus_names:
            rows = report._rows(variant, corpus)
            for row in rows:
                for length, score in row.curve:
                    lines.append("\t".join([
                        variant, corpus, str(row.seed), str(length),
                        _fmt(score.f1, 2), str(score.matched),
                        str(score.gold_count), str(score.predicted_count)]))
            for length, mean_f1 in report.mean_curve(variant, corpus):
                lines.append("\t".join([
                    variant, corpus, "mean", str(length),
                    _fmt(mean_f1, 2), "", "", ""]))
    return "\n".join(lines) + "\n"


def _report_text(report: ExperimentReport) -> str:
    out = []
    out.append(f"parser: {report.parser_kind}")
    out.append(f"reference corpus: {report.reference_corpus}")
    out.append(f"seeds: {', '.join(str(s) for s in report.seeds)}")
    out.append("")
    width = max(len(c) for c in report.corpus_names) + 2

    out.append("F1 and generalization gap (mean over seeds)")
    header = "".ljust(width)
    for variant in report.variants:
        header += f"{variant:>12} {'dErr':>9}"
    out.append(header)
    for corpus in report.corpus_names:
        line = corpus.ljust(width)
        for variant in report.variants:
            f1 = _fmt(report.mean_f1(variant, corpus), 2)
            delta = report.delta_err_cell(variant, corpus)
            cell = "undef" if delta is None else f"{delta:+.1f}%"
            line += f"{f1:>12} {cell:>9}"
        out.append(line)
    out.append("")

    if BASE_VARIANT in report.variants and VECTOR_VARIANT in report.variants:
        out.append("error reduction from external vectors")
        for corpus in report.corpus_names:
            cell = report.err_reduction_cell(corpus)
            text = "undef" if cell is None else f"{cell:+.1f}%"
            out.append(f"{corpus.ljust(width)}{text:>10}")
        out.append("")

    out.append("exact match (mean over seeds)")
    header = "".ljust(width)
    for variant in report.variants:
        header += f"{variant:>12}"
    out.append(header)
    for corpus in report.corpus_names:
        line = corpus.ljust(width)
        for variant in report.variants:
            line += f"{_fmt(report.mean_exact(variant, corpus), 2):>12}"
        out.append(line)
    out.append("")

    out.append("F1 by minimum span length (mean over seeds)")
    for variant in report.variants:
        for corpus in report.corpus_names:
            points = " ".join(
                f"{length}:{_fmt(value, 2)}"
                for length, value in report.mean_curve(variant, corpus))
            out.append(f"{variant} {corpus}: {points}")
    out.append("")
    return "\n".join(out)


def write_report(report: ExperimentReport, out_dir) -> dict:
    """Write scores.tsv, curves.tsv, and report.txt; byte-identical for
    identical inputs."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "scores": out_dir / "scores.tsv",
        "curves": out_dir / "curves.tsv",
        "text": out_dir / "report.txt",
    }
    paths["scores"].write_text(_scores_tsv(report), encoding="utf-8")
    paths["curves"].write_text(_curves_tsv(report), encoding="utf-8")
    paths["text"].write_text(_report_text(report), encoding="utf-8")
    return paths


@dataclass
class ExperimentSpec:
    """Parsed experiment configuration file."""

    train_path: str
    dev_path: str
    reference: str
    corpora: list                 # ordered (name, path), reference first
    parser_kind: str
    root_label: str
    hash_bits: int
    unary_limit: object   # positive int or "auto"
    beam_size: int
    train_config: TrainConfig
    eval_params_path: str | None
    curve_step: int
    vectors: dict                 # {"train": path, "dev": path, name: path}
    compare_base: bool
    projection_dim: int


def _parse_named_paths(raw: str):
    items = []
    for chunk in raw.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        if ":" not in chunk:
            raise ValueError(f"corpus entry {chunk!r} is not name:path")
        name, path = chunk.split(":", 1)
        items.append((name.strip(), path.strip()))
    return items


def _get(section, key, default, convert):
    raw = section.get(key)
    return default if raw is None else convert(raw)


def _unary_limit_value(raw):
    raw = raw.strip()
    return "auto" if raw == "auto" else int(raw)


def _config_from_sections(training_sec, parser_sec) -> TrainConfig:
    seeds_raw = training_sec.get("seeds")
    seeds = tuple(int(s) for s in seeds_raw.split(",")) if seeds_raw \
        else TrainConfig().seeds
    return TrainConfig(
        batch_size=_get(training_sec, "batch_size", 32, int),
        beta1=_get(training_sec, "beta1", 0.9, float),
        beta2=_get(training_sec, "beta2", 0.999, float),
        decoder_lr=_get(training_sec, "decoder_lr", 1e-3, float),
        projection_lr=_get(training_sec, "projection_lr", 2e-5, float),
        patience=_get(training_sec, "patience", 2, int),
        lr_decay=_get(training_sec, "lr_decay", 0.5, float),
        warmup_updates=_get(training_sec, "warmup_updates", 160, int),
        max_epochs=_get(training_sec, "max_epochs", 20, int),
        seeds=seeds,
        hash_bits=_get(parser_sec, "hash_bits", 22, int),
    )


def load_experiment_spec(path) -> ExperimentSpec:
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise FileNotFoundError(path)
    corpora_sec = parser["corpora"]
    reference_entries = _parse_named_paths(corpora_sec["reference"])
    if len(reference_entries) != 1:
        raise ValueError("exactly one reference corpus is required")
    corpora = reference_entries + _parse_named_paths(corpora_sec.get("eval", ""))

    parser_sec = parser["parser"] if parser.has_section("parser") else {}
    training_sec = parser["training"] if parser.has_section("training") else {}
    repr_sec = parser["representation"] if parser.has_section("representation") else {}
    eval_sec = parser["evaluation"] if parser.has_section("evaluation") else {}

    config = _config_from_sections(training_sec, parser_sec)
    vectors = {}
    for key in repr_sec:
        if key.startswith("vectors_"):
            vectors[key[len("vectors_"):]] = repr_sec[key]
    return ExperimentSpec(
        train_path=corpora_sec["train"],
        dev_path=corpora_sec["dev"],
        reference=reference_entries[0][0],
        corpora=corpora,
        parser_kind=_get(parser_sec, "kind", "chart", str),
        root_label=_get(parser_sec, "root_label", "TOP", str),
        hash_bits=config.hash_bits,
        unary_limit=_get(parser_sec, "unary_limit",
                         inorder.DEFAULT_UNARY_LIMIT, _unary_limit_value),
        beam_size=_get(parser_sec, "beam_size", inorder.DEFAULT_BEAM_SIZE, int),
        train_config=config,
        eval_params_path=eval_sec.get("params"),
        curve_step=_get(eval_sec, "curve_step", 5, int),
        vectors=vectors,
        compare_base=_get(repr_sec, "compare_base", False,
                          lambda raw: raw.strip().lower() in ("1", "true", "yes")),
        projection_dim=_get(repr_sec, "projection_dim", 128, int),
    )


def load_train_config(path):
    """Read TrainConfig fields (and parser options) from a config file that
    has a [training] and/or [parser] section; missing keys default."""
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise FileNotFoundError(path)
    training_sec = parser["training"] if parser.has_section("training") else {}
    parser_sec = parser["parser"] if parser.has_section("parser") else {}
    config = _config_from_sections(training_sec, parser_sec)
    options = {
        "kind": _get(parser_sec, "kind", None, str),
        "root_label": _get(parser_sec, "root_label", "TOP", str),
        "unary_limit": _get(parser_sec, "unary_limit",
                            inorder.DEFAULT_UNARY_LIMIT, _unary_limit_value),
        "beam_size": _get(parser_sec, "beam_size", inorder.DEFAULT_BEAM_SIZE, int),
        "projection_dim": _get(parser_sec, "projection_dim", 128, int),
    }
    return config, options


def run_experiment_from_spec(spec: ExperimentSpec, out_dir,
                             parallel_seeds: bool = False):
    """Load the corpora and vector tables a parsed config file names, run
    the experiment, and write the report files."""
    norm = NormalizationConfig(root_label=spec.root_label)
    train_trees, dropped = load_normalized(spec.train_path, norm)
    dev_trees, dev_dropped = load_normalized(spec.dev_path, norm)
    dropped += dev_dropped
    corpora = []
    for name, path in spec.corpora:
        trees, corpus_dropped = load_normalized(path, norm)
        if corpus_dropped:
            log.warning("%d sentences dropped from %s", len(corpus_dropped), name)
        dropped += corpus_dropped
        corpora.append((name, list(trees)))
    if dropped:
        out_path = Path(out_dir)
        out_path.mkdir(parents=True, exist_ok=True)
        write_drop_report(dropped, out_path / "drops.tsv")
    eval_config = load_eval_params(spec.eval_params_path) \
        if spec.eval_params_path else DEFAULT_EVAL_CONFIG

    repr_options = None
    if spec.vectors:
        def table_for(key, trees):
            tokens = [[w.form for w in leaves(t)] for t in trees]
            return load_vector_table(spec.vectors[key], tokens)

        corpus_vectors = {name: table_for(name, trees)
                          for name, trees in corpora if name in spec.vectors}
        repr_options = ReprOptions(
            train_vectors=table_for("train", list(train_trees)),
            dev_vectors=table_for("dev", list(dev_trees)),
            corpus_vectors=corpus_vectors,
            compare_base=spec.compare_base,
            projection_dim=spec.projection_dim)

    report = run_experiment(
        list(train_trees), list(dev_trees), corpora, spec.reference,
        spec.parser_kind, repr_options, spec.train_config,
        unary_limit=spec.unary_limit, beam_size=spec.beam_size,
        eval_config=eval_config, curve_step=spec.curve_step,
        parallel_seeds=parallel_seeds, out_dir=out_dir)
    write_report(report, out_dir)
    return report
