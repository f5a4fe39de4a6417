"""Command-line interface: preprocess -> build-graphs -> train -> evaluate.

Every option can also come from a `key = value` config file (one section per
subcommand, section name = command name); precedence is flag > config file >
built-in default.  Each training run writes a self-contained directory with
the fully resolved config, the checkpoint, the epoch log, and the top-word
lists, so a run can be reproduced from its own artifacts.

Exit codes: 0 success; 2 configuration or contract errors (also argparse
usage errors); 3 data/I-O errors; 4 numeric divergence.  stdout carries data
tables only; diagnostics go to stderr.
"""
from __future__ import annotations

import argparse
import configparser
import logging
import os
import sys
import time
from dataclasses import dataclass

import numpy as np

from .corpus import (
    PreprocessOptions,
    Vocabulary,
    build_corpus,
    load_corpus,
    load_labels,
    load_texts,
    save_vocabulary,
)
from .docgraph import build_all_graphs, graph_density_report, load_graph_store, validate_delta
from .downstream import SvmConfig, evaluate_accuracy, export_theta, save_classifier, train_classifier
from .embedding import load_embeddings
from .errors import ConfigError, ContractError, DataError, GinopicError, NumericsError, ShapeError
from .gin import GinConfig
from .metrics import (
    build_cooccurrence,
    cv,
    irbo,
    load_topics,
    npmi,
    save_topics,
    token_documents,
    wi_c,
    wi_m,
    write_metrics_report,
)
from .presets import get_preset
from .topicmodel import (
    TrainConfig,
    infer_theta,
    load_checkpoint,
    save_checkpoint,
    save_history,
    top_words,
    train,
)

log = logging.getLogger("ginopic")


# ---------------------------------------------------------------------------
# Option plumbing: flag > config file > default
# ---------------------------------------------------------------------------

def _bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {raw!r}")


def _floats(raw: str) -> tuple:
    try:
        return tuple(float(x) for x in raw.split(",") if x.strip() != "")
    except ValueError as e:
        raise ConfigError(f"expected comma-separated numbers, got {raw!r}") from e


@dataclass(frozen=True)
class Opt:
    flag: str
    conv: object = str          # str -> value; _bool means store_true flag
    default: object = None
    required: bool = False
    help: str = ""

    @property
    def dest(self) -> str:
        return self.flag.lstrip("-").replace("-", "_")


def _add_opts(parser: argparse.ArgumentParser, opts) -> None:
    for o in opts:
        if o.conv is _bool:
            parser.add_argument(o.flag, dest=o.dest, action="store_const", const=True,
                                default=None, help=o.help)
        else:
            parser.add_argument(o.flag, dest=o.dest, type=str, default=None, help=o.help)


def _resolve(args, opts, section: str, config: configparser.ConfigParser | None):
    """Merge CLI values, config-file values, and defaults into a namespace."""
    out = argparse.Namespace()
    for o in opts:
        raw = getattr(args, o.dest)
        if raw is None and config is not None and config.has_option(section, o.dest):
            raw = config.get(section, o.dest)
        if raw is None:
            value = o.default
        elif isinstance(raw, str):
            try:
                value = o.conv(raw)
            except (ValueError, TypeError) as e:
                raise ConfigError(f"bad value for {o.flag}: {raw!r}") from e
        else:
            value = raw
        if value is None and o.required:
            raise ConfigError(
                f"missing required option {o.flag} (see `ginopic {section} --help`)"
            )
        setattr(out, o.dest, value)
    return out


def _load_config(path) -> configparser.ConfigParser:
    parser = configparser.ConfigParser()
    try:
        with open(path, "r", encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as e:
        raise DataError(f"cannot read config file: {e}", path=path) from e
    except configparser.Error as e:
        raise ConfigError(f"malformed config file {path}: {e}") from e
    return parser


def _write_config_ini(path, section: str, values: dict) -> None:
    parser = configparser.ConfigParser()
    parser[section] = {
        k: ("" if v is None else str(v)) for k, v in sorted(values.items())
    }
    with open(path, "w", encoding="utf-8") as fh:
        parser.write(fh)


def _emit(*cells) -> None:
    print("\t".join(str(c) for c in cells))


# ---------------------------------------------------------------------------
# Option tables
# ---------------------------------------------------------------------------

_PREPROCESS_OPTS = [
    Opt("--input", str, required=True, help="raw text, one document per line"),
    Opt("--labels", str, help="labels aligned with --input, one per line"),
    Opt("--stopwords", str, help="stopword list, one word per line"),
    Opt("--max-vocab", int, 2000, help="keep the most frequent N words"),
    Opt("--min-word-len", int, 3, help="drop shorter words"),
    Opt("--min-doc-len", int, 3, help="drop shorter documents"),
    Opt("--no-lemmatize", _bool, False, help="skip lemmatization"),
    Opt("--ratios", _floats, (0.70, 0.15, 0.15), help="train,validation,test fractions"),
    Opt("--seed", int, 0, help="split shuffling seed"),
    Opt("--out", str, required=True, help="corpus cache file to write"),
]

_BUILD_GRAPHS_OPTS = [
    Opt("--corpus", str, required=True, help="corpus cache from `preprocess`"),
    Opt("--embeddings", str, required=True, help="word embeddings (text or binary)"),
    Opt("--delta", float, help="similarity threshold in [0, 1]"),
    Opt("--preset", str, "custom", help="dataset preset supplying delta (20ng|bbc|ss|bio|so|custom)"),
    Opt("--seed", int, 0, help="seed for out-of-vocabulary embedding fill"),
    Opt("--out", str, required=True, help="graph cache file to write"),
]

_TRAIN_OPTS = [
    Opt("--corpus", str, required=True),
    Opt("--graphs", str, help="graph cache (required unless --delta-sweep)"),
    Opt("--embeddings", str, help="embeddings (delta-sweep mode only)"),
    Opt("--preset", str, "custom", help="dataset preset for network dimensions"),
    Opt("--topics", int, help="topic count K (default: the corpus label count)"),
    Opt("--tau", int, help="input node-feature dim"),
    Opt("--hidden", int, help="GIN MLP hidden width"),
    Opt("--tau-out", int, help="output node-feature dim"),
    Opt("--gin-layers", int, help="number of GIN layers (>= 2)"),
    Opt("--mlp-hidden-layers", int, help="hidden layers per GIN MLP"),
    Opt("--epsilon", float, 0.0, help="GIN self-loop weight offset"),
    Opt("--encoder-hidden", int, 100),
    Opt("--encoder-layers", int, 1),
    Opt("--dropout", float, 0.2),
    Opt("--alpha", float, help="Dirichlet concentration (default 1/K)"),
    Opt("--lr", float, 2e-3),
    Opt("--batch-size", int, 64),
    Opt("--epochs", int, 50),
    Opt("--seed", int, 0),
    Opt("--seeds", int, help="train N runs with seeds seed..seed+N-1"),
    Opt("--topic-counts", str, help="comma list of topic counts, `gold` = label count"),
    Opt("--delta-sweep", _floats, help="comma list of deltas; rebuilds graphs per delta"),
    Opt("--out", str, required=True, help="run directory"),
]

_EVAL_OPTS = [
    Opt("--model", str, help="checkpoint to score (needs --corpus for words)"),
    Opt("--topics-file", str, help="pre-extracted topics, one per line"),
    Opt("--corpus", str, help="reference corpus for coherence"),
    Opt("--embeddings", str, help="embeddings for wi_c / wi_m"),
    Opt("--top-n", int, 10, help="words per topic when reading a model"),
    Opt("--rbo-p", float, 0.9, help="rank-biased overlap persistence"),
    Opt("--seed", int, 0, help="seed for out-of-vocabulary embedding fill"),
    Opt("--out", str, help="report prefix; writes <out>.tsv and <out>.json"),
]

_CLASSIFY_OPTS = [
    Opt("--model", str, required=True),
    Opt("--corpus", str, required=True),
    Opt("--graphs", str, required=True),
    Opt("--runs", int, 5, help="SVM repetitions with seeds seed..seed+runs-1"),
    Opt("--svm-epochs", int, 100),
    Opt("--svm-lr", float, 0.01),
    Opt("--svm-l2", float, 1e-4),
    Opt("--seed", int, 0),
    Opt("--save-classifier", str, help="write the last run's classifier here"),
    Opt("--out", str, help="accuracy table file (TSV)"),
]

_EXPORT_OPTS = [
    Opt("--model", str, required=True),
    Opt("--corpus", str, required=True),
    Opt("--graphs", str, help="graph cache (required for --what theta)"),
    Opt("--what", str, required=True, help="theta | beta | topics | vocab"),
    Opt("--top-n", int, 10, help="words per topic for --what topics"),
    Opt("--out", str, required=True),
]


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def _cmd_preprocess(o) -> int:
    texts = load_texts(o.input)
    labels = load_labels(o.labels) if o.labels else None
    stopwords = None
    if o.stopwords:
        stopwords = frozenset(w.strip() for w in load_texts(o.stopwords) if w.strip())
    options = PreprocessOptions(
        max_vocab=o.max_vocab,
        min_word_len=o.min_word_len,
        min_doc_len=o.min_doc_len,
        lemmatize=not o.no_lemmatize,
        stopwords=stopwords,
    )
    corpus = build_corpus(texts, labels, options, ratios=o.ratios, seed=o.seed)
    corpus.save(o.out)
    log.info("corpus written to %s", o.out)
    kept = len(corpus.split.all_documents())
    _emit("documents_in", len(texts))
    _emit("documents_kept", kept)
    _emit("documents_dropped", len(texts) - kept)
    _emit("vocabulary", len(corpus.vocabulary))
    _emit("train", len(corpus.split.train))
    _emit("validation", len(corpus.split.validation))
    _emit("test", len(corpus.split.test))
    _emit("k_gold", corpus.split.k_gold if corpus.split.k_gold is not None else "-")
    _emit("sha256", corpus.sha256)
    return 0


def _cmd_build_graphs(o) -> int:
    corpus = load_corpus(o.corpus)
    delta = o.delta
    if delta is None:
        preset = get_preset(o.preset)
        if preset is None:
            raise ConfigError("--delta is required (or choose a dataset --preset)")
        delta = preset.delta
    delta = validate_delta(delta)
    embeddings = load_embeddings(o.embeddings, corpus.vocabulary, seed=o.seed)
    if embeddings.oov_count:
        log.warning("%d of %d vocabulary words had no pretrained vector",
                    embeddings.oov_count, len(corpus.vocabulary))
    t0 = time.perf_counter()
    store = build_all_graphs(corpus, embeddings, delta, cache_path=o.out)
    seconds = time.perf_counter() - t0
    log.info("graph store written to %s", o.out)
    report = graph_density_report(store)
    _emit("delta", f"{delta:g}")
    _emit("graphs", len(store))
    _emit("mean_nodes", f"{report.mean_nodes:.3f}")
    _emit("mean_edges", f"{report.mean_edges:.3f}")
    _emit("mean_density", f"{report.mean_density:.6f}")
    _emit("seconds", f"{seconds:.3f}")
    return 0


def _gin_config_from(o) -> GinConfig:
    preset = get_preset(o.preset)

    def pick(value, preset_value, flag):
        if value is not None:
            return value
        if preset_value is not None:
            return preset_value
        raise ConfigError(f"{flag} is required with --preset custom")

    return GinConfig(
        tau=pick(o.tau, preset.tau if preset else None, "--tau"),
        hidden=pick(o.hidden, preset.mlp_hidden_dim if preset else None, "--hidden"),
        tau_out=pick(o.tau_out, preset.tau_out if preset else None, "--tau-out"),
        layers=pick(o.gin_layers, preset.gin_layers if preset else 2, "--gin-layers"),
        mlp_hidden_layers=pick(
            o.mlp_hidden_layers, preset.mlp_hidden_layers if preset else 1,
            "--mlp-hidden-layers"),
        epsilon=o.epsilon,
    )


def _train_config_from(o, topics: int, seed: int) -> TrainConfig:
    return TrainConfig(
        topics=topics,
        gin=_gin_config_from(o),
        encoder_hidden=o.encoder_hidden,
        encoder_layers=o.encoder_layers,
        dropout=o.dropout,
        alpha=o.alpha,
        lr=o.lr,
        batch_size=o.batch_size,
        epochs=o.epochs,
        seed=seed,
    )


def _resolve_topics(o, corpus) -> int:
    if o.topics is not None:
        return o.topics
    if corpus.split.k_gold is not None:
        log.info("using the corpus label count as topic count: %d", corpus.split.k_gold)
        return corpus.split.k_gold
    raise ConfigError("--topics is required for an unlabeled corpus")


def _run_one_training(corpus, store, config: TrainConfig, out_dir, paths: dict):
    """Train once and write the run directory; returns (model, topics, seconds)."""
    os.makedirs(out_dir, exist_ok=True)
    t0 = time.perf_counter()
    result = train(corpus, store, config)
    seconds = time.perf_counter() - t0
    topics = top_words(result.model.beta.data, min(10, len(corpus.vocabulary)),
                       corpus.vocabulary)
    save_checkpoint(result.model, os.path.join(out_dir, "model.ckpt"))
    save_history(result.history, os.path.join(out_dir, "epochs.tsv"))
    save_topics(topics, os.path.join(out_dir, "topics.txt"))
    echo = {k: v for k, v in config.to_dict().items() if k != "gin"}
    echo.update({f"gin_{k}": v for k, v in config.gin.to_dict().items()})
    echo.update(paths)
    _write_config_ini(os.path.join(out_dir, "config.ini"), "train", echo)
    final = result.history[-1]
    log.info("run %s: final loss %.4f (%.1fs)", out_dir, final.total, seconds)
    return result.model, topics, seconds, final


def _train_npmi(topics, corpus) -> float:
    stats = build_cooccurrence(token_documents(corpus.split.train, corpus.vocabulary))
    return float(np.mean([npmi(t, stats) for t in topics]))


def _cmd_train(o) -> int:
    corpus = load_corpus(o.corpus)
    topics_k = _resolve_topics(o, corpus)
    paths = {"corpus_path": o.corpus, "graphs_path": o.graphs or ""}

    if o.delta_sweep:
        if not o.embeddings:
            raise ConfigError("--delta-sweep needs --embeddings to rebuild graphs")
        embeddings = load_embeddings(o.embeddings, corpus.vocabulary, seed=o.seed)
        os.makedirs(o.out, exist_ok=True)
        _emit("delta", "mean_edges", "build_seconds", "train_seconds", "npmi")
        rows = []
        for delta in o.delta_sweep:
            delta = validate_delta(delta)
            t0 = time.perf_counter()
            store = build_all_graphs(corpus, embeddings, delta)
            build_s = time.perf_counter() - t0
            report = graph_density_report(store)
            config = _train_config_from(o, topics_k, o.seed)
            run_dir = os.path.join(o.out, f"delta{delta:g}")
            _, topics, train_s, _ = _run_one_training(corpus, store, config, run_dir, paths)
            score = _train_npmi(topics, corpus)
            row = (f"{delta:g}", f"{report.mean_edges:.3f}", f"{build_s:.3f}",
                   f"{train_s:.3f}", f"{score:.6f}")
            rows.append(row)
            _emit(*row)
        with open(os.path.join(o.out, "sweep.tsv"), "w", encoding="utf-8") as fh:
            fh.write("delta\tmean_edges\tbuild_seconds\ttrain_seconds\tnpmi\n")
            for row in rows:
                fh.write("\t".join(row) + "\n")
        return 0

    if not o.graphs:
        raise ConfigError("--graphs is required (or use --delta-sweep with --embeddings)")
    store = load_graph_store(o.graphs)

    if o.topic_counts:
        counts = []
        for item in o.topic_counts.split(","):
            item = item.strip()
            if item == "gold":
                if corpus.split.k_gold is None:
                    raise ConfigError("`gold` topic count needs a labeled corpus")
                counts.append(corpus.split.k_gold)
            elif item:
                try:
                    counts.append(int(item))
                except ValueError as e:
                    raise ConfigError(f"bad topic count {item!r}") from e
        if not counts:
            raise ConfigError("--topic-counts is empty")
        os.makedirs(o.out, exist_ok=True)
        _emit("topics", "final_loss", "train_seconds", "npmi")
        rows = []
        for k in counts:
            config = _train_config_from(o, k, o.seed)
            run_dir = os.path.join(o.out, f"K{k}")
            _, topics, secs, final = _run_one_training(corpus, store, config, run_dir, paths)
            score = _train_npmi(topics, corpus)
            row = (str(k), f"{final.total:.6f}", f"{secs:.3f}", f"{score:.6f}")
            rows.append(row)
            _emit(*row)
        with open(os.path.join(o.out, "aggregate.tsv"), "w", encoding="utf-8") as fh:
            fh.write("topics\tfinal_loss\ttrain_seconds\tnpmi\n")
            for row in rows:
                fh.write("\t".join(row) + "\n")
        return 0

    n_seeds = o.seeds or 1
    if n_seeds < 1:
        raise ConfigError(f"--seeds must be >= 1, got {n_seeds}")
    if n_seeds == 1:
        config = _train_config_from(o, topics_k, o.seed)
        _, topics, secs, final = _run_one_training(corpus, store, config, o.out, paths)
        _emit("topics", "seed", "final_loss", "train_seconds")
        _emit(topics_k, o.seed, f"{final.total:.6f}", f"{secs:.3f}")
        return 0

    os.makedirs(o.out, exist_ok=True)
    _emit("seed", "final_loss", "train_seconds", "npmi")
    rows = []
    for seed in range(o.seed, o.seed + n_seeds):
        config = _train_config_from(o, topics_k, seed)
        run_dir = os.path.join(o.out, f"seed{seed}")
        _, topics, secs, final = _run_one_training(corpus, store, config, run_dir, paths)
        score = _train_npmi(topics, corpus)
        row = (str(seed), f"{final.total:.6f}", f"{secs:.3f}", f"{score:.6f}")
        rows.append(row)
        _emit(*row)
    mean_npmi = float(np.mean([float(r[3]) for r in rows]))
    _emit("mean", "", "", f"{mean_npmi:.6f}")
    with open(os.path.join(o.out, "aggregate.tsv"), "w", encoding="utf-8") as fh:
        fh.write("seed\tfinal_loss\ttrain_seconds\tnpmi\n")
        for row in rows:
            fh.write("\t".join(row) + "\n")
        fh.write(f"mean\t\t\t{mean_npmi:.6f}\n")
    return 0


def _cmd_eval_topics(o) -> int:
    corpus = load_corpus(o.corpus) if o.corpus else None
    if o.model:
        if corpus is None:
            raise ConfigError("--model needs --corpus to map word ids to words")
        model = load_checkpoint(o.model, vocabulary=corpus.vocabulary)
        topics = top_words(model.beta.data, min(o.top_n, len(corpus.vocabulary)),
                           corpus.vocabulary)
    elif o.topics_file:
        topics = load_topics(o.topics_file)
    else:
        raise ConfigError("one of --model or --topics-file is required")

    metrics: dict = {"irbo": irbo(topics, o.rbo_p)}
    if corpus is not None:
        tokens = token_documents(corpus.split.train, corpus.vocabulary)
        stats_npmi = build_cooccurrence(tokens, 10)
        stats_cv = build_cooccurrence(tokens, 110)
        per_npmi = [npmi(t, stats_npmi) for t in topics]
        per_cv = [cv(t, stats_cv) for t in topics]
        metrics["npmi"] = float(np.mean(per_npmi))
        metrics["cv"] = float(np.mean(per_cv))
        metrics["npmi_per_topic"] = per_npmi
        metrics["cv_per_topic"] = per_cv
    if o.embeddings:
        vocab = corpus.vocabulary if corpus is not None else Vocabulary(
            words=sorted({w for t in topics for w in t}),
            doc_frequency=np.zeros(len({w for t in topics for w in t}), dtype=np.int64),
        )
        embeddings = load_embeddings(o.embeddings, vocab, seed=o.seed)
        metrics["wi_c"] = wi_c(topics, embeddings)
        metrics["wi_m"] = wi_m(topics, embeddings)

    for key in sorted(k for k, v in metrics.items() if isinstance(v, float)):
        _emit(key, f"{metrics[key]:.9g}")
    if o.out:
        write_metrics_report(metrics, f"{o.out}.tsv", f"{o.out}.json")
        log.info("report written to %s.tsv and %s.json", o.out, o.out)
    return 0


def _cmd_classify(o) -> int:
    corpus = load_corpus(o.corpus)
    if any(d.label is None for d in corpus.split.all_documents()):
        raise ConfigError("classification needs a labeled corpus")
    store = load_graph_store(o.graphs)
    if store.corpus_sha256 != corpus.sha256:
        raise ContractError("graph store was built from a different corpus")
    model = load_checkpoint(o.model, vocabulary=corpus.vocabulary)

    theta_train = infer_theta(model, corpus.split.train, store.train_graphs())
    theta_test = infer_theta(model, corpus.split.test, store.test_graphs())
    y_train = [d.label for d in corpus.split.train]
    y_test = [d.label for d in corpus.split.test]
    if not y_test:
        raise ContractError("test split is empty")

    if o.runs < 1:
        raise ConfigError(f"--runs must be >= 1, got {o.runs}")
    rows = []
    _emit("run", "seed", "accuracy")
    classifier = None
    svm_config = None
    for r in range(o.runs):
        svm_config = SvmConfig(epochs=o.svm_epochs, lr=o.svm_lr, l2=o.svm_l2,
                               seed=o.seed + r)
        classifier = train_classifier(theta_train, y_train, svm_config)
        acc = evaluate_accuracy(classifier, theta_test, y_test)
        rows.append((r, o.seed + r, acc))
        _emit(r, o.seed + r, f"{acc:.6f}")
    mean_acc = float(np.mean([a for _, _, a in rows]))
    _emit("mean", "", f"{mean_acc:.6f}")
    if o.save_classifier:
        save_classifier(classifier, svm_config, o.save_classifier)
        log.info("classifier written to %s", o.save_classifier)
    if o.out:
        with open(o.out, "w", encoding="utf-8") as fh:
            fh.write("run\tseed\taccuracy\n")
            for r, seed, acc in rows:
                fh.write(f"{r}\t{seed}\t{acc:.6f}\n")
            fh.write(f"mean\t\t{mean_acc:.6f}\n")
    return 0


def _cmd_export(o) -> int:
    corpus = load_corpus(o.corpus)
    model = load_checkpoint(o.model, vocabulary=corpus.vocabulary)
    if o.what == "theta":
        if not o.graphs:
            raise ConfigError("--what theta needs --graphs")
        store = load_graph_store(o.graphs)
        if store.corpus_sha256 != corpus.sha256:
            raise ContractError("graph store was built from a different corpus")
        export_theta(model, corpus, store, o.out)
    elif o.what == "beta":
        beta = model.beta.data
        try:
            with open(o.out, "w", encoding="utf-8") as fh:
                for k in range(beta.shape[0]):
                    fh.write(str(k) + "\t" + "\t".join(f"{v:.9g}" for v in beta[k]) + "\n")
        except OSError as e:
            raise DataError(f"cannot write beta export: {e}", path=o.out) from e
    elif o.what == "topics":
        topics = top_words(model.beta.data, min(o.top_n, len(corpus.vocabulary)),
                           corpus.vocabulary)
        save_topics(topics, o.out)
    elif o.what == "vocab":
        save_vocabulary(corpus.vocabulary, o.out)
    else:
        raise ConfigError(f"--what must be theta|beta|topics|vocab, got {o.what!r}")
    log.info("%s written to %s", o.what, o.out)
    return 0


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

_COMMANDS = {
    "preprocess": (_PREPROCESS_OPTS, _cmd_preprocess, "tokenize, build vocabulary, split, tf-idf"),
    "build-graphs": (_BUILD_GRAPHS_OPTS, _cmd_build_graphs, "construct word-similarity document graphs"),
    "train": (_TRAIN_OPTS, _cmd_train, "train the topic model"),
    "eval-topics": (_EVAL_OPTS, _cmd_eval_topics, "coherence and diversity metrics"),
    "classify": (_CLASSIFY_OPTS, _cmd_classify, "document classification on topic proportions"),
    "export": (_EXPORT_OPTS, _cmd_export, "write theta / beta / topics / vocabulary files"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ginopic",
        description="Graph-augmented neural topic modeling",
    )
    parser.add_argument("--verbose", action="store_true", help="debug-level diagnostics")
    sub = parser.add_subparsers(dest="command", metavar="command")
    for name, (opts, _, help_text) in _COMMANDS.items():
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", type=str, default=None,
                         help=f"INI file; values read from its [{name}] section")
        _add_opts(cmd, opts)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    # a dedicated handler rather than basicConfig: repeated in-process calls
    # must each bind to the current sys.stderr, and basicConfig is a no-op
    # once any other handler exists
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger()
    root.addHandler(handler)
    old_level = root.level
    root.setLevel(logging.DEBUG if args.verbose else logging.INFO)
    try:
        if not args.command:
            build_parser().print_usage(sys.stderr)
            return 2
        opts, fn, _ = _COMMANDS[args.command]
        try:
            config = _load_config(args.config) if args.config else None
            resolved = _resolve(args, opts, args.command, config)
            return fn(resolved)
        except (ConfigError, ShapeError, ContractError) as e:
            log.error("%s", e)
            return 2
        except DataError as e:
            log.error("%s", e)
            return 3
        except NumericsError as e:
            log.error("%s", e)
            return 4
        except GinopicError as e:  # any future subclass defaults to config-class failure
            log.error("%s", e)
            return 2
    finally:
        root.removeHandler(handler)
        root.setLevel(old_level)


if __name__ == "__main__":
    sys.exit(main())
