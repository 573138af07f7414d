"""Command-line entry point: ``dialogact {train,eval,sweep,curve,analyze,synth}``.

CSV outputs:
  history.csv   epoch,train_loss,train_acc[,test_acc]
  sweep         param,value,fold,accuracy
  curve         mode,size,seed,accuracy
  analyze       query,rank,word,cosine
  synth         label,count (manifest)
  eval --cv     fold,accuracy
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import darn
from .corpus import CorpusFormatError, corpus_hash, group_dialogues, read_corpus, write_corpus
from .embeddings import (
    Word2VecFormatError,
    format_neighbor_table,
    format_pair_table,
    load_word2vec_binary,
    neighbor_rows,
    save_word2vec_binary,
    write_neighbor_csv,
)
from .evaluation import (
    DEFAULT_CURVE_FRACTIONS,
    SWEEP_PARAMS,
    ExperimentReport,
    accuracy,
    cross_validate,
    dnn_trainer,
    hyper_sweep,
    learning_curve,
    maxent_trainer,
    rescore_corpus,
    train_bigram,
    write_rows,
)
from .maxent import LbfgsConfig, MaxEntModel, me_loss_grad, me_predict, train_maxent
from .neural import NeuralModel, TrainConfig, extract_embeddings, train, write_history
from .synthetic import generate_synthetic, write_manifest

log = logging.getLogger("dialogact")


class UsageError(Exception):
    pass


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file of flag defaults (flags take precedence)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1, help="worker cap (runs are currently serial)")
    p.add_argument("-v", "--verbose", action="store_true")


def _add_corpus(p: argparse.ArgumentParser, required: bool = True) -> None:
    p.add_argument("--corpus", required=required, help="dialogue_id<TAB>label<TAB>text file")
    p.add_argument("--pretokenized", action="store_true", help="split text on whitespace only")


def _add_hyper(p: argparse.ArgumentParser) -> None:
    d = TrainConfig()
    p.add_argument("--epochs", type=int, default=d.epochs)
    p.add_argument("--batch-size", type=int, default=d.batch_size)
    p.add_argument("--dropout", type=float, default=d.dropout_rate)
    p.add_argument("--embedding-dim", type=int, default=d.embedding_dim)
    p.add_argument("--lstm-hidden", type=int, default=d.lstm_hidden)
    p.add_argument("--mlp-hidden", type=int, default=d.mlp_hidden)
    p.add_argument("--max-len", type=int, default=d.max_len)
    p.add_argument("--vocab-size", type=int, default=d.vocab_size)
    p.add_argument("--freeze-embeddings", action="store_true")
    p.add_argument("--l2", type=float, default=LbfgsConfig().l2, help="MaxEnt L2 weight")
    p.add_argument("--max-iters", type=int, default=LbfgsConfig().max_iters, help="MaxEnt L-BFGS iterations")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dialogact", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a DNN or MaxEnt model")
    _add_common(p)
    _add_corpus(p)
    _add_hyper(p)
    p.add_argument("--model", choices=("dnn", "maxent"), default="dnn")
    p.add_argument("--test-corpus", help="held-out corpus for per-epoch test accuracy")
    p.add_argument("--embeddings", help="word2vec binary file")
    p.add_argument("--init", default="random", help="random | pretrained | oracle:<w2v file>")
    p.add_argument("--export-embeddings", help="write trained embeddings (word2vec binary)")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("eval", help="evaluate a model file, or cross-validate with --cv")
    _add_common(p)
    _add_corpus(p)
    _add_hyper(p)
    p.add_argument("--model", required=True, help="DARN model file, or dnn|maxent with --cv")
    p.add_argument("--cv", type=int, help="k-fold cross-validation on --corpus")
    p.add_argument("--embeddings", help="word2vec binary file (MaxEnt features)")
    p.add_argument("--bigram-corpus", help="labelled corpus for bigram/Viterbi rescoring")
    p.add_argument("--rescore-weight", type=float, default=1.0)
    p.add_argument("--report", help="write the report's CSV rows here")

    p = sub.add_parser("sweep", help="cross-validated one-parameter sweep")
    _add_common(p)
    _add_corpus(p)
    _add_hyper(p)
    p.add_argument("--param", required=True, choices=SWEEP_PARAMS)
    p.add_argument("--values", required=True, help="comma-separated integers")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--out", required=True, help="CSV path")

    p = sub.add_parser("curve", help="accuracy vs training-corpus size per embedding init")
    _add_common(p)
    _add_corpus(p)
    _add_hyper(p)
    p.set_defaults(epochs=5)
    p.add_argument("--test-corpus", required=True)
    p.add_argument("--sizes", help="comma-separated utterance counts (default: 1%%..100%% grid)")
    p.add_argument("--modes", default="random", help="comma-separated subset of random,pretrained,oracle")
    p.add_argument("--seeds", default="0", help="comma-separated seeds")
    p.add_argument("--embeddings", help="word2vec file for the pretrained mode")
    p.add_argument("--oracle", help="word2vec file of oracle embeddings (train --export-embeddings)")
    p.add_argument("--out", required=True, help="CSV path")

    p = sub.add_parser("analyze", help="nearest-neighbour and pair-similarity tables")
    _add_common(p)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--words", default="", help="comma-separated query words")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--pairs", default="", help="comma-separated a:b pairs")
    p.add_argument("--csv", help="write query,rank,word,cosine rows here")

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    _add_common(p)
    p.add_argument("--n", type=int, default=100, help="number of dialogues")
    p.add_argument("--out", required=True, help="corpus file")
    p.add_argument("--manifest", help="label,count CSV (default: <out>.manifest.csv)")
    return parser


def _config_path(argv: list[str]) -> str | None:
    for i, a in enumerate(argv):
        if a == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if a.startswith("--config="):
            return a.split("=", 1)[1]
    return None


def parse_args(argv=None) -> argparse.Namespace:
    """Parse flags; a ``--config`` JSON file supplies defaults that flags override."""
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    path = _config_path(argv)
    subparsers = parser._subparsers._group_actions[0].choices
    if path and argv and argv[0] in subparsers:
        sub = subparsers[argv[0]]
        try:
            defaults = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            parser.error(f"cannot read config {path}: {exc}")
        if not isinstance(defaults, dict):
            parser.error(f"config {path} must hold a JSON object")
        actions = {a.dest: a for a in sub._actions}
        unknown = sorted(set(defaults) - set(actions) - {"command"})
        if unknown:
            parser.error(f"unknown keys in {path}: {', '.join(unknown)}")
        defaults.pop("command", None)
        for key in defaults:
            actions[key].required = False
        sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def _train_config(args, **kw) -> TrainConfig:
    """TrainConfig from the hyper-parameter flags; ``kw`` overrides them."""
    base = dict(
        epochs=args.epochs,
        batch_size=args.batch_size,
        dropout_rate=args.dropout,
        seed=args.seed,
        freeze_embeddings=args.freeze_embeddings,
        embedding_dim=args.embedding_dim,
        lstm_hidden=args.lstm_hidden,
        mlp_hidden=args.mlp_hidden,
        max_len=args.max_len,
        vocab_size=args.vocab_size,
    )
    return TrainConfig(**{**base, **kw})


def _lbfgs_config(args) -> LbfgsConfig:
    return LbfgsConfig(l2=args.l2, max_iters=args.max_iters)


def _echo(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("verbose",)}


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from None


def cmd_train(args) -> int:
    corpus = read_corpus(args.corpus, args.pretokenized)
    test = read_corpus(args.test_corpus, args.pretokenized) if args.test_corpus else None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.model == "maxent":
        emb = load_word2vec_binary(args.embeddings) if args.embeddings else None
        model = train_maxent(corpus, args.vocab_size, emb, _lbfgs_config(args))
        X = model.features(corpus, emb)
        index = {lab: i for i, lab in enumerate(model.labels.labels)}
        y = np.array([index[u.label] for u in corpus])
        loss, _ = me_loss_grad(model.params, X, y, args.l2)
        row = {"epoch": 0, "train_loss": loss,
               "train_acc": accuracy(model.predict(corpus, emb), [u.label for u in corpus])}
        if test:
            row["test_acc"] = accuracy(model.predict(test, emb), [u.label for u in test])
        history = [row]
    else:
        init = args.init
        pretrained = None
        if init == "pretrained":
            if not args.embeddings:
                raise UsageError("--init pretrained requires --embeddings")
            pretrained = load_word2vec_binary(args.embeddings)
        elif init.startswith("oracle:"):
            pretrained = load_word2vec_binary(init.split(":", 1)[1])
            init = "oracle"
        elif init != "random":
            raise UsageError(f"--init must be random, pretrained or oracle:<file>, got {args.init!r}")
        kw = {"init_mode": init}
        if pretrained is not None:
            kw["embedding_dim"] = pretrained.dim
        model, history = train(corpus, _train_config(args, **kw), pretrained=pretrained, test=test)
        if args.export_embeddings:
            save_word2vec_binary(extract_embeddings(model.params, model.vocab), args.export_embeddings)
    model.save(out / "model.darn")
    write_history(history, out / "history.csv")
    (out / "config.json").write_text(json.dumps(_echo(args), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    last = history[-1]
    msg = f"train accuracy {100 * last['train_acc']:.2f}%"
    if test:
        rep = ExperimentReport.from_counts(round(last["test_acc"] * len(test)), len(test))
        msg += f"; test accuracy {rep.summary()}"
    print(msg)
    return 0


def _load_model(path: str):
    kind = darn.read_container(path)[0]
    if kind == "dnn":
        return NeuralModel.load(path)
    if kind == "maxent":
        return MaxEntModel.load(path)
    raise darn.ModelFormatError(f"{path}: unknown model type {kind!r}")


def cmd_eval(args) -> int:
    corpus = read_corpus(args.corpus, args.pretokenized)
    emb = load_word2vec_binary(args.embeddings) if args.embeddings else None
    echo = {"corpus_sha256": corpus_hash(corpus), "seed": args.seed}
    if args.cv:
        if args.model == "dnn":
            trainer = dnn_trainer(_train_config(args))
        elif args.model == "maxent":
            trainer = maxent_trainer(args.vocab_size, emb, _lbfgs_config(args))
        else:
            raise UsageError("with --cv, --model must be dnn or maxent")
        report = cross_validate(trainer, corpus, args.cv, args.seed, metadata={"model": args.model})
        print(f"Accuracy: {report.summary()}")
        for i, a in enumerate(report.per_fold):
            print(f"fold {i}: {100 * a:.2f}%")
        if args.report:
            write_rows([{"fold": i, "accuracy": a} for i, a in enumerate(report.per_fold)],
                       ["fold", "accuracy"], args.report)
        return 0
    model = _load_model(args.model)
    unknown = sorted({u.label for u in corpus} - set(model.labels.labels))
    if unknown:
        raise ValueError(f"corpus labels not known to the model: {', '.join(unknown)}")
    golds = [u.label for u in corpus]
    if isinstance(model, MaxEntModel):
        preds = model.predict(corpus, emb)
        probs = None
    else:
        probs = model.predict_proba(model.encode(corpus))
        preds = [model.labels.labels[i] for i in probs.argmax(axis=1)]
    report = ExperimentReport.from_counts(sum(p == g for p, g in zip(preds, golds)), len(golds), metadata=echo)
    print(f"Accuracy: {report.summary()}")
    if args.bigram_corpus:
        if probs is None:
            _, probs = me_predict(model.params, model.features(corpus, emb))
        bigram_src = read_corpus(args.bigram_corpus, args.pretokenized)
        seqs = [[model.labels.index(u.label) for u in d if u.label in model.labels.labels]
                for d in group_dialogues(bigram_src)]
        bigram = train_bigram(seqs, len(model.labels))
        ids = rescore_corpus(probs, corpus, bigram, args.rescore_weight)
        rescored = [model.labels.labels[i] for i in ids]
        rep2 = ExperimentReport.from_counts(sum(p == g for p, g in zip(rescored, golds)), len(golds))
        print(f"Viterbi-rescored accuracy (weight {args.rescore_weight}): {rep2.summary()}")
    if args.report:
        write_rows([{"accuracy": report.accuracy, "n": report.n, "ci_half_width": report.ci_half_width}],
                   ["accuracy", "n", "ci_half_width"], args.report)
    return 0


def cmd_sweep(args) -> int:
    corpus = read_corpus(args.corpus, args.pretokenized)
    values = _ints(args.values)
    rows = hyper_sweep(args.param, values, corpus, args.folds, args.seed, _train_config(args))
    write_rows(rows, ["param", "value", "fold", "accuracy"], args.out)
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def cmd_curve(args) -> int:
    corpus = read_corpus(args.corpus, args.pretokenized)
    test = read_corpus(args.test_corpus, args.pretokenized)
    modes = [m for m in args.modes.split(",") if m]
    pretrained = load_word2vec_binary(args.embeddings) if args.embeddings else None
    oracle = load_word2vec_binary(args.oracle) if args.oracle else None
    if "pretrained" in modes and pretrained is None:
        raise UsageError("mode 'pretrained' requires --embeddings")
    if "oracle" in modes and oracle is None:
        raise UsageError("mode 'oracle' requires --oracle (see train --export-embeddings)")
    dims = {e.dim for e in (pretrained, oracle) if e is not None}
    if len(dims) > 1:
        raise UsageError(f"embedding files disagree on dimension: {sorted(dims)}")
    cfg = _train_config(args)
    if dims:
        cfg = replace(cfg, embedding_dim=dims.pop())
    if args.sizes:
        sizes = _ints(args.sizes)
    else:
        sizes = sorted({max(1, round(f * len(corpus))) for f in DEFAULT_CURVE_FRACTIONS})
    rows = learning_curve(corpus, test, sizes, modes, _ints(args.seeds), cfg, pretrained, oracle)
    write_rows(rows, ["mode", "size", "seed", "accuracy"], args.out)
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def cmd_analyze(args) -> int:
    emb = load_word2vec_binary(args.embeddings)
    words = [w for w in args.words.split(",") if w]
    pairs = []
    for item in (p for p in args.pairs.split(",") if p):
        a, sep, b = item.partition(":")
        if not sep or not a or not b:
            raise UsageError(f"pairs must look like a:b, got {item!r}")
        pairs.append((a, b))
    if not words and not pairs:
        raise UsageError("give --words and/or --pairs")
    missing = sorted({w for w in words + [x for p in pairs for x in p] if w not in emb})
    if missing:
        raise KeyError(f"not in the embedding set: {', '.join(missing)}")
    if words:
        print(format_neighbor_table(words, args.k, emb))
    if pairs:
        if words:
            print()
        print(format_pair_table(pairs, emb))
    if args.csv and words:
        write_neighbor_csv(neighbor_rows(words, args.k, emb), args.csv)
    return 0


def cmd_synth(args) -> int:
    utts = generate_synthetic(args.n, args.seed)
    write_corpus(utts, args.out)
    write_manifest(utts, args.manifest or f"{args.out}.manifest.csv")
    print(f"wrote {len(utts)} utterances in {args.n} dialogues to {args.out}")
    return 0


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "curve": cmd_curve,
    "analyze": cmd_analyze,
    "synth": cmd_synth,
}


def main(argv=None) -> int:
    args = parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"dialogact {args.command}: usage error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, KeyError, darn.ModelFormatError, CorpusFormatError, Word2VecFormatError) as exc:
        print(f"dialogact {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
