"""Operator entry point: preprocess, train, predict, dedup, eval, and the
pipeline benchmark. Progress goes to stderr as JSON lines; results go to
stdout or files. Exit codes: 0 success, 1 usage error, 2 data/model error.
"""

import argparse
import hashlib
import json
import sys
import time

import numpy as np

from . import corpus as corpusmod
from . import evaluation
from .counts import Hyperparameters, WordTopicCounts, estimate_phi
from .dedup import cluster_topics
from .predictor import FrozenModel, build_r_matrix, extract_features, map_tokens, predict
from .runtime import bench as benchmod
from .runtime.checkpoint import (
    CheckpointData,
    CheckpointError,
    load_checkpoint,
    save_checkpoint,
)
from .runtime.config import TrainConfig, parse_config_file
from .runtime.coordinator import Trainer

USAGE_ERROR = 1
DATA_ERROR = 2


def log_event(**fields):
    fields.setdefault("ts", round(time.time(), 3))
    print(json.dumps(fields, sort_keys=True), file=sys.stderr)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _build_parser():
    parser = _Parser(prog="gridlda", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="clean a corpus and build its vocabulary")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", dest="out_prefix", required=True,
                   help="writes <out>.docs.txt and <out>.vocab.tsv")
    p.add_argument("--min-freq", type=int, default=corpusmod.DEFAULT_MIN_FREQ)
    p.add_argument("--max-freq", type=float, default=None,
                   help="default: 0.2 * document count")

    p = sub.add_parser("train", help="train a model over the cluster runtime")
    p.add_argument("--corpus", required=True)
    p.add_argument("--config", help="key=value topology/config file")
    p.add_argument("--out-ckpt", required=True)
    p.add_argument("--iters", type=int, required=True)
    p.add_argument("--every-ckpt", type=int, default=None)
    p.add_argument("--resume", default=None, help="checkpoint to continue from")
    p.add_argument("--min-freq", type=int, default=corpusmod.DEFAULT_MIN_FREQ)
    p.add_argument("--max-freq", type=float, default=None)
    p.add_argument("--heldout", default=None, help="held-out corpus for the loglik curve")
    p.add_argument("--eval-every", type=int, default=5)
    p.add_argument("--loglik-out", default=None)

    p = sub.add_parser("predict", help="infer topic mixtures for new documents")
    p.add_argument("--model", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--in", dest="infile", default="-", help="default stdin")
    p.add_argument("--top-n", type=int, default=30)
    p.add_argument("--theta", action="store_true", help="emit sparse mixtures instead of features")
    p.add_argument("--sweeps", type=int, default=10)
    p.add_argument("--trials", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("dedup", help="merge near-duplicate topics")
    p.add_argument("--model", required=True)
    p.add_argument("--threshold", type=float, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--remap-out", default="-", help="old<TAB>new table, default stdout")
    p.add_argument("--linkage", choices=("single", "complete"), default="single")

    p = sub.add_parser("eval", help="score a model")
    p.add_argument("--model", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--heldout", required=True)
    p.add_argument("--metric", choices=("perplexity", "pmi"), required=True)
    p.add_argument("--split-ratio", type=float, default=0.8)
    p.add_argument("--sweeps", type=int, default=50)
    p.add_argument("--top-n", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cooccur", default=None,
                   help="external co-occurrence counts (default: the held-out corpus itself)")

    p = sub.add_parser("bench-pipeline", help="sweep pipeline slots at a fixed buffer budget")
    p.add_argument("--budget", type=int, required=True, help="T*L byte budget")
    p.add_argument("--sweep", required=True, help="comma-separated T values")
    p.add_argument("--tokens", type=int, default=262144)
    p.add_argument("--out", default="-", help="CSV destination, default stdout")
    return parser


# -- model/file helpers -------------------------------------------------------


def _merged_counts(data):
    """Union of configuration 0's word shards: the full model counts."""
    counts = WordTopicCounts(data.num_words, data.num_topics)
    for rows in data.shard_rows[0]:
        for v, row in rows.items():
            counts.rows[v] = dict(row)
    counts.totals = [int(x) for x in data.psi[0]]
    return counts


def _load_model(path, vocab):
    data = load_checkpoint(path)
    if len(vocab) != data.num_words:
        raise CheckpointError(
            f"vocabulary has {len(vocab)} words but the model expects {data.num_words}"
        )
    counts = _merged_counts(data)
    hyper = Hyperparameters(data.alpha, data.beta)
    return FrozenModel.from_counts(counts, hyper, data.num_words, vocab), data


def _read_doc_lines(path):
    if path == "-":
        return [line.rstrip("\n") for line in sys.stdin]
    with open(path, encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh]


def _load_heldout_ids(path, vocab):
    docs, dropped = [], 0
    for line in _read_doc_lines(path):
        ids, d = map_tokens(line.split(), vocab)
        dropped += d
        if ids:
            docs.append(ids)
    return docs, dropped


def _open_out(path):
    return sys.stdout if path == "-" else open(path, "w", encoding="utf-8")


# -- subcommands ---------------------------------------------------------------


def _cmd_preprocess(args):
    vocab, docs, report = corpusmod.preprocess(
        corpusmod.read_lines(args.infile), min_freq=args.min_freq, max_freq=args.max_freq
    )
    corpusmod.write_documents(docs, vocab, args.out_prefix + ".docs.txt")
    corpusmod.write_vocabulary(vocab, args.out_prefix + ".vocab.tsv")
    log_event(event="preprocess", **report.as_dict())
    return 0


def _cmd_train(args):
    config = parse_config_file(args.config) if args.config else TrainConfig()
    vocab, docs, report = corpusmod.preprocess(
        corpusmod.read_lines(args.corpus), min_freq=args.min_freq, max_freq=args.max_freq
    )
    log_event(event="preprocess", **report.as_dict())
    if not docs:
        raise CheckpointError("corpus is empty after preprocessing")
    trainer = Trainer(docs, vocab, config)
    if args.resume:
        trainer.restore(args.resume)
        log_event(event="resume", iteration=trainer.iteration, source=args.resume)
    corpusmod.write_vocabulary(vocab, args.out_ckpt + ".vocab.tsv")

    series = []
    heldout = None
    if args.heldout:
        heldout, _ = _load_heldout_ids(args.heldout, vocab)

    def score():
        res = evaluation.predictive_perplexity(
            trainer.frozen_model(), heldout, split_ratio=0.8, method="gibbs", sweeps=30
        )
        return res.log_likelihood

    if heldout:
        series.append((trainer.iteration, score()))

    def on_iteration(report):
        log_event(
            event="iteration",
            iteration=report.iteration,
            changed=report.changed,
            seconds=round(report.seconds, 4),
            recovered=report.recovered,
        )
        if heldout and report.iteration % args.eval_every == 0:
            series.append((report.iteration, score()))

    trainer.train(
        args.iters,
        checkpoint_path=args.out_ckpt,
        checkpoint_every=args.every_ckpt,
        on_iteration=on_iteration,
    )
    if heldout:
        out = args.loglik_out or args.out_ckpt + ".loglik.csv"
        evaluation.write_series_csv(series, out)
        log_event(event="loglik_curve", rows=len(series), path=out)
    log_event(event="trained", iteration=trainer.iteration, checkpoint=args.out_ckpt)
    return 0


def _cmd_predict(args):
    vocab = corpusmod.read_vocabulary(args.vocab)
    model, _ = _load_model(args.model, vocab)
    r_matrix = build_r_matrix(model)
    lines = _read_doc_lines(args.infile)
    emitted = 0
    for idx, line in enumerate(lines):
        ids, dropped = map_tokens(line.split(), vocab)
        result = predict(
            ids, model, r_matrix,
            sweeps=args.sweeps, trials=args.trials, seed=args.seed,
        )
        if args.theta:
            order = np.argsort(-result.theta, kind="stable")[: args.top_n]
            fields = [f"{int(k)}:{result.theta[k]:.8g}" for k in order]
        else:
            feats = extract_features(result.theta, model, top_n=args.top_n) if ids else []
            fields = [f"{vocab.words[v]}:{p:.8g}" for v, p in feats]
        print("\t".join([str(idx)] + fields))
        emitted += 1
        if dropped or result.prior_only:
            log_event(event="predict_doc", doc=idx, dropped=dropped, prior_only=result.prior_only)
    log_event(event="predict", documents=emitted)
    return 0


def _cmd_dedup(args):
    data = load_checkpoint(args.model)
    counts = _merged_counts(data)
    hyper = Hyperparameters(data.alpha, data.beta)
    result = cluster_topics(counts, hyper, args.threshold, linkage=args.linkage)
    merged_k = len(result.clusters)
    # Remap every stored label and emit a single-shard checkpoint.
    z_rows = []
    for config_rows in data.z_rows:
        for row in config_rows:
            for doc_id, labels in row:
                z_rows.append((doc_id, [result.remap[k] for k in labels]))
    merged = CheckpointData(
        fingerprint=hashlib.sha256(data.fingerprint + b"dedup" + str(merged_k).encode()).digest(),
        iteration=data.iteration,
        num_topics=merged_k,
        num_words=data.num_words,
        num_configs=1,
        num_shards=1,
        alpha=result.alpha,
        beta=data.beta,
        shard_rows=[[result.counts.rows]],
        global_rows=None,
        psi=[[int(x) for x in result.counts.totals]],
        z_rows=[[z_rows]],
        rng_states=[[data.rng_states[0][0]]],
    )
    save_checkpoint(merged, args.out)
    out = _open_out(args.remap_out)
    try:
        for old, new in enumerate(result.remap):
            out.write(f"{old}\t{new}\n")
    finally:
        if out is not sys.stdout:
            out.close()
    log_event(
        event="dedup",
        topics_before=data.num_topics,
        topics_after=merged_k,
        threshold=args.threshold,
        checkpoint=args.out,
    )
    return 0


def _cmd_eval(args):
    vocab = corpusmod.read_vocabulary(args.vocab)
    model, data = _load_model(args.model, vocab)
    if args.metric == "perplexity":
        docs, dropped = _load_heldout_ids(args.heldout, vocab)
        res = evaluation.predictive_perplexity(
            model, docs, split_ratio=args.split_ratio, method="gibbs",
            sweeps=args.sweeps, seed=args.seed,
        )
        log_event(
            event="eval",
            metric="perplexity",
            docs=res.docs_scored,
            skipped=res.docs_skipped,
            unknown_dropped=dropped,
            tokens=res.tokens_scored,
        )
        print(f"{res.perplexity:.6f}")
        return 0
    # PMI over each topic's top words.
    if args.cooccur:
        reference = _read_cooccur(args.cooccur, vocab)
    else:
        docs, _ = _load_heldout_ids(args.heldout, vocab)
        reference = evaluation.CooccurrenceCounts.from_documents(docs)
    counts = _merged_counts(data)
    phi = estimate_phi(counts, Hyperparameters(data.alpha, data.beta), data.num_words)
    print("topic,pmi")
    for k in range(data.num_topics):
        try:
            score = evaluation.pmi_coherence(phi.column(k), args.top_n, reference)
        except ValueError:
            score = float("nan")
        print(f"{k},{score:.6f}")
    return 0


def _read_cooccur(path, vocab):
    """External co-occurrence file: 'D n' header, then 'U word n' and
    'P word word n' lines."""
    num_docs = 0
    doc_freq, pair_freq = {}, {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "D":
                num_docs = int(parts[1])
            elif parts[0] == "U":
                w = vocab.id_of.get(parts[1])
                if w is not None:
                    doc_freq[w] = int(parts[2])
            elif parts[0] == "P":
                a, b = vocab.id_of.get(parts[1]), vocab.id_of.get(parts[2])
                if a is not None and b is not None:
                    key = (a, b) if a < b else (b, a)
                    pair_freq[key] = int(parts[3])
            else:
                raise ValueError(f"unknown co-occurrence record {parts[0]!r}")
    if num_docs <= 0:
        raise ValueError("co-occurrence file lacks a document count header")
    return evaluation.CooccurrenceCounts(num_docs, doc_freq, pair_freq)


def _cmd_bench(args):
    t_values = [int(t) for t in args.sweep.replace(",", " ").split()]
    rows = benchmod.run_pipeline_bench(args.budget, t_values, total_tokens=args.tokens)
    csv = benchmod.bench_rows_csv(rows)
    out = _open_out(args.out)
    try:
        out.write(csv)
    finally:
        if out is not sys.stdout:
            out.close()
    for t, l, seconds in rows:
        log_event(event="bench", slots=t, package_bytes=l, seconds=round(seconds, 6))
    return 0


_COMMANDS = {
    "preprocess": _cmd_preprocess,
    "train": _cmd_train,
    "predict": _cmd_predict,
    "dedup": _cmd_dedup,
    "eval": _cmd_eval,
    "bench-pipeline": _cmd_bench,
}


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return USAGE_ERROR
    try:
        return _COMMANDS[args.command](args)
    except (CheckpointError, ValueError, OSError) as exc:
        log_event(event="error", kind=type(exc).__name__, message=str(exc))
        return DATA_ERROR


if __name__ == "__main__":
    sys.exit(main())
