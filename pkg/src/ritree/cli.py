"""Command-line interface.

Subcommands::

    ritree encode    corpus -> weighted, reduced, unit-length document vectors
    ritree build     vectors -> K-tree dump + codebook assignments
    ritree evaluate  corpus + labels -> purity/entropy report (or score a dump)
    ritree compare   two per-run CSVs -> per-dimension Welch t-tests
    ritree audit     check a tree dump's structural invariants

Every random choice is drawn from ``--rng-seed`` (or ``RITREE_RNG_SEED``)
through labelled sub-streams, so re-running a command reproduces its output
byte for byte.
"""

from __future__ import annotations

import argparse
import contextlib
import logging
import os
import sys
import tempfile

import numpy as np

from .evaluate import (
    PRESETS,
    ExperimentConfig,
    ExperimentReport,
    build_tree,
    compare_runs,
    format_comparison,
    read_runs_csv,
    reduce_documents,
    reduce_to_k,
    run_experiment,
    score,
    substream,
    substream_seed,
    weight_corpus,
    write_report_tsv,
    write_runs_csv,
)
from .exceptions import RiTreeError
from .ktree import KTree, audit
from .represent import RawDoc, CorpusStats, ingest_corpus, read_labels, read_links, read_stopwords

log = logging.getLogger("ritree")

SEED_ENV = "RITREE_RNG_SEED"


@contextlib.contextmanager
def atomic_write(path):
    """Write to a temporary file next to ``path`` and rename it into place."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".ritree-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fp:
            yield fp
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def _open_out(path):
    if path is None or path == "-":
        return contextlib.nullcontext(sys.stdout)
    return atomic_write(path)


def _read_corpus(args):
    with open(args.corpus, encoding="utf-8") as fp:
        docs, stats = ingest_corpus(fp)
    if args.stopwords:
        with open(args.stopwords, encoding="utf-8") as fp:
            stop = read_stopwords(fp)
        docs = [RawDoc(d.doc_id, {t: c for t, c in d.counts.items() if t.lower() not in stop})
                for d in docs]
        stats = CorpusStats.from_docs(docs)
    links = None
    if args.links:
        with open(args.links, encoding="utf-8") as fp:
            links = read_links(fp)
    return docs, stats, links


def write_matrix(fp, doc_ids, X):
    """``doc_id<TAB>x1 x2 ...`` with shortest round-trip float formatting."""
    for doc_id, row in zip(doc_ids, X):
        fp.write(f"{doc_id}\t{' '.join(repr(float(x)) for x in row)}\n")


def read_matrix(fp):
    ids, rows = [], []
    for lineno, line in enumerate(fp, start=1):
        line = line.rstrip("\r\n")
        if not line:
            continue
        doc_id, sep, rest = line.partition("\t")
        if not sep:
            raise RiTreeError(f"matrix line {lineno}: expected doc_id<TAB>values")
        ids.append(doc_id)
        rows.append(np.array(rest.split(), dtype=np.float64))
    if rows and len({r.size for r in rows}) != 1:
        raise RiTreeError("matrix rows have differing lengths")
    return ids, (np.vstack(rows) if rows else np.zeros((0, 0)))


def _resolve_config(args, parser):
    explicit = [args.variant, args.repr, args.reduce]
    if args.preset:
        if any(v is not None for v in explicit):
            parser.error("--preset cannot be combined with --variant/--repr/--reduce")
        cfg = PRESETS[args.preset]
    else:
        cfg = ExperimentConfig(
            "custom",
            args.variant or "modified",
            args.repr or "bm25",
            args.reduce or "ri",
        )
    _check_reduction(cfg.reduction, args, parser)
    if cfg.representation == "bm25+lfidf" and not getattr(args, "links", None):
        parser.error("--repr bm25+lfidf requires --links")
    return cfg


def _check_reduction(reduction, args, parser):
    if args.seed_len is not None and reduction != "ri":
        parser.error("--seed-len only applies with --reduce ri")
    if reduction == "none" and args.dims:
        parser.error("--dims does not apply with --reduce none")
    if reduction in ("cull", "ri") and not args.dims:
        parser.error(f"--reduce {reduction} requires --dims")


def _seed(args):
    if args.rng_seed is not None:
        return args.rng_seed
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            return int(env)
        except ValueError:
            raise SystemExit(f"ritree: {SEED_ENV} must be an integer, got {env!r}") from None
    return 0


def _dims_list(text):
    try:
        dims = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad dimension list {text!r}") from None
    if not dims or min(dims) < 1:
        raise argparse.ArgumentTypeError("dimensions must be positive integers")
    return dims


def _positive(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


# --------------------------------------------------------------- subcommands


def cmd_encode(args, parser):
    if args.preset:
        parser.error("encode takes --repr/--reduce, not --preset")
    reduction = args.reduce or "ri"
    representation = args.repr or "bm25"
    _check_reduction(reduction, args, parser)
    if args.dims and len(args.dims) != 1:
        parser.error("encode takes a single --dims value")
    if representation == "bm25+lfidf" and not args.links:
        parser.error("--repr bm25+lfidf requires --links")
    docs, stats, links = _read_corpus(args)
    wdocs = weight_corpus(docs, stats, representation, links)
    seed = _seed(args)
    dims = args.dims[0] if args.dims else None
    X = reduce_documents(wdocs, reduction, dims, args.seed_len or 10,
                         substream_seed(seed, "ri", 0))
    with _open_out(args.out) as fp:
        write_matrix(fp, [d.doc_id for d in docs], X)
    log.info("encoded %d documents into %d dimensions", X.shape[0], X.shape[1])
    return 0


def cmd_build(args, parser):
    if not args.matrix:
        parser.error("build requires --matrix")
    with open(args.matrix, encoding="utf-8") as fp:
        ids, X = read_matrix(fp)
    seed = _seed(args)
    tree = build_tree(X, ids, args.order, args.variant or "unmodified",
                      substream(seed, "shuffle", 0), substream_seed(seed, "kmeans", 0))
    with _open_out(args.out) as fp:
        tree.dump(fp)
    assign_path = args.assignments or (args.out + ".assignments.tsv" if args.out not in (None, "-") else None)
    if assign_path:
        assign = tree.assignments()
        with atomic_write(assign_path) as fp:
            for doc_id in ids:
                fp.write(f"{doc_id}\t{assign[doc_id]}\n")
    log.info("built tree of depth %d over %d documents", tree.depth_, tree.n_inserted_)
    return 0


def _evaluate_tree(args, seed):
    with open(args.tree, encoding="utf-8") as fp:
        tree = KTree.load(fp)
    with open(args.labels, encoding="utf-8") as fp:
        labels = read_labels(fp)
    book = tree.codebook()
    assign = tree.assignments()
    name = args.preset or "tree"
    measurements = []
    for j in range(args.runs_reduce):
        clusters = reduce_to_k(book.centroids, book.weights, assign, args.k, 1,
                               substream(seed, "kmeanspp", 0, j))
        pur, ent = score(clusters, labels)
        measurements.append({"config": name, "dims": tree.n_features_in_, "tree_run": 0,
                             "reduce_run": j, "purity": pur, "entropy": ent})
    pur = [m["purity"] for m in measurements]
    ent = [m["entropy"] for m in measurements]
    std = (lambda x: float(np.std(x, ddof=1)) if len(x) > 1 else 0.0)
    report = ExperimentReport(name, tree.n_features_in_, float(np.mean(ent)), std(ent),
                              float(np.mean(pur)), std(pur), len(measurements))
    return [report], measurements


def cmd_evaluate(args, parser):
    if not args.labels:
        parser.error("evaluate requires --labels")
    seed = _seed(args)
    if args.tree:
        if args.corpus:
            parser.error("give either --tree or --corpus, not both")
        reports, measurements = _evaluate_tree(args, seed)
    else:
        if not args.corpus:
            parser.error("evaluate requires --corpus or --tree")
        cfg = _resolve_config(args, parser)
        docs, stats, links = _read_corpus(args)
        with open(args.labels, encoding="utf-8") as fp:
            labels = read_labels(fp)
        dims = args.dims or [0]
        result = run_experiment(
            docs, stats, labels, [cfg], dims, links=links, runs_tree=args.runs_tree,
            runs_reduce=args.runs_reduce, k=args.k, order=args.order,
            seed_len=args.seed_len or 10, rng_seed=seed, jobs=args.jobs,
        )
        reports, measurements = result.reports, result.measurements
    with _open_out(args.out) as fp:
        write_report_tsv(reports, fp)
    runs_path = args.runs_out
    if runs_path is None and args.out not in (None, "-"):
        runs_path = os.path.splitext(args.out)[0] + ".runs.csv"
    if runs_path:
        with atomic_write(runs_path) as fp:
            write_runs_csv(measurements, fp)
    return 0


def cmd_compare(args, parser):
    with open(args.runs_a, encoding="utf-8") as fp:
        a = read_runs_csv(fp)
    with open(args.runs_b, encoding="utf-8") as fp:
        b = read_runs_csv(fp)
    table = compare_runs(a, b, alpha=args.alpha)
    with _open_out(args.out) as fp:
        fp.write(format_comparison(table))
    return 0


def cmd_audit(args, parser):
    with open(args.tree, encoding="utf-8") as fp:
        tree = KTree.load(fp)
    problems = audit(tree)
    for p in problems:
        print(p)
    if problems:
        return 1
    print(f"ok: depth {tree.depth_}, {tree.n_inserted_} vectors, "
          f"{len(tree.codebook().weights)} codebook entries")
    return 0


# ------------------------------------------------------------------- parser


def build_parser():
    parser = argparse.ArgumentParser(prog="ritree", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--rng-seed", type=int, default=None,
                        help=f"master seed (default: ${SEED_ENV} or 0)")
    common.add_argument("--out", default=None, help="output path ('-' for stdout)")

    pipeline = argparse.ArgumentParser(add_help=False)
    pipeline.add_argument("--corpus")
    pipeline.add_argument("--links")
    pipeline.add_argument("--labels")
    pipeline.add_argument("--stopwords")
    pipeline.add_argument("--repr", choices=("bm25", "bm25+lfidf"), default=None)
    pipeline.add_argument("--reduce", choices=("none", "cull", "ri"), default=None)
    pipeline.add_argument("--dims", type=_dims_list, default=None,
                          help="reduced dimensionality; comma-separated list for evaluate")
    pipeline.add_argument("--seed-len", type=_positive, default=None)
    pipeline.add_argument("--preset", choices=sorted(PRESETS))

    tree_opts = argparse.ArgumentParser(add_help=False)
    tree_opts.add_argument("--order", type=_positive, default=30)
    tree_opts.add_argument("--variant", choices=("unmodified", "modified"), default=None)

    p = sub.add_parser("encode", parents=[common, pipeline], help="weight and reduce a corpus")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("build", parents=[common, tree_opts], help="build a K-tree")
    p.add_argument("--matrix", help="vectors written by 'encode'")
    p.add_argument("--assignments", help="doc_id<TAB>cluster output "
                   "(default: <out>.assignments.tsv)")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("evaluate", parents=[common, pipeline, tree_opts],
                       help="score clusterings against labels")
    p.add_argument("--tree", help="score an existing tree dump instead of building")
    p.add_argument("--runs-tree", type=_positive, default=20)
    p.add_argument("--runs-reduce", type=_positive, default=20)
    p.add_argument("--k", type=_positive, default=15)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--runs-out", help="per-run CSV (default: <out stem>.runs.csv)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", parents=[common], help="Welch t-tests between run CSVs")
    p.add_argument("runs_a")
    p.add_argument("runs_b")
    p.add_argument("--alpha", type=float, default=0.05)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("audit", help="check a tree dump")
    p.add_argument("tree")
    p.set_defaults(func=cmd_audit)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        return args.func(args, parser)
    except (RiTreeError, OSError) as exc:
        print(f"ritree: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
