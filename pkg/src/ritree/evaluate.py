"""Clustering-quality evaluation.

A K-tree's codebook is reduced to ``k`` clusters with k-means++ (each
document follows its codebook entry) and scored against ground-truth labels
with micro-averaged purity and entropy. :func:`run_experiment` repeats this
over randomized tree builds and reductions and summarizes each configuration
as mean and standard deviation of both scores.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed
from scipy import stats as sps

from .exceptions import (
    DegenerateSampleError,
    DimensionSetMismatchError,
    EmptyTableError,
    MissingLabelError,
    TooFewClustersError,
    ZeroVectorError,
)
from .kmeans import KMeansConfig, run_with_restarts
from .ktree import KTree
from .randindex import IndexVectorRegistry, RiConfig, encode_corpus
from .represent import (
    BM25Params,
    WeightedDoc,
    bm25_documents,
    lfidf_build,
    merge_for_indexing,
    tfidf_cull,
)

__all__ = [
    "ContingencyTable",
    "micro_purity",
    "micro_entropy",
    "reduce_to_k",
    "welch_t_test",
    "ExperimentConfig",
    "PRESETS",
    "ExperimentReport",
    "ExperimentResult",
    "substream",
    "substream_seed",
    "weight_corpus",
    "reduce_documents",
    "build_tree",
    "score",
    "run_experiment",
    "write_report_tsv",
    "write_runs_csv",
    "read_runs_csv",
    "compare_runs",
]


# ------------------------------------------------------------------ metrics


@dataclass
class ContingencyTable:
    """Cluster x label document counts."""

    counts: np.ndarray
    clusters: list = field(default_factory=list)
    labels: list = field(default_factory=list)

    @property
    def n(self):
        return int(self.counts.sum())

    @classmethod
    def from_assignments(cls, assignments, labels):
        """Tabulate ``doc -> cluster`` against ``doc -> label``.

        Raises :class:`MissingLabelError` for a document without a label.
        """
        clusters = sorted(set(assignments.values()), key=repr)
        cidx = {c: i for i, c in enumerate(clusters)}
        used = []
        for doc in assignments:
            if doc not in labels:
                raise MissingLabelError(doc)
            used.append(labels[doc])
        names = sorted(set(used), key=repr)
        lidx = {lab: i for i, lab in enumerate(names)}
        counts = np.zeros((len(clusters), len(names)), np.int64)
        for doc, c in assignments.items():
            counts[cidx[c], lidx[labels[doc]]] += 1
        return cls(counts, clusters, names)


def _check_table(table):
    counts = np.asarray(table.counts)
    if counts.size == 0 or counts.sum() <= 0:
        raise EmptyTableError("contingency table has no documents")
    return counts


def micro_purity(table):
    """Fraction of documents carrying their cluster's majority label."""
    counts = _check_table(table)
    return float(counts.max(axis=1).sum() / counts.sum())


def micro_entropy(table):
    """Size-weighted mean over clusters of the base-2 label entropy (bits)."""
    counts = _check_table(table).astype(np.float64)
    sizes = counts.sum(axis=1)
    total = sizes.sum()
    h = 0.0
    for row, size in zip(counts, sizes):
        if size == 0:
            continue
        p = row[row > 0] / size
        h += size / total * float(-(p * np.log2(p)).sum())
    return float(h)


def welch_t_test(sample_a, sample_b):
    """Two-sided Welch t-test.

    Returns
    -------
    t : float
    p : float
        Two-tailed p-value with Welch-Satterthwaite degrees of freedom.
    """
    a = np.asarray(sample_a, dtype=np.float64)
    b = np.asarray(sample_b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise DegenerateSampleError("each sample needs at least two values")
    va = a.var(ddof=1) / a.size
    vb = b.var(ddof=1) / b.size
    diff = a.mean() - b.mean()
    se2 = va + vb
    if se2 == 0:
        if diff == 0:
            return 0.0, 1.0
        raise DegenerateSampleError("both samples have zero variance")
    t = diff / math.sqrt(se2)
    df = se2**2 / (va**2 / (a.size - 1) + vb**2 / (b.size - 1))
    p = 2.0 * sps.t.sf(abs(t), df)
    return float(t), float(min(p, 1.0))


def reduce_to_k(centroids, weights, doc_assignments, k, restarts=1, rng=None):
    """Cluster codebook entries into ``k`` groups and relabel documents.

    k-means++-seeded Lloyd runs ``restarts`` times over the codebook
    centroids, weighted by entry size; the lowest-SSE run is kept.

    Parameters
    ----------
    centroids : ndarray of shape (n_codebook, d)
    weights : ndarray of shape (n_codebook,)
    doc_assignments : mapping
        doc id -> codebook index.

    Returns
    -------
    dict
        doc id -> cluster in ``0..k-1``.
    """
    centroids = np.asarray(centroids, dtype=np.float64)
    n = centroids.shape[0]
    if n < k or np.unique(centroids, axis=0).shape[0] < k:
        raise TooFewClustersError(f"{n} codebook entries cannot form {k} clusters")
    if n == k:
        mapping = np.arange(n)
    else:
        cfg = KMeansConfig(k=k, seeding="kmeans++", max_restarts=restarts)
        mapping = run_with_restarts(centroids, weights, cfg, rng).labels
    return {doc: int(mapping[c]) for doc, c in doc_assignments.items()}


def score(assignments, labels):
    """``(micro purity, micro entropy)`` of a doc -> cluster mapping."""
    table = ContingencyTable.from_assignments(assignments, labels)
    return micro_purity(table), micro_entropy(table)


# --------------------------------------------------------------- randomness

_STREAMS = {"shuffle": 1, "ri": 2, "kmeans": 3, "kmeanspp": 4}


def _seed_sequence(rng_seed, label, index):
    try:
        key = _STREAMS[label]
    except KeyError:
        raise ValueError(f"unknown stream {label!r}; expected one of {sorted(_STREAMS)}") from None
    return np.random.SeedSequence(entropy=int(rng_seed), spawn_key=(key, *index))


def substream(rng_seed, label, *index):
    """Generator for a labelled, indexed sub-stream of ``rng_seed``."""
    return np.random.default_rng(_seed_sequence(rng_seed, label, index))


def substream_seed(rng_seed, label, *index):
    """63-bit integer seed drawn from a labelled sub-stream."""
    state = _seed_sequence(rng_seed, label, index).generate_state(1, np.uint64)
    return int(state[0] >> 1)


# ------------------------------------------------------------------ pipeline


@dataclass(frozen=True)
class ExperimentConfig:
    """One tree configuration: variant x representation x reduction."""

    name: str
    variant: str = "modified"
    representation: str = "bm25"
    reduction: str = "ri"

    def __post_init__(self):
        if self.variant not in ("unmodified", "modified"):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.representation not in ("bm25", "bm25+lfidf"):
            raise ValueError(f"unknown representation {self.representation!r}")
        if self.reduction not in ("none", "cull", "ri"):
            raise ValueError(f"unknown reduction {self.reduction!r}")


PRESETS = {
    "A": ExperimentConfig("A", "unmodified", "bm25", "cull"),
    "B": ExperimentConfig("B", "unmodified", "bm25+lfidf", "ri"),
    "C": ExperimentConfig("C", "unmodified", "bm25", "ri"),
    "D": ExperimentConfig("D", "modified", "bm25+lfidf", "ri"),
    "E": ExperimentConfig("E", "modified", "bm25", "ri"),
}


def weight_corpus(docs, stats, representation="bm25", links=None, params=BM25Params()):
    """BM25 documents, with LF-IDF link rows attached for ``"bm25+lfidf"``."""
    wdocs = bm25_documents(docs, stats, params)
    if representation == "bm25+lfidf":
        rows = lfidf_build(links or [], stats)
        for wd in wdocs:
            wd.links = rows.get(wd.doc_id) or None
    return wdocs


def reduce_documents(wdocs, reduction, dims=None, seed_len=10, ri_seed=0, allow_zero=False):
    """Map weighted documents to unit rows of a dense matrix.

    ``reduction`` is ``"none"`` (full feature space in sorted order),
    ``"cull"`` (top ``dims`` features by summed weight) or ``"ri"``
    (random indexing to ``dims`` dimensions). With ``allow_zero`` a document
    left without features stays a zero row; otherwise it raises
    :class:`ZeroVectorError`.
    """
    feats = [merge_for_indexing(wd) for wd in wdocs]
    ids = [wd.doc_id for wd in wdocs]
    if reduction == "ri":
        reg = IndexVectorRegistry(RiConfig(dims, seed_len, ri_seed))
        return encode_corpus(reg, feats, ids)
    if reduction == "none":
        vocab = sorted({t for f in feats for t in f})
        index = {t: i for i, t in enumerate(vocab)}
        X = np.zeros((len(feats), len(vocab)))
        for i, f in enumerate(feats):
            for t, w in f.items():
                X[i, index[t]] = w
    elif reduction == "cull":
        _, vecs = tfidf_cull([WeightedDoc(d, f) for d, f in zip(ids, feats)], dims)
        X = np.vstack([v.to_dense() for v in vecs]) if vecs else np.zeros((0, dims))
    else:
        raise ValueError(f"unknown reduction {reduction!r}")
    norms = np.linalg.norm(X, axis=1)
    zero = norms == 0
    if np.any(zero) and not allow_zero:
        raise ZeroVectorError(f"document {ids[int(np.argmax(zero))]!r} has no features left")
    norms[zero] = 1.0
    return X / norms[:, None]


def build_tree(X, doc_ids, order, variant, shuffle_rng, tree_seed):
    """Insert the rows of ``X`` in a random order drawn from ``shuffle_rng``."""
    perm = shuffle_rng.permutation(X.shape[0])
    tree = KTree(order=order, variant=variant, random_state=tree_seed)
    return tree.fit(X[perm], doc_ids=[doc_ids[i] for i in perm])


@dataclass(frozen=True)
class ExperimentReport:
    """Summary of one configuration at one dimensionality.

    ``alpha``/``beta`` are the mean/std of micro entropy, ``gamma``/``delta``
    the mean/std of micro purity over ``runs`` measurements.
    """

    config: str
    dims: int
    alpha: float
    beta: float
    gamma: float
    delta: float
    runs: int


@dataclass
class ExperimentResult:
    reports: list
    measurements: list  # dicts: config, dims, tree_run, reduce_run, purity, entropy

    def purities(self, config, dims):
        return [m["purity"] for m in self.measurements
                if m["config"] == config and m["dims"] == dims]


def _tree_run(wdocs, labels, cfg, dims, i, runs_reduce, k, order, seed_len, rng_seed,
              doc_ids, fixed_X):
    if cfg.reduction == "ri":
        X = reduce_documents(wdocs, "ri", dims, seed_len, substream_seed(rng_seed, "ri", i))
    else:
        X = fixed_X
    tree = build_tree(
        X, doc_ids, order, cfg.variant,
        substream(rng_seed, "shuffle", i), substream_seed(rng_seed, "kmeans", i),
    )
    book = tree.codebook()
    assign = tree.assignments()
    out = []
    for j in range(runs_reduce):
        clusters = reduce_to_k(book.centroids, book.weights, assign, k, 1,
                               substream(rng_seed, "kmeanspp", i, j))
        out.append(score(clusters, labels))
    return out


def _std(x):
    return float(np.std(x, ddof=1)) if len(x) > 1 else 0.0


def run_experiment(docs, stats, labels, configs, dims, *, links=None, runs_tree=20,
                   runs_reduce=20, k=15, order=30, seed_len=10, rng_seed=0,
                   params=BM25Params(), jobs=1):
    """Repeated build-reduce-score runs for each configuration and dimension.

    Each tree run ``i`` draws a fresh insertion order and, for random
    indexing, fresh index vectors; each reduction ``j`` of it draws fresh
    k-means++ seeds. All streams derive from ``rng_seed`` by label and run
    index, so the result is reproducible and independent of ``jobs``.
    """
    missing = [d.doc_id for d in docs if d.doc_id not in labels]
    if missing:
        raise MissingLabelError(missing[0])
    doc_ids = [d.doc_id for d in docs]
    weighted = {}
    shown = {}
    tasks = []
    for cfg in configs:
        if cfg.representation not in weighted:
            weighted[cfg.representation] = weight_corpus(
                docs, stats, cfg.representation, links, params
            )
        wdocs = weighted[cfg.representation]
        for dim in dims:
            fixed = None
            if cfg.reduction != "ri":
                fixed = reduce_documents(wdocs, cfg.reduction, dim,
                                         allow_zero=cfg.variant == "unmodified")
                if cfg.reduction == "none":
                    dim = fixed.shape[1]  # report the vocabulary size actually used
            shown.setdefault(cfg.name, []).append(int(dim))
            for i in range(runs_tree):
                tasks.append((cfg, dim, i, wdocs, fixed))
    results = Parallel(n_jobs=jobs)(
        delayed(_tree_run)(w, labels, cfg, dim, i, runs_reduce, k, order, seed_len,
                           rng_seed, doc_ids, fixed)
        for cfg, dim, i, w, fixed in tasks
    )
    measurements = []
    for (cfg, dim, i, _, _), scores in zip(tasks, results):
        for j, (pur, ent) in enumerate(scores):
            measurements.append({"config": cfg.name, "dims": int(dim), "tree_run": i,
                                 "reduce_run": j, "purity": pur, "entropy": ent})
    reports = []
    for cfg in configs:
        for dim in shown[cfg.name]:
            rows = [m for m in measurements if m["config"] == cfg.name and m["dims"] == dim]
            ent = [m["entropy"] for m in rows]
            pur = [m["purity"] for m in rows]
            reports.append(ExperimentReport(cfg.name, int(dim), float(np.mean(ent)), _std(ent),
                                            float(np.mean(pur)), _std(pur), len(rows)))
    return ExperimentResult(reports, measurements)


# --------------------------------------------------------------------- files

REPORT_COLUMNS = ("config", "dims", "alpha", "beta", "gamma", "delta", "runs")
RUN_COLUMNS = ("config", "dims", "tree_run", "reduce_run", "purity", "entropy")


def write_report_tsv(reports, fp):
    fp.write("\t".join(REPORT_COLUMNS) + "\n")
    for r in reports:
        fp.write(f"{r.config}\t{r.dims}\t{r.alpha:.4f}\t{r.beta:.4f}\t"
                 f"{r.gamma:.4f}\t{r.delta:.4f}\t{r.runs}\n")


def write_runs_csv(measurements, fp):
    w = csv.writer(fp, lineterminator="\n")
    w.writerow(RUN_COLUMNS)
    for m in measurements:
        w.writerow([m["config"], m["dims"], m["tree_run"], m["reduce_run"],
                    repr(float(m["purity"])), repr(float(m["entropy"]))])


def read_runs_csv(fp):
    rows = []
    for row in csv.DictReader(fp):
        rows.append({"config": row["config"], "dims": int(row["dims"]),
                     "tree_run": int(row["tree_run"]), "reduce_run": int(row["reduce_run"]),
                     "purity": float(row["purity"]), "entropy": float(row["entropy"])})
    return rows


def compare_runs(runs_a, runs_b, alpha=0.05):
    """Per-dimension Welch tests on micro purity between two run tables.

    Returns a list of dicts with ``dims, mean_a, mean_b, t, p, significant``.
    """
    def by_dim(rows):
        out = {}
        for r in rows:
            out.setdefault(r["dims"], []).append(r["purity"])
        return out

    a, b = by_dim(runs_a), by_dim(runs_b)
    if set(a) != set(b):
        raise DimensionSetMismatchError(
            f"dimension sets differ: {sorted(a)} vs {sorted(b)}"
        )
    table = []
    for dim in sorted(a):
        t, p = welch_t_test(a[dim], b[dim])
        table.append({"dims": dim, "mean_a": float(np.mean(a[dim])),
                      "mean_b": float(np.mean(b[dim])), "t": t, "p": p,
                      "significant": p < alpha})
    return table


def format_comparison(table):
    buf = io.StringIO()
    buf.write("dims\tmean_a\tmean_b\tt\tp\tsignificant\n")
    for r in table:
        buf.write(f"{r['dims']}\t{r['mean_a']:.4f}\t{r['mean_b']:.4f}\t{r['t']:.4f}\t"
                  f"{r['p']:.4g}\t{'yes' if r['significant'] else 'no'}\n")
    return buf.getvalue()
