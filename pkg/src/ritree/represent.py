"""Corpus ingestion and term weighting.

Documents arrive pre-tokenized as ``term:count`` lists (see :func:`ingest_corpus`)
and are weighted with BM25. Hyperlinks become LF-IDF vectors over the
document space. :func:`tfidf_cull` keeps the heaviest terms and
:func:`combine` joins content and link vectors.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import (
    DuplicateDocIdError,
    InvalidStatsError,
    ParseError,
    UnknownDocIdError,
)
from .vecspace import SparseVector, unit_normalize

__all__ = [
    "RawDoc",
    "CorpusStats",
    "BM25Params",
    "WeightedDoc",
    "ingest_corpus",
    "read_links",
    "read_labels",
    "read_stopwords",
    "tokenize",
    "bm25_weight",
    "bm25_documents",
    "lfidf_build",
    "tfidf_cull",
    "combine",
    "merge_for_indexing",
    "link_key",
    "BM25Vectorizer",
    "TfidfCuller",
]


class RawDoc(NamedTuple):
    doc_id: str
    counts: dict


@dataclass
class CorpusStats:
    n_docs: int
    n_terms: int
    avg_doc_len: float
    df: dict
    doc_ids: tuple = ()
    link_df: dict = field(default_factory=dict)

    @classmethod
    def from_docs(cls, docs):
        df = Counter()
        total = 0
        for doc in docs:
            df.update(doc.counts.keys())
            total += sum(doc.counts.values())
        n = len(docs)
        return cls(
            n_docs=n,
            n_terms=len(df),
            avg_doc_len=total / n if n else 0.0,
            df=dict(df),
            doc_ids=tuple(d.doc_id for d in docs),
        )


@dataclass(frozen=True)
class BM25Params:
    k1: float = 2.0
    b: float = 0.75

    def __post_init__(self):
        if self.k1 < 0:
            raise ValueError("k1 must be non-negative")
        if not 0 <= self.b <= 1:
            raise ValueError("b must lie in [0, 1]")


@dataclass
class WeightedDoc:
    """A weighted document: ``terms`` maps term -> BM25 weight, ``links`` maps
    linked doc id -> LF-IDF weight (or is None)."""

    doc_id: str
    terms: dict
    links: dict | None = None


# --------------------------------------------------------------------- files


def _split_id(line):
    if "\t" in line:
        doc_id, _, rest = line.partition("\t")
    else:
        parts = line.split(None, 1)
        doc_id, rest = parts[0], parts[1] if len(parts) > 1 else ""
    return doc_id.strip(), rest


def ingest_corpus(reader):
    """Parse ``doc_id<TAB>term:count term:count ...`` lines.

    Blank lines are skipped. Repeated terms within a line are summed.

    Returns
    -------
    docs : list of RawDoc
    stats : CorpusStats

    Raises
    ------
    ParseError
        On a malformed line, naming its 1-based line number.
    DuplicateDocIdError
    """
    docs = []
    seen = set()
    for lineno, line in enumerate(reader, start=1):
        line = line.rstrip("\r\n")
        if not line.strip():
            continue
        doc_id, rest = _split_id(line)
        if not doc_id:
            raise ParseError("missing document id", lineno)
        if doc_id in seen:
            raise DuplicateDocIdError(f"line {lineno}: duplicate document id {doc_id!r}")
        seen.add(doc_id)
        counts = {}
        for tok in rest.split():
            term, sep, num = tok.rpartition(":")
            if not sep or not term:
                raise ParseError(f"expected term:count, got {tok!r}", lineno)
            try:
                c = int(num)
            except ValueError:
                raise ParseError(f"count in {tok!r} is not an integer", lineno) from None
            if c <= 0:
                raise ParseError(f"count in {tok!r} must be positive", lineno)
            counts[term] = counts.get(term, 0) + c
        docs.append(RawDoc(doc_id, counts))
    return docs, CorpusStats.from_docs(docs)


def read_links(reader):
    """Parse ``doc_id<TAB>doc_id`` lines into a list of pairs."""
    out = []
    for lineno, line in enumerate(reader, start=1):
        line = line.rstrip("\r\n")
        if not line.strip():
            continue
        parts = line.split("\t") if "\t" in line else line.split()
        if len(parts) != 2 or not all(p.strip() for p in parts):
            raise ParseError("expected two document ids", lineno)
        out.append((parts[0].strip(), parts[1].strip()))
    return out


def read_labels(reader):
    labels = {}
    for lineno, line in enumerate(reader, start=1):
        line = line.rstrip("\r\n")
        if not line.strip():
            continue
        doc_id, label = _split_id(line)
        label = label.strip()
        if not label:
            raise ParseError("missing label", lineno)
        if doc_id in labels:
            raise DuplicateDocIdError(f"line {lineno}: duplicate label for {doc_id!r}")
        labels[doc_id] = label
    return labels


def read_stopwords(reader):
    return {w.strip().lower() for w in reader if w.strip()}


_TOKEN_SPLIT = re.compile(r"[\W_]+")


def tokenize(text, stopwords=()):
    """Lowercase, split on non-alphanumerics and count, dropping stop-words.

    No stemming is applied; stem beforehand if needed.
    """
    stop = set(stopwords)
    return Counter(t for t in _TOKEN_SPLIT.split(text.lower()) if t and t not in stop)


# ---------------------------------------------------------------- weighting


def bm25_weight(tf, df, doc_len, stats, params=BM25Params()):
    """Okapi BM25 weight of one term in one document.

    ``idf = max(0, ln((N - df + 0.5) / (df + 0.5)))`` so terms in more than
    half the collection get weight 0.
    """
    if stats.n_docs <= 0:
        raise InvalidStatsError("BM25 needs a non-empty collection")
    if stats.avg_doc_len <= 0:
        raise InvalidStatsError("average document length must be positive")
    n = stats.n_docs
    idf = max(0.0, math.log((n - df + 0.5) / (df + 0.5)))
    norm = params.k1 * ((1 - params.b) + params.b * doc_len / stats.avg_doc_len)
    return idf * tf * (params.k1 + 1) / (norm + tf)


def bm25_documents(docs, stats, params=BM25Params()):
    """Weight every document; zero-weight terms are dropped."""
    out = []
    for doc in docs:
        doc_len = sum(doc.counts.values())
        terms = {}
        for term, tf in doc.counts.items():
            df = stats.df.get(term)
            if not df:
                continue
            w = bm25_weight(tf, df, doc_len, stats, params)
            if w > 0:
                terms[term] = w
        out.append(WeightedDoc(doc.doc_id, terms))
    return out


def lfidf_build(links, stats):
    """LF-IDF link vectors.

    Each link ``(i, j)`` adds one to both ``freq[i][j]`` and ``freq[j][i]``;
    self-links are ignored. Frequencies are then scaled by
    ``max(0, ln(n_docs / (1 + link_df[j])))`` where ``link_df[j]`` counts the
    documents linked to or from ``j``. Rows are not normalized.

    ``stats.link_df`` is filled in as a side effect.

    Returns
    -------
    dict
        doc id -> {linked doc id: weight}, one (possibly empty) row per
        document in ``stats.doc_ids``.
    """
    known = set(stats.doc_ids)
    freq = {d: Counter() for d in stats.doc_ids}
    for a, b in links:
        for x in (a, b):
            if x not in known:
                raise UnknownDocIdError(f"link endpoint {x!r} is not in the corpus")
        if a == b:
            continue
        freq[a][b] += 1
        freq[b][a] += 1
    link_df = Counter()
    for row in freq.values():
        link_df.update(row.keys())
    stats.link_df = dict(link_df)
    n = stats.n_docs
    rows = {}
    for d, row in freq.items():
        out = {}
        for target, f in row.items():
            w = f * max(0.0, math.log(n / (1 + link_df[target])))
            if w > 0:
                out[target] = w
        rows[d] = out
    return rows


def tfidf_cull(docs, n_keep):
    """Keep the ``n_keep`` terms with the largest summed weight.

    Ties are broken toward the lexicographically smaller term, which is also
    the term's position in the sorted vocabulary.

    Returns
    -------
    kept : list of str
        Surviving terms in descending rank; term ``kept[i]`` becomes
        dimension ``i``.
    vectors : list of SparseVector
        Each document re-projected onto the kept terms.
    """
    if n_keep < 1:
        raise ValueError("n_keep must be >= 1")
    columns = {}
    for doc in docs:
        for term, w in doc.terms.items():
            columns.setdefault(term, []).append(w)
    # fsum is exactly rounded, so ranks do not depend on document order
    rank = {t: math.fsum(ws) for t, ws in columns.items()}
    ordered = sorted(rank, key=lambda t: (-rank[t], t))
    kept = ordered[:n_keep]
    index = {t: i for i, t in enumerate(kept)}
    dim = len(kept)
    vectors = [
        SparseVector.from_pairs(
            ((index[t], w) for t, w in doc.terms.items() if t in index), dim
        )
        for doc in docs
    ]
    return kept, vectors


def combine(content, links=None):
    """Concatenate the unit-normalized content and link vectors."""
    c = unit_normalize(content)
    if links is None:
        return c
    return np.concatenate([c, unit_normalize(links)])


LINK_PREFIX = "\t"


def link_key(doc_id):
    """Feature key for a link target; cannot collide with a corpus term."""
    return LINK_PREFIX + str(doc_id)


def merge_for_indexing(doc):
    """Feature -> weight map for random indexing.

    Without links this is the term weights. With links, content and link
    weights are each scaled to unit norm and merged, link targets keyed by
    :func:`link_key`; this is :func:`combine` on the sparse representation.
    """
    if not doc.links:
        return dict(doc.terms)
    out = {}
    for part, keyed in ((doc.terms, False), (doc.links, True)):
        norm = math.sqrt(math.fsum(w * w for w in part.values()))
        if norm == 0:
            continue
        for k, w in part.items():
            out[link_key(k) if keyed else k] = w / norm
    return out


# --------------------------------------------------------------- estimators


def _raw_counts(docs):
    for doc in docs:
        yield doc.counts if isinstance(doc, RawDoc) else doc


class BM25Vectorizer(TransformerMixin, BaseEstimator):
    """BM25 document-term matrix from term-count mappings.

    Parameters
    ----------
    k1 : float, default=2.0
    b : float, default=0.75

    Attributes
    ----------
    vocabulary_ : dict
        term -> column index; columns follow sorted term order.
    stats_ : CorpusStats
    """

    def __init__(self, k1=2.0, b=0.75):
        self.k1 = k1
        self.b = b

    def fit(self, X, y=None):
        docs = [RawDoc(str(i), dict(c)) for i, c in enumerate(_raw_counts(X))]
        self.stats_ = CorpusStats.from_docs(docs)
        self.vocabulary_ = {t: i for i, t in enumerate(sorted(self.stats_.df))}
        return self

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "vocabulary_")
        return np.array(sorted(self.vocabulary_, key=self.vocabulary_.get), dtype=object)

    def transform(self, X):
        check_is_fitted(self, "vocabulary_")
        params = BM25Params(self.k1, self.b)
        rows, cols, vals = [], [], []
        n = 0
        for i, counts in enumerate(_raw_counts(X)):
            n += 1
            doc_len = sum(counts.values())
            for term, tf in counts.items():
                j = self.vocabulary_.get(term)
                if j is None:
                    continue
                w = bm25_weight(tf, self.stats_.df[term], doc_len, self.stats_, params)
                if w > 0:
                    rows.append(i)
                    cols.append(j)
                    vals.append(w)
        return sp.csr_matrix((vals, (rows, cols)), shape=(n, len(self.vocabulary_)))


class TfidfCuller(TransformerMixin, BaseEstimator):
    """Keep the ``n_keep`` columns with the largest column sums.

    Output columns are ordered by descending rank, ties to the lower input
    column.
    """

    def __init__(self, n_keep=1000):
        self.n_keep = n_keep

    def fit(self, X, y=None):
        X = sp.csr_matrix(X, dtype=np.float64)
        if self.n_keep < 1:
            raise ValueError("n_keep must be >= 1")
        sums = np.asarray(X.sum(axis=0)).ravel()
        order = np.lexsort((np.arange(sums.size), -sums))
        self.columns_ = order[: self.n_keep]
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "columns_")
        return sp.csr_matrix(X, dtype=np.float64)[:, self.columns_]
