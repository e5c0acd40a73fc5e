"""Random Indexing with sparse ternary index vectors.

Every feature (term) gets an index vector with ``seed_len`` non-zero
entries, half +1 and half -1, at random positions among ``r`` dimensions.
A document is encoded as the weighted sum of its terms' index vectors,
normalized to unit length. That equals the row of ``D @ I`` for document
matrix ``D`` and index-vector matrix ``I``, but ``I`` is never formed:
index vectors are created when a term is first seen.

Each index vector is drawn from a generator seeded by ``(rng_seed, term)``,
so the vector a term receives does not depend on which documents came
first.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_positive_int, seed_to_int
from .exceptions import ParseError, ZeroVectorError
from .vecspace import SparseVector, accumulate

__all__ = [
    "RiConfig",
    "IndexVectorRegistry",
    "generate_index_vector",
    "term_rng",
    "encode_document",
    "encode_corpus",
    "RandomIndexer",
]


@dataclass(frozen=True)
class RiConfig:
    r: int = 1000
    seed_len: int = 10
    rng_seed: int = 0

    def __post_init__(self):
        check_positive_int(self.r, "r", minimum=2)
        check_positive_int(self.seed_len, "seed_len", minimum=2)
        if self.seed_len > self.r:
            raise ValueError(f"seed_len={self.seed_len} exceeds r={self.r}")
        if self.seed_len % 2:
            raise ValueError("seed_len must be even so signs can be balanced")


def term_rng(rng_seed, term):
    """Generator seeded from ``(rng_seed, term)``."""
    h = hashlib.blake2b(digest_size=16)
    h.update(int(rng_seed).to_bytes(16, "little", signed=True))
    h.update(str(term).encode("utf-8"))
    return np.random.default_rng(int.from_bytes(h.digest(), "little"))


def generate_index_vector(rng, r, seed_len):
    """Sparse ternary vector: ``seed_len`` distinct dimensions drawn uniformly,
    carrying a shuffled, balanced set of +1 and -1."""
    dims = rng.choice(r, size=seed_len, replace=False)
    signs = np.repeat([1.0, -1.0], seed_len // 2)
    rng.shuffle(signs)
    order = np.argsort(dims)
    return SparseVector(dims[order], signs[order], r)


class IndexVectorRegistry:
    """Term -> index vector store, filled on first lookup.

    Safe to share between threads: concurrent first lookups of one term
    compute the same vector and the first stored copy wins.
    """

    def __init__(self, config=RiConfig()):
        self.config = config
        self._vectors = {}

    def get_or_create(self, term):
        vec = self._vectors.get(term)
        if vec is None:
            cfg = self.config
            vec = generate_index_vector(term_rng(cfg.rng_seed, term), cfg.r, cfg.seed_len)
            vec = self._vectors.setdefault(term, vec)
        return vec

    __getitem__ = get_or_create

    def __contains__(self, term):
        return term in self._vectors

    def __len__(self):
        return len(self._vectors)

    @property
    def terms(self):
        return list(self._vectors)

    def matrix(self, terms):
        """Sparse ``(len(terms), r)`` matrix whose rows are index vectors."""
        vecs = [self.get_or_create(t) for t in terms]
        s = self.config.seed_len
        indptr = np.arange(0, s * len(vecs) + 1, s)
        if vecs:
            idx = np.concatenate([v.indices for v in vecs])
            val = np.concatenate([v.values for v in vecs])
        else:
            idx, val = np.empty(0, np.int64), np.empty(0)
        return sp.csr_matrix((val, idx, indptr), shape=(len(vecs), self.config.r))

    def export(self, fp):
        """Write ``term<TAB>+dim -dim ...`` lines, the sign carrying the value.

        Dimensions are written 1-based so that dimension 0 keeps its sign.
        """
        for term, vec in self._vectors.items():
            cells = " ".join(
                f"{'+' if v > 0 else '-'}{i + 1}" for i, v in zip(vec.indices, vec.values)
            )
            fp.write(f"{term}\t{cells}\n")

    @classmethod
    def load(cls, fp, config):
        reg = cls(config)
        for lineno, line in enumerate(fp, start=1):
            line = line.rstrip("\r\n")
            if not line:
                continue
            term, sep, cells = line.rpartition("\t")
            if not sep:
                raise ParseError("expected term<TAB>cells", lineno)
            pairs = []
            for cell in cells.split():
                if cell[0] not in "+-" or not cell[1:].isdigit() or int(cell[1:]) < 1:
                    raise ParseError(f"bad cell {cell!r}", lineno)
                pairs.append((int(cell[1:]) - 1, 1.0 if cell[0] == "+" else -1.0))
            try:
                vec = SparseVector.from_pairs(pairs, config.r)
            except ValueError as exc:
                raise ParseError(str(exc), lineno) from None
            if vec.nnz != config.seed_len:
                raise ParseError(f"{vec.nnz} non-zeros, expected {config.seed_len}", lineno)
            reg._vectors[term] = vec
        return reg


def _items(doc):
    terms = getattr(doc, "terms", doc)
    return terms.items()


def encode_document(registry, doc):
    """Unit-length sum of ``weight * index_vector(term)`` over the document.

    ``doc`` is a term -> weight mapping or anything with such a ``terms``
    attribute.

    Raises
    ------
    ZeroVectorError
        If the sum is exactly zero, e.g. by cancellation. Re-encoding with a
        different ``rng_seed`` avoids it.
    """
    acc = np.zeros(registry.config.r)
    for term, w in _items(doc):
        accumulate(acc, registry.get_or_create(term), w)
    norm = np.linalg.norm(acc)
    if norm == 0:
        raise ZeroVectorError("document encodes to the zero vector")
    return acc / norm


def encode_corpus(registry, docs, doc_ids=None):
    """Encode every document into the rows of an ``(n, r)`` array."""
    out = np.empty((len(docs), registry.config.r))
    for i, doc in enumerate(docs):
        try:
            out[i] = encode_document(registry, doc)
        except ZeroVectorError as exc:
            did = doc_ids[i] if doc_ids is not None else getattr(doc, "doc_id", i)
            raise ZeroVectorError(f"document {did!r}: {exc}") from None
    return out


class RandomIndexer(TransformerMixin, BaseEstimator):
    """Random Indexing as a transformer.

    ``X`` may be a sequence of term -> weight mappings, or a sparse/dense
    matrix whose columns are named by ``terms`` (passed to :meth:`fit`,
    defaulting to the column numbers as strings). Output rows have unit norm.

    Parameters
    ----------
    n_components : int, default=1000
        Reduced dimensionality ``r``.
    seed_len : int, default=10
        Non-zeros per index vector; must be even.
    random_state : int or None
        Keys the per-term generators. ``None`` draws a seed at fit time.
    """

    def __init__(self, n_components=1000, seed_len=10, random_state=None):
        self.n_components = n_components
        self.seed_len = seed_len
        self.random_state = random_state

    def fit(self, X=None, y=None, terms=None):
        cfg = RiConfig(self.n_components, self.seed_len, seed_to_int(self.random_state))
        self.registry_ = IndexVectorRegistry(cfg)
        if terms is not None:
            self.terms_ = list(terms)
        elif X is not None and (sp.issparse(X) or isinstance(X, np.ndarray)):
            self.terms_ = [str(j) for j in range(X.shape[1])]
        else:
            self.terms_ = None
        return self

    def transform(self, X):
        check_is_fitted(self, "registry_")
        if sp.issparse(X) or isinstance(X, np.ndarray):
            if self.terms_ is None or len(self.terms_) != X.shape[1]:
                raise ValueError("matrix input needs one term name per column")
            R = sp.csr_matrix(X, dtype=np.float64) @ self.registry_.matrix(self.terms_)
            R = np.asarray(R.todense())
            norms = np.linalg.norm(R, axis=1)
            if np.any(norms == 0):
                raise ZeroVectorError(f"row {int(np.argmin(norms))} encodes to zero")
            return R / norms[:, None]
        return encode_corpus(self.registry_, list(X))
