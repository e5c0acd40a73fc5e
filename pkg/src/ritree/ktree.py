"""K-tree: a height-balanced nearest-neighbour cluster tree.

Leaves hold the inserted vectors; every internal entry holds the centroid of
the vectors beneath it together with their count. A node that overflows its
order ``m`` is split with 2-means and the two centroids are promoted into the
parent, growing a new root when the split reaches the top.

Two variants are supported:

``"unmodified"``
    Centroids are exact means. Splits seed 2-means by perturbing the mean and
    run to convergence.
``"modified"``
    Inputs must be unit vectors and all centroids are kept at unit length.
    Splits use uniform random seeding and restart any attempt that has not
    converged within six rounds.
"""

from __future__ import annotations

import json
from typing import NamedTuple

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_is_fitted

from . import _engine
from ._engine import DEPTH, N_INSERTED, N_NODES, ROOT
from ._validation import (
    check_choice,
    check_positive_int,
    check_unit_rows,
    check_vectors,
    seed_to_int,
)
from .exceptions import (
    BadLevelError,
    DimensionMismatchError,
    EmptyNodeError,
    FormatError,
    NotUnitError,
)
from .vecspace import squared_euclidean

__all__ = ["KTree", "Level", "Node", "audit", "nearest_entry", "update_path"]

VARIANTS = ("unmodified", "modified")
UNIT_TOL = 1e-6
FORMAT_NAME = "ritree-ktree"
FORMAT_VERSION = 1


class Level(NamedTuple):
    """Entries of one tree level, left to right."""

    centroids: np.ndarray
    weights: np.ndarray
    children: np.ndarray  # child node ids; -1 at the leaf level


class Node:
    """Read-only view of one pool node."""

    __slots__ = ("_tree", "id")

    def __init__(self, tree, node_id):
        self._tree = tree
        self.id = int(node_id)

    @property
    def is_leaf(self):
        return bool(self._tree._leaf[self.id])

    def __len__(self):
        return int(self._tree._size[self.id])

    @property
    def vectors(self):
        return self._tree._vecs[self.id, : len(self)]

    @property
    def weights(self):
        return self._tree._counts[self.id, : len(self)]

    @property
    def children(self):
        if self.is_leaf:
            return []
        return [Node(self._tree, c) for c in self._tree._child[self.id, : len(self)]]

    @property
    def doc_ids(self):
        if not self.is_leaf:
            return []
        ids = self._tree._doc_ids
        return [ids[r] for r in self._tree._docref[self.id, : len(self)]]

    def __repr__(self):
        kind = "leaf" if self.is_leaf else "internal"
        return f"Node(id={self.id}, {kind}, entries={len(self)})"


def nearest_entry(vectors, v):
    """Index of the row of ``vectors`` closest to ``v``; ties go low."""
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim != 2 or vectors.shape[0] == 0:
        raise EmptyNodeError("nearest_entry on an empty node")
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (vectors.shape[1],):
        raise DimensionMismatchError("query dimensionality differs from node")
    return int(_engine._nearest(vectors[None], 0, vectors.shape[0], v))


def update_path(centroids, weights, v, variant="unmodified"):
    """Fold ``v`` into each (centroid, weight) pair in place.

    ``centroids`` is a list of 1-d arrays and ``weights`` a mutable sequence
    of counts, one per entry on a root-to-leaf search path.
    """
    v = np.asarray(v, dtype=np.float64)
    for i, mu in enumerate(centroids):
        w = weights[i]
        mu *= w
        mu += v
        mu /= w + 1
        if variant == "modified":
            mu /= np.linalg.norm(mu)
        weights[i] = w + 1


class KTree(ClusterMixin, BaseEstimator):
    """Incremental K-tree clusterer.

    Parameters
    ----------
    order : int, default=30
        Maximum entries per node (``m``), at least 2.
    variant : {"unmodified", "modified"}, default="unmodified"
    max_restarts : int, default=64
        Cap on 2-means reseeding in the modified variant.
    random_state : int, Generator or None
        Seeds the 2-means reseeding of the modified variant.

    Attributes
    ----------
    depth_ : int
        Number of node levels; 1 while the root is a leaf.
    n_inserted_ : int
    cluster_centers_ : ndarray of shape (n_codebook, n_features)
        Above-leaf centroids, the finest clusters in the tree.
    labels_ : ndarray of shape (n_inserted_,)
        Codebook index of each document in insertion order.
    """

    def __init__(self, order=30, variant="unmodified", max_restarts=64, random_state=None):
        self.order = order
        self.variant = variant
        self.max_restarts = max_restarts
        self.random_state = random_state

    # ------------------------------------------------------------------ state

    def _reset(self, n_features):
        m = check_positive_int(self.order, "order", minimum=2)
        check_choice(self.variant, "variant", VARIANTS)
        check_positive_int(self.max_restarts, "max_restarts")
        self.n_features_in_ = int(n_features)
        self._m = m
        self._doc_ids = []
        self._alloc(16)
        self._meta = np.array([0, 1, 1, 0], dtype=np.int64)
        self._leaf[0] = 1
        self._rng_state = np.array(
            [np.uint64(seed_to_int(self.random_state))], dtype=np.uint64
        )

    def _alloc(self, cap):
        m1 = self._m + 1
        d = self.n_features_in_
        self._vecs = np.zeros((cap, m1, d))
        self._counts = np.zeros((cap, m1), np.int64)
        self._child = np.full((cap, m1), -1, np.int64)
        self._docref = np.full((cap, m1), -1, np.int64)
        self._size = np.zeros(cap, np.int64)
        self._leaf = np.zeros(cap, np.uint8)

    def _grow(self):
        n = self._meta[N_NODES]
        old = (self._vecs, self._counts, self._child, self._docref, self._size, self._leaf)
        self._alloc(2 * self._vecs.shape[0])
        for new, prev in zip(
            (self._vecs, self._counts, self._child, self._docref, self._size, self._leaf), old
        ):
            new[:n] = prev[:n]

    @property
    def depth_(self):
        check_is_fitted(self, "n_features_in_")
        return int(self._meta[DEPTH])

    @property
    def n_inserted_(self):
        check_is_fitted(self, "n_features_in_")
        return int(self._meta[N_INSERTED])

    @property
    def n_nodes_(self):
        check_is_fitted(self, "n_features_in_")
        return int(self._meta[N_NODES])

    @property
    def root_(self):
        check_is_fitted(self, "n_features_in_")
        return Node(self, self._meta[ROOT])

    @property
    def doc_ids_(self):
        check_is_fitted(self, "n_features_in_")
        return list(self._doc_ids)

    # ---------------------------------------------------------------- fitting

    def fit(self, X, y=None, doc_ids=None):
        """Build a fresh tree by inserting the rows of ``X`` in order."""
        X = check_vectors(X)
        self._reset(X.shape[1])
        return self.partial_fit(X, doc_ids=doc_ids)

    def partial_fit(self, X, y=None, doc_ids=None):
        """Insert the rows of ``X`` into the existing tree (or a new one)."""
        X = check_vectors(X, getattr(self, "n_features_in_", None))
        if not hasattr(self, "n_features_in_"):
            self._reset(X.shape[1])
        n = X.shape[0]
        if doc_ids is None:
            base = self.n_inserted_
            doc_ids = range(base, base + n)
        doc_ids = list(doc_ids)
        if len(doc_ids) != n:
            raise ValueError("one doc_id per row required")
        if self.variant == "modified" and n:
            check_unit_rows(X, UNIT_TOL)
        first = len(self._doc_ids)
        self._doc_ids.extend(doc_ids)
        refs = np.arange(first, first + n, dtype=np.int64)
        i = 0
        while i < n:
            i = _engine.insert_batch(
                self._vecs, self._counts, self._child, self._docref, self._size,
                self._leaf, self._meta, X, refs, i, self._m,
                self.variant == "modified", int(self.max_restarts), self._rng_state,
            )
            if i < n and self._vecs.shape[0] - self._meta[N_NODES] < self._meta[DEPTH] + 2:
                self._grow()
        self._labels = None
        return self

    def insert(self, vector, doc_id=None):
        """Insert one vector; ``doc_id`` defaults to its insertion index."""
        v = np.asarray(vector, dtype=np.float64)
        if v.ndim != 1:
            raise DimensionMismatchError("insert takes a single 1-d vector")
        if hasattr(self, "n_features_in_") and v.shape[0] != self.n_features_in_:
            raise DimensionMismatchError(
                f"expected {self.n_features_in_} features, got {v.shape[0]}"
            )
        if self.variant == "modified" and abs(np.linalg.norm(v) - 1.0) > UNIT_TOL:
            raise NotUnitError(f"norm {np.linalg.norm(v)!r}; unit vectors required")
        return self.partial_fit(v[None, :], doc_ids=None if doc_id is None else [doc_id])

    # ------------------------------------------------------------- traversal

    def _level_nodes(self):
        """Node ids per level, root level first, each left to right."""
        levels = [np.array([self._meta[ROOT]])]
        for _ in range(self.depth_ - 1):
            cur = levels[-1]
            levels.append(
                np.concatenate([self._child[n, : self._size[n]] for n in cur])
            )
        return levels

    def level(self, depth_index):
        """Entries at ``depth_index`` (1 = root level, ``depth_`` = leaves)."""
        check_is_fitted(self, "n_features_in_")
        if not 1 <= depth_index <= self.depth_:
            raise BadLevelError(f"level must lie in 1..{self.depth_}, got {depth_index}")
        nodes = self._level_nodes()[depth_index - 1]
        sizes = self._size[nodes]
        rows = np.repeat(nodes, sizes)
        cols = np.concatenate([np.arange(s) for s in sizes]) if rows.size else rows
        return Level(
            self._vecs[rows, cols].copy(),
            self._counts[rows, cols].copy(),
            self._child[rows, cols].copy(),
        )

    def codebook(self):
        """Above-leaf centroids.

        While the tree is a single leaf there is no centroid level; the
        codebook is then one entry, the mean of everything inserted.
        """
        check_is_fitted(self, "n_features_in_")
        if self.depth_ >= 2:
            return self.level(self.depth_ - 1)
        root = self.root_
        if len(root) == 0:
            d = self.n_features_in_
            return Level(np.empty((0, d)), np.empty(0, np.int64), np.empty(0, np.int64))
        c = root.vectors.mean(axis=0)
        if self.variant == "modified":
            nrm = np.linalg.norm(c)
            if nrm > 0:
                c = c / nrm
        return Level(c[None, :], np.array([len(root)]), np.array([root.id]))

    @property
    def cluster_centers_(self):
        return self.codebook().centroids

    def assignments(self):
        """Map each document id to the index of its codebook entry."""
        check_is_fitted(self, "n_features_in_")
        out = {}
        for idx, leaf in enumerate(self.codebook().children):
            for r in self._docref[leaf, : self._size[leaf]]:
                out[self._doc_ids[r]] = idx
        return out

    @property
    def labels_(self):
        check_is_fitted(self, "n_features_in_")
        if getattr(self, "_labels", None) is None:
            labels = np.empty(len(self._doc_ids), np.int64)
            for idx, leaf in enumerate(self.codebook().children):
                labels[self._docref[leaf, : self._size[leaf]]] = idx
            self._labels = labels
        return self._labels

    def predict(self, X):
        """Codebook index reached by a nearest-neighbour descent for each row."""
        check_is_fitted(self, "n_features_in_")
        X = check_vectors(X, self.n_features_in_)
        if self.depth_ == 1:
            return np.zeros(X.shape[0], np.int64)
        above = self._level_nodes()[self.depth_ - 2]
        offset = dict(zip(above.tolist(), np.cumsum(np.r_[0, self._size[above][:-1]]).tolist()))
        out = np.empty(X.shape[0], np.int64)
        for i, v in enumerate(X):
            node = self._meta[ROOT]
            for _ in range(self.depth_ - 2):
                node = self._child[node, _engine._nearest(self._vecs, node, self._size[node], v)]
            out[i] = offset[int(node)] + _engine._nearest(self._vecs, node, self._size[node], v)
        return out

    def transform(self, X):
        """Squared distances from each row to every codebook centroid."""
        X = check_vectors(X, self.n_features_in_)
        C = self.cluster_centers_
        return ((X[:, None, :] - C[None, :, :]) ** 2).sum(axis=2)

    # ---------------------------------------------------------- serializing

    def _node_to_list(self, n):
        size = self._size[n]
        vecs = self._vecs[n, :size].tolist()
        w = self._counts[n, :size].tolist()
        if self._leaf[n]:
            refs = [self._doc_ids[r] for r in self._docref[n, :size]]
            entries = [[v, wi, r, 0] for v, wi, r in zip(vecs, w, refs)]
        else:
            kids = [self._node_to_list(c) for c in self._child[n, :size]]
            entries = [[v, wi, k, 0] for v, wi, k in zip(vecs, w, kids)]
        return {"leaf": bool(self._leaf[n]), "entries": entries}

    def to_dict(self):
        """JSON-compatible dump; entries are ``[vector, weight, child|doc_id,
        tombstone]`` with the tombstone flag always 0."""
        check_is_fitted(self, "n_features_in_")
        return {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "config": {
                "order": self._m,
                "variant": self.variant,
                "max_restarts": int(self.max_restarts),
                "random_state": self.random_state
                if isinstance(self.random_state, int) or self.random_state is None
                else None,
            },
            "dim": self.n_features_in_,
            "depth": self.depth_,
            "n_inserted": self.n_inserted_,
            "rng_state": int(self._rng_state[0]),
            "root": self._node_to_list(self._meta[ROOT]),
        }

    def dumps(self):
        return json.dumps(self.to_dict(), separators=(",", ":"))

    def dump(self, fp):
        fp.write(self.dumps())

    @classmethod
    def from_dict(cls, data):
        try:
            return _TreeReader(data).tree
        except FormatError:
            raise
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise FormatError(f"malformed tree dump: {exc}") from exc

    @classmethod
    def loads(cls, text):
        if isinstance(text, bytes):
            try:
                text = text.decode("utf-8")
            except UnicodeDecodeError as exc:
                raise FormatError("dump is not UTF-8", exc.start) from exc
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            offset = len(text[: exc.pos].encode("utf-8"))
            raise FormatError(f"invalid JSON: {exc.msg}", offset) from exc
        return cls.from_dict(data)

    @classmethod
    def load(cls, fp):
        return cls.loads(fp.read())


class _TreeReader:
    """Rebuild a tree from :meth:`KTree.to_dict` output, validating as it goes."""

    def __init__(self, data):
        if not isinstance(data, dict) or data.get("format") != FORMAT_NAME:
            raise FormatError("not a K-tree dump")
        if data.get("version") != FORMAT_VERSION:
            raise FormatError(f"unsupported version {data.get('version')!r}")
        cfg = data["config"]
        tree = KTree(
            order=cfg["order"],
            variant=cfg["variant"],
            max_restarts=cfg["max_restarts"],
            random_state=cfg["random_state"],
        )
        try:
            tree._reset(int(data["dim"]))
        except (TypeError, ValueError) as exc:
            raise FormatError(f"bad config: {exc}") from exc
        self.tree = tree
        self.depth = int(data["depth"])
        tree._rng_state[0] = np.uint64(int(data["rng_state"]))
        tree._meta[N_NODES] = 0
        refs = []
        root = self._read(data["root"], 1, "root", refs)
        tree._meta[ROOT] = root
        tree._meta[DEPTH] = self.depth
        tree._meta[N_INSERTED] = int(data["n_inserted"])
        if tree._meta[N_INSERTED] != len(tree._doc_ids):
            raise FormatError("n_inserted disagrees with leaf contents")

    def _new_node(self):
        t = self.tree
        if t._meta[N_NODES] >= t._vecs.shape[0]:
            t._grow()
        n = t._meta[N_NODES]
        t._meta[N_NODES] += 1
        return n

    def _read(self, node, depth, where, refs):
        t = self.tree
        if not isinstance(node, dict) or "entries" not in node:
            raise FormatError(f"{where}: node must be an object with entries")
        leaf = bool(node["leaf"])
        entries = node["entries"]
        if leaf != (depth == self.depth):
            raise FormatError(f"{where}: leaf at depth {depth} of {self.depth}")
        if len(entries) > t._m or (not entries and depth > 1):
            raise FormatError(f"{where}: {len(entries)} entries for order {t._m}")
        n = self._new_node()
        t._leaf[n] = leaf
        t._size[n] = len(entries)
        for j, entry in enumerate(entries):
            vec, weight, target, tomb = entry
            vec = np.asarray(vec, dtype=np.float64)
            if vec.shape != (t.n_features_in_,):
                raise FormatError(f"{where}[{j}]: vector has wrong dimensionality")
            if tomb:
                raise FormatError(f"{where}[{j}]: deleted entries are not supported")
            t._vecs[n, j] = vec
            t._counts[n, j] = int(weight)
            if leaf:
                t._docref[n, j] = len(t._doc_ids)
                t._doc_ids.append(target)
            else:
                t._child[n, j] = self._read(target, depth + 1, f"{where}[{j}]", refs)
        return n


def audit(tree, mean_rtol=1e-6, unit_tol=1e-9):
    """Check structural invariants; returns a list of violation messages."""
    problems = []
    levels = tree._level_nodes()
    m = tree._m
    depth = tree.depth_
    for li, nodes in enumerate(levels, start=1):
        for n in nodes:
            size = int(tree._size[n])
            if tree.n_inserted_ and not 1 <= size <= m:
                problems.append(f"node {n}: {size} entries outside 1..{m}")
            if bool(tree._leaf[n]) != (li == depth):
                problems.append(f"node {n}: leaf flag wrong at level {li} of {depth}")
    total = 0
    for leaf in levels[-1]:
        total += int(tree._size[leaf])
        if np.any(tree._counts[leaf, : tree._size[leaf]] != 1):
            problems.append(f"leaf {leaf}: entry weight != 1")
    if total != tree.n_inserted_:
        problems.append(f"{total} leaf entries but n_inserted={tree.n_inserted_}")
    for nodes in levels[:-1]:
        for n in nodes:
            for j in range(tree._size[n]):
                c = tree._child[n, j]
                w = tree._counts[c, : tree._size[c]]
                if tree._counts[n, j] != w.sum():
                    problems.append(f"node {n}[{j}]: weight {tree._counts[n, j]} != {w.sum()}")
                mu = tree._vecs[n, j]
                if tree.variant == "unmodified":
                    ref = w @ tree._vecs[c, : tree._size[c]] / w.sum()
                    scale = max(np.linalg.norm(ref), 1.0)
                    if np.sqrt(squared_euclidean(mu, ref)) > mean_rtol * scale:
                        problems.append(f"node {n}[{j}]: centroid is not the child mean")
                elif abs(np.linalg.norm(mu) - 1.0) > unit_tol:
                    problems.append(f"node {n}[{j}]: centroid norm {np.linalg.norm(mu)!r}")
    return problems
