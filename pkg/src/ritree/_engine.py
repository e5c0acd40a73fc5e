"""Compiled K-tree insertion over a flat node pool.

Node ``i`` owns row ``i`` of every pool array:

* ``vecs[i, j]``   entry vector (centroid for internal nodes, data for leaves)
* ``counts[i, j]`` number of data vectors beneath the entry (1 in leaves)
* ``child[i, j]``  child node id, -1 in leaves
* ``docref[i, j]`` position of the document in the owner's id list, -1 inside
* ``size[i]``      live entries; rows are ``m + 1`` wide for the transient
  overflow before a split
* ``leaf[i]``      1 for leaves

``meta`` holds ``[root, depth, n_nodes, n_inserted]``.
"""

import numpy as np
from numba import njit

from .kmeans import (
    CONVERGENCE_CAP,
    PERTURBATION_SCALE,
    RESTART_ROUNDS,
    _distinct_rows,
    _lloyd_kernel,
    _restart_kernel,
    _seed_perturbation_kernel,
    _sqdist,
)

ROOT, DEPTH, N_NODES, N_INSERTED = 0, 1, 2, 3


@njit(cache=True)
def _nearest(vecs, node, size, v):
    best = 0
    bd = _sqdist(vecs[node, 0], v)
    for i in range(1, size):
        dd = _sqdist(vecs[node, i], v)
        if dd < bd:
            bd = dd
            best = i
    return best


@njit(cache=True)
def _normalize_row(x):
    s = 0.0
    for j in range(x.shape[0]):
        s += x[j] * x[j]
    s = np.sqrt(s)
    if s > 0:
        for j in range(x.shape[0]):
            x[j] /= s


@njit(cache=True)
def _partition_entries(pts, w, modified, max_restarts, state):
    """Two-way labels for an overflowing node's entries."""
    n = pts.shape[0]
    labels = np.empty(n, np.int64)
    if _distinct_rows(pts).shape[0] >= 2:
        if modified:
            _, lab, _, _, _, _ = _restart_kernel(
                pts, w, 2, RESTART_ROUNDS, max_restarts, True, state
            )
        else:
            seeds = _seed_perturbation_kernel(pts, w, PERTURBATION_SCALE)
            _, lab, _, _, _ = _lloyd_kernel(pts, w, seeds, CONVERGENCE_CAP, False)
        n1 = 0
        for i in range(n):
            n1 += lab[i]
        if 0 < n1 < n:
            labels[:] = lab
            return labels
    # identical entries cannot be separated: split by index parity
    for i in range(n):
        labels[i] = i % 2
    return labels


@njit(cache=True)
def _split(vecs, counts, child, docref, size, leaf, meta, node, modified,
           max_restarts, state, c0, c1):
    """Split ``node`` in place, returning the new sibling id.

    ``c0``/``c1`` receive the centroids of the two halves; the return tuple
    also carries their weights.
    """
    n = size[node]
    d = vecs.shape[2]
    pts = vecs[node, :n].copy()
    w = counts[node, :n].astype(np.float64)
    labels = _partition_entries(pts, w, modified, max_restarts, state)

    sib = meta[N_NODES]
    meta[N_NODES] += 1
    leaf[sib] = leaf[node]
    ch = child[node, :n].copy()
    dr = docref[node, :n].copy()
    cn = counts[node, :n].copy()
    c0[:] = 0.0
    c1[:] = 0.0
    w0 = 0
    w1 = 0
    a = 0
    b = 0
    for i in range(n):
        if labels[i] == 0:
            vecs[node, a] = pts[i]
            counts[node, a] = cn[i]
            child[node, a] = ch[i]
            docref[node, a] = dr[i]
            for j in range(d):
                c0[j] += cn[i] * pts[i, j]
            w0 += cn[i]
            a += 1
        else:
            vecs[sib, b] = pts[i]
            counts[sib, b] = cn[i]
            child[sib, b] = ch[i]
            docref[sib, b] = dr[i]
            for j in range(d):
                c1[j] += cn[i] * pts[i, j]
            w1 += cn[i]
            b += 1
    size[node] = a
    size[sib] = b
    c0 /= w0
    c1 /= w1
    if modified:
        _normalize_row(c0)
        _normalize_row(c1)
    return sib, w0, w1


@njit(cache=True)
def _insert_one(vecs, counts, child, docref, size, leaf, meta, v, doc, m,
                modified, max_restarts, state, path_node, path_idx, c0, c1):
    node = meta[ROOT]
    plen = 0
    while not leaf[node]:
        best = _nearest(vecs, node, size[node], v)
        path_node[plen] = node
        path_idx[plen] = best
        plen += 1
        node = child[node, best]

    l = size[node]
    vecs[node, l] = v
    counts[node, l] = 1
    child[node, l] = -1
    docref[node, l] = doc
    size[node] = l + 1

    # running weighted means along the search path
    d = v.shape[0]
    for p in range(plen):
        pn = path_node[p]
        pi = path_idx[p]
        w = counts[pn, pi]
        for j in range(d):
            vecs[pn, pi, j] = (w * vecs[pn, pi, j] + v[j]) / (w + 1)
        counts[pn, pi] = w + 1
        if modified:
            _normalize_row(vecs[pn, pi])
    meta[N_INSERTED] += 1

    cur = node
    level = plen
    while size[cur] > m:
        sib, w0, w1 = _split(vecs, counts, child, docref, size, leaf, meta, cur,
                             modified, max_restarts, state, c0, c1)
        if level == 0:
            r = meta[N_NODES]
            meta[N_NODES] += 1
            leaf[r] = 0
            vecs[r, 0] = c0
            counts[r, 0] = w0
            child[r, 0] = cur
            docref[r, 0] = -1
            vecs[r, 1] = c1
            counts[r, 1] = w1
            child[r, 1] = sib
            docref[r, 1] = -1
            size[r] = 2
            meta[ROOT] = r
            meta[DEPTH] += 1
            break
        p = path_node[level - 1]
        pi = path_idx[level - 1]
        vecs[p, pi] = c0
        counts[p, pi] = w0
        l = size[p]
        vecs[p, l] = c1
        counts[p, l] = w1
        child[p, l] = sib
        docref[p, l] = -1
        size[p] = l + 1
        cur = p
        level -= 1


@njit(cache=True)
def insert_batch(vecs, counts, child, docref, size, leaf, meta, X, docs, start,
                 m, modified, max_restarts, state):
    """Insert rows ``X[start:]`` until done or the pool runs low.

    Returns the index of the first row not inserted.
    """
    cap = vecs.shape[0]
    d = vecs.shape[2]
    path_node = np.empty(meta[DEPTH] + 64, np.int64)
    path_idx = np.empty(meta[DEPTH] + 64, np.int64)
    c0 = np.empty(d)
    c1 = np.empty(d)
    i = start
    while i < X.shape[0]:
        # a single insert allocates at most one node per level plus a new root
        if cap - meta[N_NODES] < meta[DEPTH] + 2 or meta[DEPTH] + 1 >= path_node.shape[0]:
            return i
        _insert_one(vecs, counts, child, docref, size, leaf, meta, X[i], docs[i], m,
                    modified, max_restarts, state, path_node, path_idx, c0, c1)
        i += 1
    return i
