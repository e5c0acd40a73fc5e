"""Weighted k-means used for K-tree node splits and codebook reduction.

The numerical inner loops are compiled with numba and shared with the tree
engine in :mod:`ritree._engine`, so a node split and a direct call to
:func:`run_with_restarts` execute the same code.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .exceptions import TooFewPointsError

__all__ = [
    "KMeansConfig",
    "Partition",
    "lloyd",
    "seed_perturbation",
    "seed_uniform",
    "seed_kmeanspp",
    "run_with_restarts",
    "SEEDINGS",
    "POLICIES",
]

SEEDINGS = ("perturbation", "uniform", "kmeans++")
POLICIES = ("run-to-convergence", "restart-after-6")

#: rounds allowed per attempt under the restart policy
RESTART_ROUNDS = 6
#: safety cap for "run to convergence"; never reached on sane input
CONVERGENCE_CAP = 10_000
#: perturbation step as a fraction of the mean coordinate standard deviation
PERTURBATION_SCALE = 1e-3


# ---------------------------------------------------------------------------
# compiled kernels


@njit(cache=True)
def _sqdist(a, b):
    s = 0.0
    for j in range(a.shape[0]):
        t = a[j] - b[j]
        s += t * t
    return s


@njit(cache=True)
def _assign(points, centroids, labels, dists):
    n = points.shape[0]
    k = centroids.shape[0]
    for i in range(n):
        best = 0
        bd = _sqdist(points[i], centroids[0])
        for c in range(1, k):
            dd = _sqdist(points[i], centroids[c])
            if dd < bd:
                bd = dd
                best = c
        labels[i] = best
        dists[i] = bd


@njit(cache=True)
def _repair_empty(points, centroids, labels, dists):
    # an empty cluster takes over the point farthest from its own centroid
    k = centroids.shape[0]
    n = points.shape[0]
    counts = np.zeros(k, np.int64)
    for i in range(n):
        counts[labels[i]] += 1
    for c in range(k):
        if counts[c] > 0:
            continue
        far = -1
        fd = -1.0
        for i in range(n):
            if counts[labels[i]] > 1 and dists[i] > fd:
                fd = dists[i]
                far = i
        if far < 0:
            return
        counts[labels[far]] -= 1
        labels[far] = c
        counts[c] = 1
        dists[far] = 0.0
        centroids[c, :] = points[far]


@njit(cache=True)
def _update(points, weights, labels, centroids, normalize):
    k, d = centroids.shape
    sums = np.zeros((k, d))
    wsum = np.zeros(k)
    for i in range(points.shape[0]):
        c = labels[i]
        w = weights[i]
        wsum[c] += w
        for j in range(d):
            sums[c, j] += w * points[i, j]
    for c in range(k):
        if wsum[c] > 0:
            for j in range(d):
                centroids[c, j] = sums[c, j] / wsum[c]
        if normalize:
            nrm = 0.0
            for j in range(d):
                nrm += centroids[c, j] * centroids[c, j]
            nrm = np.sqrt(nrm)
            if nrm > 0:
                for j in range(d):
                    centroids[c, j] /= nrm


@njit(cache=True)
def _lloyd_kernel(points, weights, init, max_rounds, normalize):
    n = points.shape[0]
    centroids = init.copy()
    labels = np.full(n, -1, np.int64)
    fresh = np.empty(n, np.int64)
    dists = np.empty(n)
    converged = False
    rounds = 0
    while rounds < max_rounds:
        rounds += 1
        _assign(points, centroids, fresh, dists)
        _repair_empty(points, centroids, fresh, dists)
        same = True
        for i in range(n):
            if fresh[i] != labels[i]:
                same = False
                break
        if same:
            converged = True
            break
        labels[:] = fresh
        _update(points, weights, labels, centroids, normalize)
    sse = 0.0
    for i in range(n):
        sse += weights[i] * _sqdist(points[i], centroids[labels[i]])
    return centroids, labels, sse, rounds, converged


@njit(cache=True)
def _seed_perturbation_kernel(points, weights, scale):
    n, d = points.shape
    wtot = 0.0
    mu = np.zeros(d)
    for i in range(n):
        wtot += weights[i]
        for j in range(d):
            mu[j] += weights[i] * points[i, j]
    mu /= wtot
    var = np.zeros(d)
    for i in range(n):
        for j in range(d):
            t = points[i, j] - mu[j]
            var[j] += weights[i] * t * t
    var /= wtot
    axis = 0
    std_mean = 0.0
    for j in range(d):
        std_mean += np.sqrt(var[j])
        if var[j] > var[axis]:
            axis = j
    std_mean /= d
    eps = scale * std_mean
    if eps == 0.0:
        # all points coincide; step relative to the mean's magnitude
        eps = scale * max(np.max(np.abs(mu)), 1.0)
    seeds = np.empty((2, d))
    seeds[0, :] = mu
    seeds[1, :] = mu
    seeds[0, axis] += eps
    seeds[1, axis] -= eps
    return seeds


@njit(cache=True)
def _splitmix_next(state):
    state[0] += np.uint64(0x9E3779B97F4A7C15)
    z = state[0]
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@njit(cache=True)
def _randbelow(state, n):
    u = (_splitmix_next(state) >> np.uint64(11)) * (1.0 / 9007199254740992.0)
    r = int(u * n)
    return r if r < n else n - 1


@njit(cache=True)
def _distinct_rows(points):
    n, d = points.shape
    reps = np.empty(n, np.int64)
    nd = 0
    for i in range(n):
        dup = False
        for q in range(nd):
            r = reps[q]
            eq = True
            for j in range(d):
                if points[i, j] != points[r, j]:
                    eq = False
                    break
            if eq:
                dup = True
                break
        if not dup:
            reps[nd] = i
            nd += 1
    return reps[:nd]


@njit(cache=True)
def _seed_uniform_kernel(points, k, state):
    reps = _distinct_rows(points).copy()
    nd = reps.shape[0]
    for j in range(k):
        r = j + _randbelow(state, nd - j)
        t = reps[j]
        reps[j] = reps[r]
        reps[r] = t
    out = np.empty((k, points.shape[1]))
    for j in range(k):
        out[j, :] = points[reps[j]]
    return out


@njit(cache=True)
def _restart_kernel(points, weights, k, max_rounds, max_restarts, normalize, state):
    # caller guarantees at least k distinct points
    best_c, best_l, best_sse, best_r, best_conv = _lloyd_kernel(
        points, weights, _seed_uniform_kernel(points, k, state), max_rounds, normalize
    )
    attempts = 1
    while not best_conv and attempts < max_restarts:
        c, lab, sse, rounds, conv = _lloyd_kernel(
            points, weights, _seed_uniform_kernel(points, k, state), max_rounds, normalize
        )
        attempts += 1
        if conv or sse < best_sse:
            best_c, best_l, best_sse, best_r, best_conv = c, lab, sse, rounds, conv
    return best_c, best_l, best_sse, best_r, best_conv, attempts


# ---------------------------------------------------------------------------
# public API


@dataclass(frozen=True)
class KMeansConfig:
    """k-means settings.

    ``seeding`` is one of ``"perturbation"`` (two seeds either side of the
    weighted mean, k must be 2), ``"uniform"`` (k distinct data points) or
    ``"kmeans++"``. ``policy`` is ``"run-to-convergence"`` or
    ``"restart-after-6"``; under the latter an attempt that has not converged
    after six assignment rounds is abandoned and reseeded.
    """

    k: int = 2
    seeding: str = "perturbation"
    policy: str = "run-to-convergence"
    max_restarts: int = 64
    normalize_centroids: bool = False

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.max_restarts < 1:
            raise ValueError("max_restarts must be >= 1")
        if self.seeding not in SEEDINGS:
            raise ValueError(f"seeding must be one of {SEEDINGS}")
        if self.policy not in POLICIES:
            raise ValueError(f"policy must be one of {POLICIES}")
        if self.seeding == "perturbation" and self.k != 2:
            raise ValueError("perturbation seeding produces exactly two seeds")


@dataclass
class Partition:
    centroids: np.ndarray
    labels: np.ndarray
    sse: float
    n_rounds: int
    converged: bool
    n_attempts: int = 1

    @property
    def k(self):
        return self.centroids.shape[0]


def _prepare(points, weights):
    points = np.ascontiguousarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] == 0:
        raise TooFewPointsError("need a non-empty 2-d array of points")
    if weights is None:
        weights = np.ones(points.shape[0])
    else:
        weights = np.ascontiguousarray(weights, dtype=np.float64).ravel()
        if weights.shape[0] != points.shape[0]:
            raise ValueError("one weight per point required")
        if np.any(weights <= 0):
            raise ValueError("weights must be positive")
    return points, weights


def _n_distinct(points):
    return np.unique(points, axis=0).shape[0]


def lloyd(points, init, weights=None, *, max_rounds=None, normalize_centroids=False):
    """Lloyd iterations from the given initial centroids.

    Each round assigns every point to its nearest centroid (ties go to the
    lower index), repairs empty clusters, and stops when an assignment round
    changes nothing. Otherwise centroids become the weighted means of their
    members, unit-normalized when ``normalize_centroids`` is set.

    Parameters
    ----------
    points : ndarray of shape (n, d)
    init : ndarray of shape (k, d)
    weights : ndarray of shape (n,), optional
    max_rounds : int, optional
        Assignment rounds allowed. Defaults to running to convergence.

    Returns
    -------
    Partition
        ``sse`` is the weighted sum of squared distances to the assigned
        centroid.
    """
    points, weights = _prepare(points, weights)
    init = np.ascontiguousarray(init, dtype=np.float64)
    if init.ndim != 2 or init.shape[1] != points.shape[1]:
        raise ValueError("init must have shape (k, d)")
    k = init.shape[0]
    if k > points.shape[0]:
        raise TooFewPointsError(f"k={k} exceeds {points.shape[0]} points")
    if max_rounds is None:
        max_rounds = CONVERGENCE_CAP
    c, lab, sse, rounds, conv = _lloyd_kernel(
        points, weights, init, int(max_rounds), bool(normalize_centroids)
    )
    return Partition(c, lab, float(sse), int(rounds), bool(conv))


def seed_perturbation(points, weights=None):
    """Two seeds displaced from the weighted mean in opposite directions.

    The displacement runs along the coordinate axis of largest variance with
    magnitude ``1e-3`` times the mean per-coordinate standard deviation.
    """
    points, weights = _prepare(points, weights)
    if points.shape[0] < 2:
        raise TooFewPointsError("perturbation seeding needs at least 2 points")
    return _seed_perturbation_kernel(points, weights, PERTURBATION_SCALE)


def seed_uniform(points, k, rng):
    """``k`` distinct points drawn uniformly without replacement."""
    points = np.asarray(points, dtype=np.float64)
    distinct = np.unique(points, axis=0)
    if k > distinct.shape[0]:
        raise TooFewPointsError(f"k={k} exceeds {distinct.shape[0]} distinct points")
    # keep first occurrences in input order so results do not depend on sort order
    _, first = np.unique(points, axis=0, return_index=True)
    reps = np.sort(first)
    pick = rng.choice(reps.size, size=k, replace=False)
    return points[reps[pick]].copy()


def seed_kmeanspp(points, weights, k, rng):
    """k-means++ seeding: the first seed is uniform over points, each later
    one is drawn with probability proportional to ``weight * D**2``."""
    points, weights = _prepare(points, weights)
    if k > _n_distinct(points):
        raise TooFewPointsError(f"k={k} exceeds the number of distinct points")
    n = points.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = ((points - points[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        p = weights * d2
        p /= p.sum()
        nxt = int(rng.choice(n, p=p))
        chosen.append(nxt)
        d2 = np.minimum(d2, ((points - points[nxt]) ** 2).sum(axis=1))
    return points[chosen].copy()


def _seed(points, weights, config, rng):
    if config.seeding == "perturbation":
        return seed_perturbation(points, weights)
    if config.seeding == "uniform":
        return seed_uniform(points, config.k, rng)
    return seed_kmeanspp(points, weights, config.k, rng)


def run_with_restarts(points, weights, config, rng=None):
    """Seed and iterate according to ``config``.

    Under ``"restart-after-6"`` attempts are reseeded until one converges
    within six rounds or ``max_restarts`` attempts have been made; the
    converged attempt, or failing that the lowest-SSE one, is returned.
    Under ``"run-to-convergence"`` every one of ``max_restarts`` attempts runs
    to convergence and the lowest-SSE result is returned.
    """
    points, weights = _prepare(points, weights)
    if config.k > points.shape[0]:
        raise TooFewPointsError(f"k={config.k} exceeds {points.shape[0]} points")
    if rng is None:
        rng = np.random.default_rng()
    restart = config.policy == "restart-after-6"
    rounds = RESTART_ROUNDS if restart else None
    best = None
    for attempt in range(1, config.max_restarts + 1):
        part = lloyd(
            points,
            _seed(points, weights, config, rng),
            weights,
            max_rounds=rounds,
            normalize_centroids=config.normalize_centroids,
        )
        part.n_attempts = attempt
        if restart and part.converged:
            return part
        if best is None or part.sse < best.sse:
            best = part
        if config.seeding == "perturbation":
            break  # deterministic seeding: further attempts repeat the first
    best.n_attempts = attempt
    return best
