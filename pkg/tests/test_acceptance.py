"""Acceptance gate: one test per criterion, each recording PASS/FAIL."""

import time

import numpy as np
import pytest

from oracles import dense_ri, exhaustive_two_means, subtree_stats, walk
from ritree.cli import main
from ritree.evaluate import (
    PRESETS,
    ContingencyTable,
    micro_entropy,
    micro_purity,
    run_experiment,
    welch_t_test,
)
from ritree.kmeans import lloyd, seed_perturbation, seed_uniform
from ritree.ktree import KTree
from ritree.randindex import IndexVectorRegistry, RiConfig, encode_corpus
from ritree.synthetic import make_links, make_topic_corpus

pytestmark = pytest.mark.acceptance


def _unit(X):
    return X / np.linalg.norm(X, axis=1, keepdims=True)


def _warm_up():
    KTree(order=3).fit(np.ones((6, 2)))
    KTree(order=3, variant="modified", random_state=0).fit(_unit(np.ones((6, 2))))


def _structure_problem(tree):
    """Vectorized balance / occupancy / weight-conservation check."""
    m = tree.order
    size = tree._size
    levels = tree._level_nodes()
    slots = np.arange(m + 1)
    for depth, nodes in enumerate(levels, start=1):
        s = size[nodes]
        if s.min() < 1 or s.max() > m:
            return f"occupancy {s.min()}..{s.max()} outside 1..{m}"
        if np.any(tree._leaf[nodes].astype(bool) != (depth == len(levels))):
            return "leaves at unequal depth"
    for nodes in levels[:-1]:
        live = slots < size[nodes][:, None]
        kids = np.where(live, tree._child[nodes], nodes[0])
        kid_live = slots[None, None, :] < size[kids][..., None]
        sums = (tree._counts[kids] * kid_live).sum(-1)
        if np.any((sums != tree._counts[nodes]) & live):
            return "entry weight differs from its subtree size"
    if size[levels[-1]].sum() != tree.n_inserted_:
        return "leaf entries do not match insert count"
    return None


def test_criterion_1_structural_suite(record):
    _warm_up()
    rng = np.random.default_rng(1)
    problems = []
    start = time.perf_counter()
    for i in range(10_000):
        n = int(rng.integers(1, 501))
        m = (3, 11)[i % 2]
        d = (2, 50)[(i // 2) % 2]
        variant = ("unmodified", "modified")[(i // 4) % 2]
        X = rng.normal(size=(n, d))
        if variant == "modified":
            X = _unit(X)
        tree = KTree(order=m, variant=variant, random_state=i).fit(X)
        problem = _structure_problem(tree)
        if problem:
            problems.append((i, problem))
    elapsed = time.perf_counter() - start
    ok = not problems and elapsed < 60
    record(1, ok, f"10000 sequences, {len(problems)} violations, {elapsed:.1f}s < 60s")
    assert not problems, problems[:5]
    assert elapsed < 60


def test_criterion_2_mean_invariant(record):
    rng = np.random.default_rng(2)
    worst_rel = 0.0
    worst_norm = 0.0
    for i in range(60):
        n = int(rng.integers(1, 800))
        m = int(rng.integers(2, 16))
        d = int(rng.integers(1, 40))
        X = rng.normal(size=(n, d)) + rng.normal(size=d) * 3
        tree = KTree(order=m, variant="unmodified").fit(X)
        for node, _ in walk(tree.root_):
            if node.is_leaf:
                continue
            for mu, child in zip(node.vectors, node.children):
                total, count = subtree_stats(child)
                ref = total / count
                rel = np.linalg.norm(mu - ref) / np.linalg.norm(ref)
                worst_rel = max(worst_rel, rel)
        U = _unit(rng.normal(size=(n, d)))
        tree = KTree(order=m, variant="modified", random_state=i).fit(U)
        for node, _ in walk(tree.root_):
            if not node.is_leaf:
                worst_norm = max(worst_norm, np.abs(np.linalg.norm(node.vectors, axis=1) - 1).max())
    ok = worst_rel <= 1e-6 and worst_norm <= 1e-9
    record(2, ok, f"max relative mean error {worst_rel:.2e} (<=1e-6), "
                  f"max |norm-1| {worst_norm:.2e} (<=1e-9)")
    assert worst_rel <= 1e-6
    assert worst_norm <= 1e-9


def test_criterion_3_incremental_equals_product(record):
    start = time.perf_counter()
    rng = np.random.default_rng(3)
    n, t, r = 100, 500, 50
    D = np.where(rng.random((n, t)) < 0.05, rng.gamma(2.0, 1.0, size=(n, t)), 0.0)
    D[np.arange(n), rng.integers(t, size=n)] += 1.0  # every document non-empty
    terms = [f"term{j}" for j in range(t)]
    registry = IndexVectorRegistry(RiConfig(r, 10, 7))
    docs = [{terms[j]: D[i, j] for j in np.flatnonzero(D[i])} for i in range(n)]
    incremental = encode_corpus(registry, docs)
    I = np.vstack([registry[term].to_dense() for term in terms])
    explicit = dense_ri(D, I)
    err = np.abs(incremental - explicit).max()
    elapsed = time.perf_counter() - start
    ok = err <= 1e-9 and elapsed < 5
    record(3, ok, f"max coordinate error {err:.2e} (<=1e-9), {elapsed:.2f}s < 5s")
    assert err <= 1e-9
    assert elapsed < 5


def _cosines(X, pairs):
    return (X[pairs[:, 0]] * X[pairs[:, 1]]).sum(axis=1)


def test_criterion_4_distance_preservation(record):
    docs, _, _ = make_topic_corpus(n_docs=400, n_terms=10_000, n_classes=15, mean_len=150,
                                   random_state=4)
    vocab = sorted({term for d in docs for term in d.counts})
    col = {term: j for j, term in enumerate(vocab)}
    D = np.zeros((len(docs), len(vocab)))
    for i, d in enumerate(docs):
        for term, c in d.counts.items():
            D[i, col[term]] = c
    D = _unit(D)
    pair_rng = np.random.default_rng(40)
    pairs = np.empty((0, 2), np.int64)
    while len(pairs) < 1000:
        cand = pair_rng.integers(len(docs), size=(1000, 2))
        pairs = np.vstack([pairs, cand[cand[:, 0] != cand[:, 1]]])
    pairs = pairs[:1000]
    original = _cosines(D, pairs)
    table = {}
    for seed in range(3):
        corr = []
        for r in (100, 1000, 4000):
            reg = IndexVectorRegistry(RiConfig(r, 10, seed))
            R = encode_corpus(reg, [d.counts for d in docs])
            corr.append(float(np.corrcoef(original, _cosines(R, pairs))[0, 1]))
        table[seed] = corr
    ok = all(c[1] >= 0.9 and c[0] <= c[1] <= c[2] for c in table.values())
    detail = "; ".join(f"seed {s}: " + "/".join(f"{c:.4f}" for c in v) for s, v in table.items())
    record(4, ok, f"Pearson r at 100/1000/4000 dims: {detail}")
    for corr in table.values():
        assert corr[1] >= 0.9
        assert corr[0] <= corr[1] <= corr[2]


def test_criterion_5_kmeans_oracle(record):
    rng = np.random.default_rng(5)
    lower_bound_failures = 0
    fixed_point_failures = 0
    for _ in range(200):
        n = int(rng.integers(2, 9))
        d = int(rng.integers(1, 4))
        pts = rng.normal(size=(n, d)) * rng.uniform(0.1, 10)
        opt, mask = exhaustive_two_means(pts)
        candidates = [lloyd(pts, seed_perturbation(pts))]
        candidates.append(lloyd(pts, seed_uniform(pts, 2, rng)))
        if any(opt > p.sse * (1 + 1e-12) for p in candidates):
            lower_bound_failures += 1
        init = np.vstack([pts[~mask].mean(0), pts[mask].mean(0)])
        fixed = lloyd(pts, init)
        same = np.array_equal(fixed.labels.astype(bool), mask)
        if not (same and abs(fixed.sse - opt) <= 1e-12 * max(opt, 1e-300)):
            fixed_point_failures += 1
    ok = lower_bound_failures == 0 and fixed_point_failures == 0
    record(5, ok, f"200 instances: {lower_bound_failures} bound violations, "
                  f"{fixed_point_failures} optimum-seeded mismatches")
    assert lower_bound_failures == 0
    assert fixed_point_failures == 0


def test_criterion_6_metric_oracles(record):
    table = ContingencyTable(np.array([[2, 1], [0, 2]]))
    purity, entropy = micro_purity(table), micro_entropy(table)
    t, p = welch_t_test([1, 2, 3, 4, 5], [2, 3, 4, 5, 6])
    ok = (abs(purity - 0.8) <= 1e-4 and abs(entropy - 0.5510) <= 1e-4
          and abs(t + 1.0) <= 1e-4 and abs(p - 0.3466) <= 1e-3)
    record(6, ok, f"purity {purity:.4f}, entropy {entropy:.4f}, t {t:.4f}, p {p:.4f}")
    assert purity == pytest.approx(0.8, abs=1e-4)
    assert entropy == pytest.approx(0.5510, abs=1e-4)
    assert t == pytest.approx(-1.0, abs=1e-4)
    assert p == pytest.approx(0.3466, abs=1e-3)


def test_criterion_7_trend_reproduction(record):
    start = time.perf_counter()
    docs, stats, labels = make_topic_corpus(n_docs=5000, n_terms=20_000, random_state=7)
    result = run_experiment(docs, stats, labels, [PRESETS["C"], PRESETS["E"]], [100, 1000],
                            runs_tree=5, runs_reduce=5, k=15, rng_seed=7)
    c1000, e1000 = result.purities("C", 1000), result.purities("E", 1000)
    c100, e100 = result.purities("C", 100), result.purities("E", 100)
    t, p = welch_t_test(e1000, c1000)
    a_ok = np.mean(e1000) > np.mean(c1000) and p < 0.05
    b_ok = np.mean(e1000) > np.mean(e100)
    elapsed = time.perf_counter() - start
    ok = a_ok and b_ok and elapsed < 1800
    record(7, ok, f"(a) E {np.mean(e1000):.4f} vs C {np.mean(c1000):.4f} at r=1000, "
                  f"p={p:.2e}; (b) E r=1000 {np.mean(e1000):.4f} > r=100 {np.mean(e100):.4f}; "
                  f"r=100 for reference: E {np.mean(e100):.4f}, C {np.mean(c100):.4f}; "
                  f"{elapsed:.0f}s")
    assert a_ok
    assert b_ok
    assert elapsed < 1800


def test_criterion_8_determinism(record, tmp_path):
    docs, _, labels = make_topic_corpus(n_docs=300, n_terms=2000, n_classes=4,
                                        topic_terms=60, mean_len=60, random_state=8)
    links = make_links(labels, random_state=8)
    (tmp_path / "corpus.txt").write_text(
        "".join(d.doc_id + "\t" + " ".join(f"{t}:{c}" for t, c in d.counts.items()) + "\n"
                for d in docs))
    (tmp_path / "labels.tsv").write_text("".join(f"{d}\t{lab}\n" for d, lab in labels.items()))
    (tmp_path / "links.tsv").write_text("".join(f"{a}\t{b}\n" for a, b in links))

    def pipeline(tag):
        base = ["--rng-seed=11", "--corpus", tmp_path / "corpus.txt"]
        out = {}
        for preset in ("A", "D"):
            path = tmp_path / f"{tag}-{preset}.tsv"
            argv = ["evaluate", *base, "--labels", tmp_path / "labels.tsv",
                    "--links", tmp_path / "links.tsv", "--preset", preset, "--dims", "50,200",
                    "--order", 12, "--k", 4, "--runs-tree", 2, "--runs-reduce", 2, "--out", path]
            assert main([str(a) for a in argv]) == 0
            out[path.name[len(tag):]] = path.read_bytes()
            runs = path.with_suffix(".runs.csv")
            out[runs.name[len(tag):]] = runs.read_bytes()
        matrix, dump = tmp_path / f"{tag}.m.tsv", tmp_path / f"{tag}.tree.json"
        assert main([str(a) for a in ["encode", *base, "--dims", 80, "--out", matrix]]) == 0
        assert main([str(a) for a in ["build", "--rng-seed=11", "--matrix", matrix,
                                      "--variant", "modified", "--order", 12,
                                      "--out", dump]]) == 0
        for path in (matrix, dump, dump.with_name(dump.name + ".assignments.tsv")):
            out[path.name[len(tag):]] = path.read_bytes()
        return out

    first, second = pipeline("a"), pipeline("b")
    differing = sorted(k for k in first if first[k] != second.get(k))
    ok = not differing and first.keys() == second.keys()
    record(8, ok, f"{len(first)} output files compared, {len(differing)} differ")
    assert ok, differing


def test_criterion_9_build_complexity(record):
    _warm_up()
    rng = np.random.default_rng(9)
    centers = rng.normal(size=(50, 100)) * 3

    def per_insert(n):
        X = centers[rng.integers(50, size=n)] + rng.normal(size=(n, 100))
        start = time.perf_counter()
        KTree(order=50, random_state=0).fit(X)
        return (time.perf_counter() - start) / n

    small, large = per_insert(10_000), per_insert(100_000)
    ratio = large / small
    record(9, ratio < 3, f"per-insert {small * 1e6:.1f}us at 10k, {large * 1e6:.1f}us at 100k, "
                         f"ratio {ratio:.2f} < 3")
    assert ratio < 3
