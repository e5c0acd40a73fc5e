"""Synthetic labelled corpora for tests and benchmarks.

Each class draws words from a mixture of a shared Zipfian background and a
class-specific topic over a few hundred terms, so class membership is
recoverable but noisy.
"""

import numpy as np

from .represent import CorpusStats, RawDoc

__all__ = ["make_topic_corpus", "make_links"]


def make_topic_corpus(n_docs=5000, n_terms=20000, n_classes=15, topic_terms=300,
                      topic_weight=0.3, mean_len=150, zipf_s=1.1, random_state=0):
    """Sample a corpus from a mixture of multinomials.

    Returns
    -------
    docs : list of RawDoc
    stats : CorpusStats
    labels : dict
        doc id -> class name.
    """
    rng = np.random.default_rng(random_state)
    ranks = np.arange(1, n_terms + 1, dtype=np.float64)
    background = ranks**-zipf_s
    background /= background.sum()
    vocab = np.array([f"w{i}" for i in range(n_terms)], dtype=object)
    dists = []
    for _ in range(n_classes):
        topic = np.zeros(n_terms)
        chosen = rng.choice(n_terms, size=topic_terms, replace=False)
        topic[chosen] = rng.permutation(np.arange(1, topic_terms + 1, dtype=np.float64) ** -0.8)
        topic /= topic.sum()
        dists.append((1 - topic_weight) * background + topic_weight * topic)
    classes = rng.integers(n_classes, size=n_docs)
    lengths = rng.poisson(mean_len, size=n_docs) + 20
    docs = []
    labels = {}
    width = len(str(n_docs - 1))
    for i, (c, n) in enumerate(zip(classes, lengths)):
        counts = rng.multinomial(n, dists[c])
        nz = np.flatnonzero(counts)
        doc_id = f"d{i:0{width}d}"
        docs.append(RawDoc(doc_id, dict(zip(vocab[nz].tolist(), counts[nz].tolist()))))
        labels[doc_id] = f"c{c}"
    return docs, CorpusStats.from_docs(docs), labels


def make_links(labels, per_doc=3, p_same=0.7, random_state=0):
    """Random outgoing links, preferring targets of the same class."""
    rng = np.random.default_rng(random_state)
    ids = sorted(labels)
    by_class = {}
    for d in ids:
        by_class.setdefault(labels[d], []).append(d)
    links = []
    for d in ids:
        for _ in range(per_doc):
            pool = by_class[labels[d]] if rng.random() < p_same else ids
            t = pool[rng.integers(len(pool))]
            if t != d:
                links.append((d, t))
    return links
