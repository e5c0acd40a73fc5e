import io
import json

import numpy as np
import pytest

from ritree.cli import main, read_matrix, write_matrix
from ritree.evaluate import (
    PRESETS,
    reduce_documents,
    run_experiment,
    substream_seed,
    weight_corpus,
)
from ritree.ktree import KTree
from ritree.represent import ingest_corpus
from ritree.synthetic import make_topic_corpus

# two topics; every term appears in exactly two documents so BM25 keeps it
TOY = "d1\ta1:1 a2:1\nd2\ta2:1 a3:1\nd3\ta1:1 a3:1\nd4\tb1:2 b2:1\nd5\tb1:2 b2:1\n"
TOY_LABELS = "d1\tA\nd2\tA\nd3\tB\nd4\tB\nd5\tB\n"


@pytest.fixture
def toy(tmp_path):
    (tmp_path / "corpus.txt").write_text(TOY)
    (tmp_path / "labels.tsv").write_text(TOY_LABELS)
    return tmp_path


@pytest.fixture(scope="module")
def synth(tmp_path_factory):
    root = tmp_path_factory.mktemp("synth")
    docs, _, labels = make_topic_corpus(n_docs=150, n_terms=800, n_classes=3, topic_terms=40,
                                        mean_len=40, random_state=2)
    with open(root / "corpus.txt", "w") as fp:
        for d in docs:
            fp.write(d.doc_id + "\t" + " ".join(f"{t}:{c}" for t, c in d.counts.items()) + "\n")
    with open(root / "labels.tsv", "w") as fp:
        for doc, lab in labels.items():
            fp.write(f"{doc}\t{lab}\n")
    return root


def run(*argv):
    return main([str(a) for a in argv])


class TestEncode:
    def test_tiny_corpus_unit_rows(self, toy):
        out = toy / "m.tsv"
        assert run("encode", "--corpus", toy / "corpus.txt", "--reduce", "ri", "--dims", 20,
                   "--out", out) == 0
        with open(out) as fp:
            ids, X = read_matrix(fp)
        assert ids == ["d1", "d2", "d3", "d4", "d5"]
        np.testing.assert_allclose(np.linalg.norm(X, axis=1), 1, atol=1e-12)

    def test_none_keeps_vocabulary(self, toy):
        out = toy / "m.tsv"
        assert run("encode", "--corpus", toy / "corpus.txt", "--reduce", "none", "--out", out) == 0
        with open(out) as fp:
            _, X = read_matrix(fp)
        assert X.shape == (5, 5)

    def test_ri_equals_library(self, synth, tmp_path):
        out = tmp_path / "m.tsv"
        assert run("encode", "--corpus", synth / "corpus.txt", "--dims", 50, "--rng-seed", 9,
                   "--out", out) == 0
        with open(synth / "corpus.txt") as fp:
            docs, stats = ingest_corpus(fp)
        X = reduce_documents(weight_corpus(docs, stats), "ri", 50, 10, substream_seed(9, "ri", 0))
        buf = io.StringIO()
        write_matrix(buf, [d.doc_id for d in docs], X)
        assert out.read_text() == buf.getvalue()

    def test_usage_errors(self, toy):
        corpus = toy / "corpus.txt"
        for argv in (["--reduce", "cull", "--dims", 3, "--seed-len", 4],
                     ["--reduce", "none", "--dims", 3],
                     ["--reduce", "ri"],
                     ["--repr", "bm25+lfidf", "--dims", 3]):
            with pytest.raises(SystemExit) as info:
                run("encode", "--corpus", corpus, *argv)
            assert info.value.code == 2

    def test_bad_corpus(self, tmp_path):
        (tmp_path / "c.txt").write_text("d1\ta:oops\n")
        assert run("encode", "--corpus", tmp_path / "c.txt", "--dims", 4,
                   "--out", tmp_path / "x") == 1
        assert not (tmp_path / "x").exists()


class TestBuild:
    def test_small_tree_and_audit(self, tmp_path, capsys):
        m = tmp_path / "m.tsv"
        with open(m, "w") as fp:
            write_matrix(fp, ["a", "b", "c", "d"], np.array([[0.0, 0], [0, 1], [10, 0], [10, 1]]))
        dump = tmp_path / "tree.json"
        assert run("build", "--matrix", m, "--order", 3, "--out", dump) == 0
        data = json.loads(dump.read_text())
        assert data["depth"] == 2 and len(data["root"]["entries"]) == 2
        assign = dict(line.split("\t") for line in
                      (tmp_path / "tree.json.assignments.tsv").read_text().splitlines())
        assert assign["a"] == assign["b"] != assign["c"] == assign["d"]
        first = dump.read_text()
        assert run("build", "--matrix", m, "--order", 3, "--out", dump) == 0
        assert dump.read_text() == first
        assert run("audit", dump) == 0
        assert capsys.readouterr().out.startswith("ok")

    def test_audit_flags_corruption(self, tmp_path, capsys):
        t = KTree(order=3, random_state=0).fit(np.random.default_rng(0).normal(size=(20, 2)))
        data = t.to_dict()
        data["root"]["entries"][0][1] += 1
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(data))
        assert run("audit", path) == 1
        assert "weight" in capsys.readouterr().out


class TestEvaluate:
    def test_hand_scored_toy(self, toy):
        out = toy / "report.tsv"
        assert run("evaluate", "--corpus", toy / "corpus.txt", "--labels", toy / "labels.tsv",
                   "--variant", "unmodified", "--reduce", "none", "--order", 3, "--k", 2,
                   "--runs-tree", 1, "--runs-reduce", 1, "--out", out) == 0
        header, row = out.read_text().splitlines()
        cells = dict(zip(header.split("\t"), row.split("\t")))
        assert cells["gamma"] == "0.8000"
        assert cells["alpha"] == "0.5510"
        assert cells["dims"] == "5" and cells["runs"] == "1"
        assert (toy / "report.runs.csv").exists()

    def test_missing_label(self, toy, capsys):
        (toy / "labels.tsv").write_text("d1\tA\n")
        assert run("evaluate", "--corpus", toy / "corpus.txt", "--labels", toy / "labels.tsv",
                   "--reduce", "none", "--order", 3, "--k", 2, "--runs-tree", 1,
                   "--runs-reduce", 1, "--out", toy / "r.tsv") == 1
        assert "d2" in capsys.readouterr().err

    def test_preset_conflict(self, toy):
        with pytest.raises(SystemExit):
            run("evaluate", "--corpus", toy / "corpus.txt", "--labels", toy / "labels.tsv",
                "--preset", "E", "--variant", "unmodified", "--dims", 10)

    def test_pipeline_equals_library(self, synth, tmp_path, monkeypatch):
        monkeypatch.setenv("RITREE_RNG_SEED", "17")
        m, dump, rep = tmp_path / "m.tsv", tmp_path / "t.json", tmp_path / "r.tsv"
        assert run("encode", "--corpus", synth / "corpus.txt", "--dims", 60, "--out", m) == 0
        assert run("build", "--matrix", m, "--order", 10, "--variant", "modified",
                   "--out", dump) == 0
        assert run("evaluate", "--tree", dump, "--labels", synth / "labels.tsv", "--k", 3,
                   "--runs-reduce", 3, "--preset", "E", "--out", rep) == 0
        with open(synth / "corpus.txt") as fp:
            docs, stats = ingest_corpus(fp)
        labels = dict(line.split("\t") for line in (synth / "labels.tsv").read_text().splitlines())
        lib = run_experiment(docs, stats, labels, [PRESETS["E"]], [60], runs_tree=1,
                             runs_reduce=3, k=3, order=10, rng_seed=17)
        got = (tmp_path / "r.runs.csv").read_text().splitlines()[1:]
        want = [f"E,60,0,{r['reduce_run']},{r['purity']!r},{r['entropy']!r}"
                for r in lib.measurements]
        assert got == want

    def test_evaluate_deterministic(self, synth, tmp_path):
        outs = []
        for name in ("a", "b"):
            out = tmp_path / f"{name}.tsv"
            assert run("evaluate", "--corpus", synth / "corpus.txt", "--labels",
                       synth / "labels.tsv", "--preset", "C", "--dims", "30,60", "--k", 3,
                       "--order", 10, "--runs-tree", 2, "--runs-reduce", 2, "--rng-seed", 3,
                       "--out", out) == 0
            outs.append((out.read_bytes(), (tmp_path / f"{name}.runs.csv").read_bytes()))
        assert outs[0] == outs[1]


class TestCompare:
    def write(self, path, purities, dims=10):
        lines = ["config,dims,tree_run,reduce_run,purity,entropy"]
        lines += [f"X,{dims},{i},0,{p!r},0.5" for i, p in enumerate(purities)]
        path.write_text("\n".join(lines) + "\n")

    def test_self_comparison(self, tmp_path, capsys):
        self.write(tmp_path / "a.csv", [0.5, 0.6, 0.55])
        assert run("compare", tmp_path / "a.csv", tmp_path / "a.csv") == 0
        row = capsys.readouterr().out.splitlines()[1].split("\t")
        assert row[4] == "1" and row[5] == "no"

    def test_shifted(self, tmp_path, capsys):
        self.write(tmp_path / "a.csv", [0.5, 0.51, 0.52, 0.5])
        self.write(tmp_path / "b.csv", [0.7, 0.71, 0.72, 0.7])
        assert run("compare", tmp_path / "a.csv", tmp_path / "b.csv") == 0
        assert capsys.readouterr().out.splitlines()[1].endswith("yes")

    def test_dimension_mismatch(self, tmp_path):
        self.write(tmp_path / "a.csv", [0.5, 0.6])
        self.write(tmp_path / "b.csv", [0.5, 0.6], dims=20)
        assert run("compare", tmp_path / "a.csv", tmp_path / "b.csv") == 1
