import io

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import dense_ri
from ritree.exceptions import ParseError, ZeroVectorError
from ritree.randindex import (
    IndexVectorRegistry,
    RandomIndexer,
    RiConfig,
    encode_corpus,
    encode_document,
    generate_index_vector,
    term_rng,
)


class TestIndexVector:
    @settings(max_examples=50)
    @given(r=st.integers(2, 400), half=st.integers(1, 10), seed=st.integers(0, 2**32))
    def test_shape_and_balance(self, r, half, seed):
        s = 2 * half
        if s > r:
            return
        v = generate_index_vector(np.random.default_rng(seed), r, s)
        assert v.nnz == s
        assert len(set(v.indices.tolist())) == s
        assert (v.values == 1).sum() == (v.values == -1).sum() == half
        assert v.indices.min() >= 0 and v.indices.max() < r

    def test_smallest_case(self):
        v = generate_index_vector(np.random.default_rng(0), 2, 2)
        np.testing.assert_array_equal(v.indices, [0, 1])
        assert sorted(v.values) == [-1.0, 1.0]

    def test_positions_roughly_uniform(self):
        rng = np.random.default_rng(7)
        hits = np.zeros(20)
        for _ in range(4000):
            hits[generate_index_vector(rng, 20, 4).indices] += 1
        expected = 4000 * 4 / 20
        chi2 = ((hits - expected) ** 2 / expected).sum()
        assert chi2 < 50  # 19 dof; p ~ 1e-4

    @pytest.mark.parametrize("kwargs", [dict(seed_len=3), dict(r=4, seed_len=6), dict(r=1)])
    def test_config_rejects(self, kwargs):
        with pytest.raises(ValueError):
            RiConfig(**kwargs)


class TestRegistry:
    def test_reuse(self):
        reg = IndexVectorRegistry(RiConfig(50, 4, 1))
        assert reg.get_or_create("a") is reg.get_or_create("a")
        assert len(reg) == 1

    def test_independent_of_first_seen_order(self):
        a = IndexVectorRegistry(RiConfig(80, 6, 9))
        b = IndexVectorRegistry(RiConfig(80, 6, 9))
        for t in ["x", "y", "z"]:
            a.get_or_create(t)
        for t in ["z", "y", "x"]:
            b.get_or_create(t)
        for t in "xyz":
            assert a[t] == b[t]

    def test_seed_changes_vectors(self):
        a = IndexVectorRegistry(RiConfig(1000, 10, 1))["term"]
        b = IndexVectorRegistry(RiConfig(1000, 10, 2))["term"]
        assert a != b

    def test_term_rng_reproducible(self):
        assert term_rng(3, "x").integers(2**62) == term_rng(3, "x").integers(2**62)

    def test_export_load_round_trip(self):
        cfg = RiConfig(30, 4, 5)
        reg = IndexVectorRegistry(cfg)
        for t in ["alpha", "beta", "with space"]:
            reg.get_or_create(t)
        buf = io.StringIO()
        reg.export(buf)
        back = IndexVectorRegistry.load(io.StringIO(buf.getvalue()), cfg)
        assert back.terms == reg.terms
        for t in reg.terms:
            assert back[t] == reg[t]

    @pytest.mark.parametrize("line", ["x\t+1 -2 +3", "x\t+1 -2 +3 *4", "x\t+0 -1 +2 -3", "x +1 -2 +3 -4"])
    def test_load_rejects(self, line):
        with pytest.raises(ParseError):
            IndexVectorRegistry.load(io.StringIO(line + "\n"), RiConfig(30, 4, 5))


class TestEncode:
    def test_single_term_unit(self):
        reg = IndexVectorRegistry(RiConfig(40, 4, 0))
        enc = encode_document(reg, {"a": 3.5})
        np.testing.assert_allclose(enc, reg["a"].to_dense() / 2.0, atol=1e-15)

    def test_cancellation(self):
        reg = IndexVectorRegistry(RiConfig(40, 4, 0))
        reg.get_or_create("a")
        reg._vectors["b"] = reg["a"]  # identical vectors force exact cancellation
        with pytest.raises(ZeroVectorError):
            encode_document(reg, {"a": 1.0, "b": -1.0})

    def test_matches_dense_product(self):
        rng = np.random.default_rng(11)
        n, t, r = 40, 200, 30
        D = np.where(rng.random((n, t)) < 0.05, rng.random((n, t)) + 0.1, 0.0)
        D[:, 0] += 1.0  # no empty rows
        terms = [f"t{j}" for j in range(t)]
        reg = IndexVectorRegistry(RiConfig(r, 4, 3))
        docs = [{terms[j]: D[i, j] for j in np.flatnonzero(D[i])} for i in range(n)]
        got = encode_corpus(reg, docs)
        I = np.vstack([reg[term].to_dense() for term in terms])
        np.testing.assert_allclose(got, dense_ri(D, I), rtol=0, atol=1e-12)

    def test_transformer_paths_agree(self):
        D = sp.random(15, 60, density=0.1, random_state=3, format="csr") + sp.eye(15, 60)
        terms = [f"w{j}" for j in range(60)]
        ri = RandomIndexer(n_components=25, seed_len=4, random_state=8).fit(D, terms=terms)
        from_matrix = ri.transform(D)
        D = D.tocsr()
        mappings = [
            {terms[j]: v for j, v in zip(D[i].indices, D[i].data)} for i in range(D.shape[0])
        ]
        np.testing.assert_allclose(ri.transform(mappings), from_matrix, atol=1e-12)
