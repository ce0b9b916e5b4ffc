import numpy as np
import pytest
from conftest import random_store

from qmdsminer.embedding import VectorStore
from qmdsminer.vector_index import (
    brute_force_query,
    build_index,
    load_index,
    query_threshold,
    save_index,
)


def random_queries(count, dim, seed):
    rng = np.random.default_rng(seed)
    q = rng.standard_normal((count, dim))
    return q / np.linalg.norm(q, axis=1)[:, None]


def test_brute_force_hand_example():
    store = VectorStore.from_items(2, [("key#1", [1, 0]), ("key#2", [0.6, 0.8]), ("key#3", [0, 1])])
    hits = brute_force_query(store, np.array([1.0, 0.0]), 0.5)
    assert [k for k, _ in hits] == ["key#1", "key#2"]
    assert [s for _, s in hits] == pytest.approx([1.0, 0.6])
    assert query_threshold(build_index(store, leaf_capacity=1, spill_fraction=0.0), np.array([1.0, 0.0]), 0.5) == hits


def test_empty_store():
    store = VectorStore(4)
    q = np.array([1.0, 0, 0, 0])
    assert brute_force_query(store, q, 0.5) == []
    assert query_threshold(build_index(store), q, 0.5) == []


def test_single_entry():
    store = VectorStore.from_items(3, [("a#0", [0, 0, 2])])
    assert brute_force_query(store, np.array([0.0, 0, 1]), 0.9) == [("a#0", 1.0)]


def test_under_capacity_single_leaf():
    store = random_store(10, 8)
    index = build_index(store, leaf_capacity=16)
    assert index.root.is_leaf
    assert sorted(index.root.rows.tolist()) == list(range(10))


def test_deterministic_structure():
    store = random_store(800, 8, seed=1)
    a = build_index(store, leaf_capacity=16, seed=5).structure()
    b = build_index(store, leaf_capacity=16, seed=5).structure()
    assert a == b
    assert a != build_index(store, leaf_capacity=16, seed=6).structure()


def test_key_audit_without_spill():
    store = random_store(1000, 16, seed=2)
    index = build_index(store, leaf_capacity=32, spill_fraction=0.0)
    rows = np.concatenate([leaf.rows for leaf in index.leaves()])
    assert sorted(rows.tolist()) == list(range(1000))
    assert all(len(leaf.rows) <= 32 for leaf in index.leaves())
    assert index.depth() <= int(np.ceil(np.log2(1000 / 32))) + 2


def test_spill_keeps_every_key():
    store = random_store(1000, 16, seed=2)
    index = build_index(store, leaf_capacity=32, spill_fraction=0.1)
    rows = set(np.concatenate([leaf.rows for leaf in index.leaves()]).tolist())
    assert rows == set(range(1000))


def test_self_match_and_vacuous_threshold():
    store = random_store(500, 8, seed=4)
    index = build_index(store, leaf_capacity=16)
    q = store["v#17"]
    hits = query_threshold(index, q, 0.8)
    assert hits[0][0] == "v#17"
    assert hits[0][1] == pytest.approx(1.0, abs=1e-6)
    assert [k for k, _ in query_threshold(index, q, 0.999999)] == ["v#17"]
    q2 = random_queries(1, 8, 99)[0]
    assert query_threshold(index, q2, 0.999999) == []


@pytest.mark.parametrize("dim, spill", [(8, 0.0), (8, 0.1), (64, 0.1)])
def test_exact_mode_equals_oracle(dim, spill):
    store = random_store(1000, dim, seed=dim)
    index = build_index(store, leaf_capacity=32, spill_fraction=spill, seed=3)
    for q in random_queries(100, dim, seed=7):
        assert query_threshold(index, q, 0.8 if dim == 8 else 0.3) == brute_force_query(store, q, 0.8 if dim == 8 else 0.3)


def test_ties_broken_by_key():
    v = [0.6, 0.8]
    store = VectorStore.from_items(2, [("b#0", v), ("a#10", v), ("a#2", v)])
    hits = brute_force_query(store, np.array(v), 0.5)
    assert [k for k, _ in hits] == ["a#2", "a#10", "b#0"]
    assert query_threshold(build_index(store, leaf_capacity=1, spill_fraction=0.0), np.array(v), 0.5) == hits


def test_monotone_and_bounded():
    store = random_store(2000, 8, seed=11)
    index = build_index(store, leaf_capacity=32)
    for q in random_queries(30, 8, seed=12):
        prev = None
        for theta in (0.95, 0.8, 0.5, 0.2):
            hits = query_threshold(index, q, theta)
            keys = {k for k, _ in hits}
            assert all(theta <= s <= 1 + 1e-6 for _, s in hits)
            if prev is not None:
                assert prev <= keys
            prev = keys


def test_approximate_is_subset():
    store = random_store(2000, 8, seed=13)
    index = build_index(store, leaf_capacity=32)
    for q in random_queries(30, 8, seed=14):
        approx = query_threshold(index, q, 0.8, exact=False)
        assert set(approx) <= set(brute_force_query(store, q, 0.8))


def test_query_validation():
    index = build_index(random_store(20, 4))
    with pytest.raises(ValueError, match="unit"):
        query_threshold(index, np.array([1.0, 1.0, 0, 0]), 0.5)
    with pytest.raises(ValueError):
        query_threshold(index, np.array([1.0, 0, 0]), 0.5)
    for theta in (0.0, 1.0):
        with pytest.raises(ValueError):
            query_threshold(index, np.array([1.0, 0, 0, 0]), theta)


def test_persistence(tmp_path):
    store = random_store(700, 8, seed=21)
    index = build_index(store, leaf_capacity=16, spill_fraction=0.1, seed=2)
    save_index(index, tmp_path / "ix.jsonl")
    back = load_index(tmp_path / "ix.jsonl", store)
    assert back.structure() == index.structure()
    assert (back.leaf_capacity, back.spill_fraction, back.seed) == (16, 0.1, 2)
    for q in random_queries(20, 8, seed=22):
        for exact in (True, False):
            assert query_threshold(back, q, 0.7, exact) == query_threshold(index, q, 0.7, exact)


def test_load_rejects_mismatch(tmp_path):
    store = random_store(50, 8)
    save_index(build_index(store), tmp_path / "ix.jsonl")
    with pytest.raises(ValueError):
        load_index(tmp_path / "ix.jsonl", random_store(50, 4))
    with pytest.raises(ValueError, match="missing"):
        load_index(tmp_path / "ix.jsonl", store.subset(store.keys[:10]))
