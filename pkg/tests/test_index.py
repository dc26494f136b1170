import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hashvpr.descriptors import BinaryCode, sign_hash_rows
from hashvpr.index import (
    batch_search,
    build_binary_index,
    build_float_store,
    hamming_distances,
    hamming_topk,
    l2_topk,
)
from hashvpr.synthetic import dyadic_unit_rows, random_unit_rows

from oracles import hamming_oracle, l2_oracle


def small_codes(rng, n, dim):
    # few distinct bits so that many rows tie
    bits = np.zeros((n, dim), dtype=np.uint8)
    bits[:, :6] = rng.integers(0, 2, (n, 6))
    return sign_hash_rows(bits * 2.0 - 1.0)


@given(st.integers(1, 300), st.sampled_from([8, 64, 100, 512]), st.integers(1, 40),
       st.integers(0, 2**31))
def test_hamming_matches_oracle(n, dim, k, seed):
    rng = np.random.default_rng(seed)
    words = small_codes(rng, n, dim) if seed % 2 else sign_hash_rows(rng.standard_normal((n, dim)))
    ids = [int(i) for i in rng.permutation(10 * n)[:n]]
    q = sign_hash_rows(rng.standard_normal((1, dim)))[0]
    idx = build_binary_index(words, ids, dim=dim)
    got = hamming_topk(idx, BinaryCode(q, dim), k)
    want_ids, want_d = hamming_oracle(words, dim, ids, q, k)
    assert list(got.ids) == want_ids
    assert got.distances.tolist() == want_d


@given(st.integers(1, 200), st.integers(1, 30), st.integers(0, 2**31))
def test_l2_matches_oracle_with_ties(n, k, seed):
    rng = np.random.default_rng(seed)
    x = dyadic_unit_rows(n, 32, 4, rng)
    ids = [f"im{int(i):05d}" for i in rng.permutation(n)]
    q = dyadic_unit_rows(1, 32, 4, rng)[0]
    got = l2_topk(build_float_store(x, ids), q, k)
    want_ids, want_d = l2_oracle(x, ids, q, k)
    assert list(got.ids) == want_ids
    assert got.distances.tolist() == want_d


def test_l2_gaussian_close_to_float64(rng):
    x = random_unit_rows(1000, 128, rng)
    q = random_unit_rows(1, 128, rng)[0]
    got = l2_topk(build_float_store(x, range(1000)), q, 20)
    want_ids, want_d = l2_oracle(x, list(range(1000)), q, 20)
    assert list(got.ids) == want_ids
    np.testing.assert_allclose(got.distances, want_d, atol=1e-6)


def test_k_larger_than_index():
    words = sign_hash_rows(np.random.default_rng(0).standard_normal((5, 64)))
    idx = build_binary_index(words, range(5), dim=64)
    assert len(hamming_topk(idx, BinaryCode(words[0], 64), 50)) == 5


def test_empty_index():
    idx = build_binary_index([], [], dim=64)
    q = BinaryCode.from_bits(np.zeros(64, dtype=np.uint8))
    assert len(hamming_topk(idx, q, 3)) == 0


def test_bad_k_and_dims():
    words = sign_hash_rows(np.ones((2, 64)))
    idx = build_binary_index(words, [0, 1], dim=64)
    with pytest.raises(ValueError):
        hamming_topk(idx, BinaryCode(words[0], 64), 0)
    with pytest.raises(ValueError):
        hamming_topk(idx, BinaryCode.from_bits(np.ones(32, dtype=np.uint8)), 1)


def test_build_rejections():
    with pytest.raises(ValueError):
        build_binary_index([BinaryCode.from_bits([1] * 8), BinaryCode.from_bits([1] * 9)], [0, 1])
    with pytest.raises(ValueError):
        build_binary_index(sign_hash_rows(np.ones((2, 8))), [3, 3], dim=8)
    with pytest.raises(ValueError):
        build_float_store(np.ones((2, 4)), [0, 1])


def test_index_is_read_only():
    idx = build_binary_index(sign_hash_rows(np.ones((2, 8))), [0, 1], dim=8)
    with pytest.raises(ValueError):
        idx.codes[0, 0] = 1


def test_distances_in_id_order(rng):
    words = sign_hash_rows(rng.standard_normal((30, 96)))
    ids = list(rng.permutation(30))
    idx = build_binary_index(words, ids, dim=96)
    q = BinaryCode(words[4], 96)
    d = hamming_distances(idx, q)
    assert d[idx.row_of(ids[4])] == 0
    assert len(d) == 30


def test_batch_search_threads_agree(rng):
    words = sign_hash_rows(rng.standard_normal((500, 128)))
    idx = build_binary_index(words, range(500), dim=128)
    qs = [BinaryCode(w, 128) for w in sign_hash_rows(rng.standard_normal((12, 128)))]
    one = batch_search(hamming_topk, idx, qs, 10, workers=1)
    many = batch_search(hamming_topk, idx, qs, 10, workers=4)
    assert [c.ids for c in one] == [c.ids for c in many]
