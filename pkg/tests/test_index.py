import numpy as np
import pytest

from multikmeans.core import HashCode, Metric, FormatError, pack_bits
from multikmeans.encoder import EncoderSpec, MeanKind, Variant, encode, encode_many
from multikmeans.evaluate import brute_force_gt
from multikmeans.index import (
    build_index,
    load_index,
    save_index,
    search,
    search_ids,
    search_many,
    shortlist,
)
from multikmeans.kmeans import Codebook, TrainParams, train


def naive_shortlist(bits, query_bits, ids, size):
    """Plain python reference: hamming distance, ties by ascending id."""
    hams = [
        (sum(int(b) != int(q) for b, q in zip(row, query_bits)), int(i))
        for row, i in zip(bits, ids)
    ]
    hams.sort()
    return [i for _, i in hams[:size]]

def naive_search(base, ids, cand_ids, q, metric, top):
    by_id = {int(i): base[pos] for pos, i in enumerate(ids)}
    scored = []
    for i in cand_ids:
        v = by_id[int(i)].astype(np.float64)
        qq = q.astype(np.float64)
        if metric is Metric.EUCLIDEAN:
            key = float(np.sqrt(((v - qq) ** 2).sum()))
            scored.append((key, int(i)))
        else:
            sim = float(v @ qq / (np.linalg.norm(v) * np.linalg.norm(qq)))
            scored.append((-sim, int(i)))
    scored.sort()
    return [(i, abs(s) if metric is Metric.COSINE else s) for s, i in scored[:top]]


def make_fixture(seed=7, n=200, dim=8, k=12):
    rng = np.random.default_rng(seed)
    base = rng.standard_normal((n, dim)).astype(np.float32)
    k = min(k, n)
    cb = train(base, k, TrainParams(seed=seed))
    spec = EncoderSpec(Variant.N, n_nearest=min(4, k))
    codes = encode_many(base, cb, spec)
    ids = np.arange(n, dtype=np.int64)
    index = build_index(codes, ids, spec, cb)
    return rng, base, cb, spec, index


class TestBuildIndex:
    def test_from_packed_array(self):
        _, base, cb, spec, index = make_fixture()
        assert index.size == len(base)
        assert index.code_length == cb.k

    def test_from_hashcode_list(self):
        rng, base, cb, spec, index = make_fixture(n=20)
        codes = [encode(x, cb, spec) for x in base]
        other = build_index(codes, np.arange(20), spec, cb)
        np.testing.assert_array_equal(other.codes, index.codes)

    def test_rejects_duplicate_ids(self):
        _, base, cb, spec, index = make_fixture(n=10)
        ids = np.zeros(10, dtype=np.int64)
        with pytest.raises(ValueError):
            build_index(index.codes, ids, spec, cb)

    def test_rejects_negative_ids(self):
        _, base, cb, spec, index = make_fixture(n=10)
        ids = np.arange(10) - 5
        with pytest.raises(ValueError):
            build_index(index.codes, ids, spec, cb)

    def test_rejects_length_mismatch(self):
        _, base, cb, spec, index = make_fixture(n=10)
        with pytest.raises(ValueError):
            build_index(index.codes, np.arange(9), spec, cb)

    def test_rejects_noncanonical_padding(self):
        _, base, cb, spec, index = make_fixture(n=10)
        codes = index.codes.copy()
        codes[3, -1] |= np.uint64(1) << np.uint64(63)  # cb.k = 12 < 64
        with pytest.raises(ValueError):
            build_index(codes, np.arange(10), spec, cb)

    def test_rejects_word_count_mismatch(self):
        _, base, cb, spec, index = make_fixture(n=10)
        wide = np.hstack([index.codes, index.codes])
        with pytest.raises(ValueError):
            build_index(wide, np.arange(10), spec, cb)

    def test_arrays_are_read_only(self):
        _, _, _, _, index = make_fixture(n=10)
        with pytest.raises(ValueError):
            index.codes[0, 0] = np.uint64(0)
        with pytest.raises(ValueError):
            index.ids[0] = 5


class TestShortlist:
    def test_matches_naive(self):
        rng, base, cb, spec, index = make_fixture()
        bits = np.vstack([HashCode(row, cb.k).to_bits() for row in index.codes])
        for _ in range(20):
            q = rng.standard_normal(base.shape[1]).astype(np.float32)
            qcode = encode(q, cb, spec)
            got = shortlist(index, qcode, 15).tolist()
            want = naive_shortlist(bits, qcode.to_bits(), index.ids, 15)
            assert got == want

    def test_tie_breaks_by_ascending_id(self):
        # two pairs of identical codes at swapped id order
        bits = np.array(
            [[1, 0, 1, 0], [0, 1, 1, 0], [1, 0, 1, 0], [0, 1, 1, 0]], dtype=np.uint8
        )
        codes = pack_bits(bits)
        rng = np.random.default_rng(0)
        cb = Codebook.from_centroids(rng.standard_normal((4, 3)).astype(np.float32))
        spec = EncoderSpec(Variant.N, n_nearest=2)
        index = build_index(codes, np.array([9, 1, 4, 2]), spec, cb)
        q = HashCode.from_bits(np.array([1, 0, 1, 0], dtype=np.uint8))
        assert shortlist(index, q, 4).tolist() == [4, 9, 1, 2]

    def test_prefix_monotone(self):
        rng, base, cb, spec, index = make_fixture()
        q = encode(rng.standard_normal(base.shape[1]).astype(np.float32), cb, spec)
        full = shortlist(index, q, index.size).tolist()
        for size in (1, 5, 40, 199):
            assert shortlist(index, q, size).tolist() == full[:size]

    def test_rejects_oversized_limit(self):
        rng, base, cb, spec, index = make_fixture(n=30)
        q = encode(base[0], cb, spec)
        with pytest.raises(ValueError):
            shortlist(index, q, 31)

    def test_rejects_bad_inputs(self):
        rng, base, cb, spec, index = make_fixture(n=10)
        q = encode(base[0], cb, spec)
        with pytest.raises(ValueError):
            shortlist(index, q, 0)
        wrong = HashCode.from_bits(np.ones(cb.k + 1, dtype=np.uint8))
        with pytest.raises(ValueError):
            shortlist(index, wrong, 5)


class TestSearch:
    def test_matches_naive_euclidean(self):
        rng, base, cb, spec, index = make_fixture()
        for _ in range(10):
            q = rng.standard_normal(base.shape[1]).astype(np.float32)
            res = search(index, base, q, shortlist_size=50, top=10)
            cand = shortlist(index, encode(q, cb, spec), 50)
            want = naive_search(base, index.ids, cand, q, Metric.EUCLIDEAN, 10)
            assert res.ids() == [i for i, _ in want]
            got_scores = [s for _, s in res.ranked]
            np.testing.assert_allclose(got_scores, [s for _, s in want], rtol=1e-6)

    def test_matches_naive_cosine(self):
        rng, base, cb, spec, index = make_fixture()
        for _ in range(10):
            q = rng.standard_normal(base.shape[1]).astype(np.float32)
            res = search(
                index, base, q, shortlist_size=50, top=10, metric=Metric.COSINE
            )
            cand = shortlist(index, encode(q, cb, spec), 50)
            want = naive_search(base, index.ids, cand, q, Metric.COSINE, 10)
            assert res.ids() == [i for i, _ in want]

    def test_full_shortlist_equals_brute_force(self):
        rng, base, cb, spec, index = make_fixture()
        queries = rng.standard_normal((5, base.shape[1])).astype(np.float32)
        gt = brute_force_gt(base, queries, 10)
        for qi, q in enumerate(queries):
            res = search(index, base, q, shortlist_size=index.size, top=10)
            assert res.ids() == gt[qi].tolist()

    def test_result_metadata(self):
        rng, base, cb, spec, index = make_fixture(n=40)
        res = search(index, base, base[0], shortlist_size=20, top=5)
        assert res.metric is Metric.EUCLIDEAN
        assert res.shortlist_size == 20
        assert len(res.ranked) == 5
        # querying with a base vector puts that exact row first at distance 0
        assert res.ranked[0][0] == 0
        assert res.ranked[0][1] == 0.0

    def test_rejects_top_above_shortlist(self):
        rng, base, cb, spec, index = make_fixture(n=30)
        with pytest.raises(ValueError):
            search(index, base, base[0], shortlist_size=8, top=100)

    def test_base_as_mapping(self):
        rng, base, cb, spec, index = make_fixture(n=25)
        lookup = {int(i): base[i] for i in range(25)}
        res_map = search(index, lookup, base[3], shortlist_size=10, top=5)
        res_arr = search(index, base, base[3], shortlist_size=10, top=5)
        assert res_map.ids() == res_arr.ids()

    def test_missing_vector_raises(self):
        rng, base, cb, spec, index = make_fixture(n=25)
        lookup = {int(i): base[i] for i in range(24)}  # id 24 missing
        with pytest.raises(LookupError):
            search(index, lookup, base[3], shortlist_size=25, top=5)
        with pytest.raises(LookupError):
            search(index, base[:24], base[3], shortlist_size=25, top=5)

    def test_zero_norm_cosine_rejected(self):
        rng, base, cb, spec, index = make_fixture(n=10)
        with pytest.raises(ValueError):
            search(
                index,
                base,
                np.zeros(base.shape[1], dtype=np.float32),
                shortlist_size=5,
                top=3,
                metric=Metric.COSINE,
            )


class TestSearchMany:
    def test_matches_single_query_search(self):
        rng, base, cb, spec, index = make_fixture()
        queries = rng.standard_normal((8, base.shape[1])).astype(np.float32)
        many = search_many(index, base, queries, shortlist_size=30, top=6)
        for q, res in zip(queries, many):
            single = search(index, base, q, shortlist_size=30, top=6)
            assert res.ids() == single.ids()

    def test_threads_do_not_change_results(self):
        rng, base, cb, spec, index = make_fixture()
        queries = rng.standard_normal((16, base.shape[1])).astype(np.float32)
        one = search_many(index, base, queries, shortlist_size=30, top=6, threads=1)
        four = search_many(index, base, queries, shortlist_size=30, top=6, threads=4)
        for a, b in zip(one, four):
            assert a.ranked == b.ranked

    def test_search_ids_agrees(self):
        rng, base, cb, spec, index = make_fixture()
        queries = rng.standard_normal((8, base.shape[1])).astype(np.float32)
        ids = search_ids(index, base, queries, shortlist_size=30, top=6)
        assert ids.shape == (8, 6)
        many = search_many(index, base, queries, shortlist_size=30, top=6)
        for row, res in zip(ids, many):
            assert row.tolist() == res.ids()


class TestIndexIO:
    def test_roundtrip_preserves_results(self, tmp_path):
        rng, base, cb, spec, index = make_fixture()
        path = tmp_path / "idx.mkmi"
        save_index(index, path)
        loaded = load_index(path)
        np.testing.assert_array_equal(loaded.codes, index.codes)
        np.testing.assert_array_equal(loaded.ids, index.ids)
        assert loaded.spec == index.spec
        q = rng.standard_normal(base.shape[1]).astype(np.float32)
        a = search(index, base, q, shortlist_size=40, top=10)
        b = search(loaded, base, q, shortlist_size=40, top=10)
        assert a.ranked == b.ranked

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "idx.mkmi"
        path.write_bytes(b"XXXX" + b"\x00" * 64)
        with pytest.raises(FormatError):
            load_index(path)

    def test_truncated(self, tmp_path):
        rng, base, cb, spec, index = make_fixture(n=20)
        path = tmp_path / "idx.mkmi"
        save_index(index, path)
        blob = path.read_bytes()
        path.write_bytes(blob[: len(blob) - 7])
        with pytest.raises(FormatError):
            load_index(path)

    def test_trailing_bytes(self, tmp_path):
        rng, base, cb, spec, index = make_fixture(n=20)
        path = tmp_path / "idx.mkmi"
        save_index(index, path)
        path.write_bytes(path.read_bytes() + b"\x00")
        with pytest.raises(FormatError):
            load_index(path)

    def test_huge_ids_rejected_on_load(self, tmp_path):
        _, base, cb, spec, index = make_fixture(n=4)
        path = tmp_path / "idx.mkmi"
        save_index(index, path)
        blob = bytearray(path.read_bytes())
        # the last 8 bytes are the final id; max int64 is fine, 2**63 is not
        blob[-8:] = (2**63 - 1).to_bytes(8, "little")
        path.write_bytes(bytes(blob))
        assert load_index(path).ids[-1] == 2**63 - 1
        blob[-8:] = (2**63).to_bytes(8, "little")
        path.write_bytes(bytes(blob))
        with pytest.raises(FormatError):
            load_index(path)
