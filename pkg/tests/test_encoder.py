import math
import struct

import numpy as np
import pytest

from multikmeans.core import FormatError
from multikmeans.encoder import (
    DualCodebook,
    EncoderSpec,
    MeanKind,
    Variant,
    encode,
    encode_dual,
    encode_many,
    encode_n,
    encode_t,
    load_dual_codebook,
    load_quantizer,
    read_spec_record,
    save_dual_codebook,
    split_training,
    threshold_delta,
    train_dual_codebook,
    write_spec_record,
)
from multikmeans.kmeans import Codebook, TrainParams, save_codebook


def naive_code_bits(x, centroids, variant, mean="arith", n=0):
    """Reference implementation in plain python; geometric mean uses the
    product form rather than the exp/log form."""
    dists = [
        math.sqrt(sum((float(xi) - float(ci)) ** 2 for xi, ci in zip(x, c)))
        for c in centroids
    ]
    if variant == "t":
        if mean == "arith":
            delta = sum(dists) / len(dists)
        else:
            delta = math.prod(dists) ** (1.0 / len(dists))
        return [1 if d <= delta else 0 for d in dists]
    order = sorted(range(len(dists)), key=lambda j: (dists[j], j))
    bits = [0] * len(dists)
    for j in order[:n]:
        bits[j] = 1
    return bits


def random_codebook(rng, k, dim):
    return Codebook.from_centroids(rng.standard_normal((k, dim)).astype(np.float32))


class TestThresholdDelta:
    def test_arithmetic(self):
        assert threshold_delta([1.0, 2.0, 3.0, 4.0], MeanKind.ARITHMETIC) == 2.5

    def test_geometric(self):
        np.testing.assert_allclose(
            threshold_delta([1.0, 2.0, 4.0, 8.0], MeanKind.GEOMETRIC),
            (1.0 * 2.0 * 4.0 * 8.0) ** 0.25,
            rtol=1e-12,
        )

    def test_constant_profile(self):
        for kind in MeanKind:
            assert threshold_delta([3.5, 3.5, 3.5], kind) == pytest.approx(3.5, rel=1e-12)

    def test_zero_distance_collapses_geometric(self):
        assert threshold_delta([0.0, 2.0, 5.0], MeanKind.GEOMETRIC) == 0.0
        assert threshold_delta([0.0, 2.0, 4.0], MeanKind.ARITHMETIC) == 2.0

    def test_validation(self):
        with pytest.raises(ValueError):
            threshold_delta([], MeanKind.ARITHMETIC)
        with pytest.raises(ValueError):
            threshold_delta([1.0], MeanKind.ARITHMETIC)
        with pytest.raises(ValueError):
            threshold_delta([1.0, -2.0], MeanKind.ARITHMETIC)


class TestEncoderSpec:
    def test_string_coercion(self):
        spec = EncoderSpec("t", "geom")
        assert spec.variant is Variant.T and spec.mean_kind is MeanKind.GEOMETRIC

    def test_threshold_variants_ignore_n(self):
        assert EncoderSpec(Variant.T, n_nearest=7).n_nearest == 0

    def test_nearest_variants_need_n(self):
        with pytest.raises(ValueError):
            EncoderSpec(Variant.N)
        with pytest.raises(ValueError):
            EncoderSpec(Variant.N2, n_nearest=0)

    def test_unknown_variant(self):
        with pytest.raises(ValueError):
            EncoderSpec("q")


class TestEncodeT:
    def test_matches_naive_arith(self):
        rng = np.random.default_rng(40)
        for _ in range(50):
            k, dim = int(rng.integers(2, 12)), int(rng.integers(2, 8))
            cb = random_codebook(rng, k, dim)
            x = rng.standard_normal(dim).astype(np.float32)
            got = encode_t(x, cb).to_bits().astype(int).tolist()
            assert got == naive_code_bits(x, cb.centroids, "t", mean="arith")

    def test_matches_naive_geom(self):
        rng = np.random.default_rng(41)
        for _ in range(50):
            k, dim = int(rng.integers(2, 12)), int(rng.integers(2, 8))
            cb = random_codebook(rng, k, dim)
            x = rng.standard_normal(dim).astype(np.float32)
            got = encode_t(x, cb, MeanKind.GEOMETRIC).to_bits().astype(int).tolist()
            assert got == naive_code_bits(x, cb.centroids, "t", mean="geom")

    def test_boundary_is_inclusive(self):
        # all centroids exactly at distance 1: delta = 1 under both means,
        # and <= keeps every bit set
        cb = Codebook.from_centroids(
            np.array([[1, 0], [-1, 0], [0, 1], [0, -1]], dtype=np.float32)
        )
        x = np.zeros(2, dtype=np.float32)
        for kind in MeanKind:
            code = encode_t(x, cb, kind)
            assert code.popcount() == 4

    def test_mean_kinds_can_differ(self):
        # distances 1, 5, 12: arithmetic mean 6 keeps two bits, geometric
        # mean ~3.9 keeps one
        cb = Codebook.from_centroids(np.array([[1.0], [5.0], [12.0]], dtype=np.float32))
        x = np.zeros(1, dtype=np.float32)
        arith = encode_t(x, cb, MeanKind.ARITHMETIC).to_bits().astype(int).tolist()
        geom = encode_t(x, cb, MeanKind.GEOMETRIC).to_bits().astype(int).tolist()
        assert arith == [1, 1, 0]
        assert geom == [1, 0, 0]

    def test_vector_on_centroid_with_geometric_mean(self):
        # exact zero distance collapses the geometric threshold to zero, so
        # only exact-zero bits survive
        cents = np.array([[0.0, 0.0], [3.0, 0.0], [0.0, 4.0]], dtype=np.float32)
        cb = Codebook.from_centroids(cents)
        code = encode_t(cents[0], cb, MeanKind.GEOMETRIC)
        assert code.to_bits().astype(int).tolist() == [1, 0, 0]

    def test_code_length_is_k(self):
        rng = np.random.default_rng(42)
        cb = random_codebook(rng, 9, 4)
        assert encode_t(rng.standard_normal(4), cb).length == 9

    def test_at_least_one_bit_set(self):
        # the nearest centroid is never above either mean
        rng = np.random.default_rng(43)
        for _ in range(100):
            cb = random_codebook(rng, int(rng.integers(2, 20)), 3)
            x = rng.standard_normal(3).astype(np.float32)
            for kind in MeanKind:
                assert encode_t(x, cb, kind).popcount() >= 1


class TestEncodeN:
    def test_matches_naive(self):
        rng = np.random.default_rng(44)
        for _ in range(50):
            k, dim = int(rng.integers(2, 12)), int(rng.integers(2, 8))
            n = int(rng.integers(1, k + 1))
            cb = random_codebook(rng, k, dim)
            x = rng.standard_normal(dim).astype(np.float32)
            got = encode_n(x, cb, n).to_bits().astype(int).tolist()
            assert got == naive_code_bits(x, cb.centroids, "n", n=n)

    def test_popcount_is_exactly_n(self):
        rng = np.random.default_rng(45)
        cb = random_codebook(rng, 16, 5)
        x = rng.standard_normal(5).astype(np.float32)
        for n in range(1, 17):
            assert encode_n(x, cb, n).popcount() == n

    def test_nested_in_n(self):
        rng = np.random.default_rng(46)
        cb = random_codebook(rng, 12, 4)
        x = rng.standard_normal(4).astype(np.float32)
        prev = np.zeros(12, dtype=bool)
        for n in range(1, 13):
            bits = encode_n(x, cb, n).to_bits()
            assert (bits | prev).tolist() == bits.tolist()  # superset of previous
            prev = bits

    def test_ties_take_lowest_centroid_index(self):
        cb = Codebook.from_centroids(
            np.array([[1, 0], [-1, 0], [0, 1], [0, -1]], dtype=np.float32)
        )
        code = encode_n(np.zeros(2, dtype=np.float32), cb, 2)
        assert code.to_bits().astype(int).tolist() == [1, 1, 0, 0]

    def test_n_bounds(self):
        rng = np.random.default_rng(47)
        cb = random_codebook(rng, 4, 3)
        x = rng.standard_normal(3)
        with pytest.raises(ValueError):
            encode_n(x, cb, 0)
        with pytest.raises(ValueError):
            encode_n(x, cb, 5)


class TestEncodeBatch:
    def test_encode_many_matches_single(self):
        rng = np.random.default_rng(48)
        cb = random_codebook(rng, 10, 6)
        X = rng.standard_normal((30, 6)).astype(np.float32)
        spec = EncoderSpec(Variant.T, MeanKind.GEOMETRIC)
        packed = encode_many(X, cb, spec)
        for i, x in enumerate(X):
            np.testing.assert_array_equal(packed[i], encode(x, cb, spec).words)

    def test_chunking_does_not_change_codes(self):
        rng = np.random.default_rng(49)
        cb = random_codebook(rng, 8, 5)
        X = rng.standard_normal((50, 5)).astype(np.float32)
        spec = EncoderSpec(Variant.N, n_nearest=3)
        np.testing.assert_array_equal(
            encode_many(X, cb, spec, chunk_rows=7), encode_many(X, cb, spec)
        )

    def test_dimension_mismatch(self):
        rng = np.random.default_rng(50)
        cb = random_codebook(rng, 4, 5)
        with pytest.raises(ValueError):
            encode_many(rng.standard_normal((3, 4)), cb, EncoderSpec(Variant.T))

    def test_wrong_quantizer_kind(self):
        rng = np.random.default_rng(51)
        cb = random_codebook(rng, 4, 3)
        dual = DualCodebook(cb, random_codebook(rng, 4, 3))
        with pytest.raises(TypeError):
            encode(np.zeros(3), dual, EncoderSpec(Variant.T))
        with pytest.raises(TypeError):
            encode(np.zeros(3), cb, EncoderSpec(Variant.T2))


class TestSplitTraining:
    def test_partition(self):
        rng = np.random.default_rng(52)
        data = rng.standard_normal((11, 3)).astype(np.float32)
        a, b = split_training(data, seed=5)
        assert len(a) == 6 and len(b) == 5
        rows = {tuple(r) for r in data}
        assert {tuple(r) for r in a} | {tuple(r) for r in b} == rows
        assert {tuple(r) for r in a} & {tuple(r) for r in b} == set()

    def test_deterministic_by_seed(self):
        rng = np.random.default_rng(53)
        data = rng.standard_normal((20, 2)).astype(np.float32)
        a1, b1 = split_training(data, seed=3)
        a2, b2 = split_training(data, seed=3)
        a3, _ = split_training(data, seed=4)
        np.testing.assert_array_equal(a1, a2)
        np.testing.assert_array_equal(b1, b2)
        assert not np.array_equal(a1, a3)

    def test_too_small(self):
        with pytest.raises(ValueError):
            split_training(np.zeros((1, 2)))


class TestDualCodebook:
    def test_train_dual_shapes_and_determinism(self):
        rng = np.random.default_rng(54)
        data = rng.standard_normal((120, 4)).astype(np.float32)
        d1 = train_dual_codebook(data, 8, TrainParams(seed=6))
        d2 = train_dual_codebook(data, 8, TrainParams(seed=6))
        assert d1.first.k == d1.second.k == 8
        assert d1.code_length == 16
        np.testing.assert_array_equal(d1.first.centroids, d2.first.centroids)
        np.testing.assert_array_equal(d1.second.centroids, d2.second.centroids)
        assert not np.array_equal(d1.first.centroids, d1.second.centroids)

    def test_mismatched_subbooks_rejected(self):
        rng = np.random.default_rng(55)
        with pytest.raises(ValueError):
            DualCodebook(random_codebook(rng, 4, 3), random_codebook(rng, 4, 2))
        with pytest.raises(ValueError):
            DualCodebook(random_codebook(rng, 4, 3), random_codebook(rng, 6, 3))

    def test_encode_dual_concatenates(self):
        rng = np.random.default_rng(56)
        first = random_codebook(rng, 6, 4)
        second = random_codebook(rng, 6, 4)
        dual = DualCodebook(first, second)
        x = rng.standard_normal(4).astype(np.float32)
        code = encode_dual(x, dual, EncoderSpec(Variant.T2, MeanKind.ARITHMETIC))
        assert code.length == 12
        want = naive_code_bits(x, first.centroids, "t") + naive_code_bits(
            x, second.centroids, "t"
        )
        assert code.to_bits().astype(int).tolist() == want

    def test_n2_sets_n_bits_per_half(self):
        rng = np.random.default_rng(57)
        dual = DualCodebook(random_codebook(rng, 8, 3), random_codebook(rng, 8, 3))
        x = rng.standard_normal(3).astype(np.float32)
        code = encode_dual(x, dual, EncoderSpec(Variant.N2, n_nearest=3))
        bits = code.to_bits()
        assert bits[:8].sum() == 3 and bits[8:].sum() == 3

    def test_encode_dual_rejects_single_variants(self):
        rng = np.random.default_rng(58)
        dual = DualCodebook(random_codebook(rng, 4, 3), random_codebook(rng, 4, 3))
        with pytest.raises(ValueError):
            encode_dual(np.zeros(3), dual, EncoderSpec(Variant.T))


class TestSerialization:
    def test_spec_record_roundtrip(self, tmp_path):
        for spec in (
            EncoderSpec(Variant.T, MeanKind.GEOMETRIC),
            EncoderSpec(Variant.N, n_nearest=5),
            EncoderSpec(Variant.T2),
            EncoderSpec(Variant.N2, n_nearest=16),
        ):
            path = tmp_path / "spec.bin"
            with open(path, "wb") as f:
                write_spec_record(f, spec)
            with open(path, "rb") as f:
                assert read_spec_record(f) == spec

    def test_spec_record_rejects_unknown_tags(self, tmp_path):
        path = tmp_path / "spec.bin"
        path.write_bytes(struct.pack("<BBI", 9, 0, 0))
        with open(path, "rb") as f:
            with pytest.raises(FormatError):
                read_spec_record(f)
        path.write_bytes(struct.pack("<BBI", 0, 7, 0))
        with open(path, "rb") as f:
            with pytest.raises(FormatError):
                read_spec_record(f)

    def test_dual_roundtrip(self, tmp_path):
        rng = np.random.default_rng(59)
        data = rng.standard_normal((60, 3)).astype(np.float32)
        dual = train_dual_codebook(data, 4, TrainParams(seed=2))
        path = tmp_path / "dual.mkm2"
        save_dual_codebook(dual, path)
        loaded = load_dual_codebook(path)
        np.testing.assert_array_equal(loaded.first.centroids, dual.first.centroids)
        np.testing.assert_array_equal(loaded.second.centroids, dual.second.centroids)

    def test_load_quantizer_dispatch(self, tmp_path):
        rng = np.random.default_rng(60)
        cb = random_codebook(rng, 4, 3)
        dual = DualCodebook(random_codebook(rng, 4, 3), random_codebook(rng, 4, 3))
        save_codebook(cb, tmp_path / "one.mkmc")
        save_dual_codebook(dual, tmp_path / "two.mkm2")
        assert isinstance(load_quantizer(tmp_path / "one.mkmc"), Codebook)
        assert isinstance(load_quantizer(tmp_path / "two.mkm2"), DualCodebook)

    def test_dual_with_mismatched_halves_rejected(self, tmp_path):
        rng = np.random.default_rng(61)
        a = random_codebook(rng, 4, 3)
        b = random_codebook(rng, 4, 2)
        path = tmp_path / "bad.mkm2"
        from multikmeans.kmeans import write_codebook_record

        with open(path, "wb") as f:
            f.write(b"MKM2")
            write_codebook_record(f, a)
            write_codebook_record(f, b)
        with pytest.raises(FormatError):
            load_dual_codebook(path)
