"""Hash-code construction by multiple-centroid assignment.

A descriptor's code carries one bit per centroid. Variant "t" sets every
bit whose centroid lies within a mean-derived distance threshold
(arithmetic or geometric mean of the distances to all centroids); variant
"n" sets the bits of a fixed count of nearest centroids. The "t2"/"n2"
variants concatenate the codes from two codebooks trained on disjoint
random halves of the learning set, which doubles the code length for the
same per-codebook cost.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .core import (
    FormatError,
    HashCode,
    as_matrix,
    as_vector,
    derive_seed,
    pack_bits,
    pairwise_sq_distances,
    read_exact,
    words_for,
)
from .kmeans import (
    Codebook,
    TrainParams,
    load_codebook,
    read_codebook_record,
    train,
    write_codebook_record,
)

__all__ = [
    "Variant",
    "MeanKind",
    "EncoderSpec",
    "DualCodebook",
    "threshold_delta",
    "encode",
    "encode_many",
    "encode_t",
    "encode_n",
    "encode_dual",
    "split_training",
    "train_dual_codebook",
    "code_length",
    "save_dual_codebook",
    "load_dual_codebook",
    "load_quantizer",
    "write_dual_record",
    "read_dual_record",
    "write_spec_record",
    "read_spec_record",
]

DUAL_MAGIC = b"MKM2"

# sub-stream tags for deriving split/training seeds from one run seed
_SPLIT_STREAM = 1
_FIRST_STREAM = 2
_SECOND_STREAM = 3


class Variant(str, Enum):
    T = "t"
    N = "n"
    T2 = "t2"
    N2 = "n2"


class MeanKind(str, Enum):
    ARITHMETIC = "arith"
    GEOMETRIC = "geom"


_VARIANT_TAGS = {Variant.T: 0, Variant.N: 1, Variant.T2: 2, Variant.N2: 3}
_TAG_VARIANTS = {v: k for k, v in _VARIANT_TAGS.items()}
_MEAN_TAGS = {MeanKind.ARITHMETIC: 0, MeanKind.GEOMETRIC: 1}
_TAG_MEANS = {v: k for k, v in _MEAN_TAGS.items()}
_SPEC_RECORD = struct.Struct("<BBI")  # variant tag, mean tag, n_nearest


@dataclass(frozen=True)
class EncoderSpec:
    """Which bit rule to apply and its parameters.

    mean_kind matters for the threshold variants; n_nearest counts bits per
    codebook for the nearest-count variants (so an n2 code sets 2*n_nearest
    bits in total).
    """

    variant: Variant
    mean_kind: MeanKind = MeanKind.ARITHMETIC
    n_nearest: int = 0

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        object.__setattr__(self, "mean_kind", MeanKind(self.mean_kind))
        if self.variant in (Variant.N, Variant.N2):
            if self.n_nearest < 1:
                raise ValueError(f"variant {self.variant.value} needs n_nearest >= 1")
        else:
            object.__setattr__(self, "n_nearest", 0)


@dataclass(frozen=True, eq=False)
class DualCodebook:
    """Two same-shape codebooks trained on disjoint halves of a learning set."""

    first: Codebook
    second: Codebook

    def __post_init__(self):
        if not isinstance(self.first, Codebook) or not isinstance(self.second, Codebook):
            raise TypeError("DualCodebook wraps two Codebook values")
        if self.first.dim != self.second.dim:
            raise ValueError(f"dimension mismatch: {self.first.dim} vs {self.second.dim}")
        if self.first.k != self.second.k:
            raise ValueError(f"sub-codebook sizes differ: {self.first.k} vs {self.second.k}")

    @property
    def k(self) -> int:
        return self.first.k

    @property
    def dim(self) -> int:
        return self.first.dim

    @property
    def code_length(self) -> int:
        return self.first.k + self.second.k

    def __repr__(self) -> str:
        return f"DualCodebook(k={self.k}+{self.k}, dim={self.dim})"


def _threshold_rows(dists: np.ndarray, mean_kind: MeanKind) -> np.ndarray:
    if mean_kind is MeanKind.ARITHMETIC:
        return dists.mean(axis=1)
    # geometric mean; any zero distance collapses the product to zero
    zero = (dists == 0.0).any(axis=1)
    safe = np.where(dists > 0.0, dists, 1.0)
    means = np.exp(np.log(safe).mean(axis=1))
    return np.where(zero, 0.0, means)


def threshold_delta(dists, mean_kind: MeanKind = MeanKind.ARITHMETIC) -> float:
    """Mean of a distance profile: arithmetic or geometric per mean_kind."""
    d = np.asarray(dists, dtype=np.float64)
    if d.ndim != 1 or d.size == 0:
        raise ValueError("dists must be a nonempty 1-D sequence")
    if d.size < 2:
        raise ValueError("a distance profile covers at least 2 centroids")
    if (d < 0).any() or not np.isfinite(d).all():
        raise ValueError("distances must be finite and non-negative")
    return float(_threshold_rows(d[None, :], MeanKind(mean_kind))[0])


def _bits_threshold(dists: np.ndarray, mean_kind: MeanKind) -> np.ndarray:
    return dists <= _threshold_rows(dists, mean_kind)[:, None]


def _bits_nearest(dists: np.ndarray, n: int) -> np.ndarray:
    # stable argsort: equal distances rank the lower centroid index first
    order = np.argsort(dists, axis=1, kind="stable")
    bits = np.zeros(dists.shape, dtype=bool)
    np.put_along_axis(bits, order[:, :n], True, axis=1)
    return bits


def code_length(spec: EncoderSpec, quantizer) -> int:
    """Bits per code for this spec/quantizer pair; validates the pairing."""
    spec = spec if isinstance(spec, EncoderSpec) else EncoderSpec(*spec)
    if spec.variant in (Variant.T, Variant.N):
        if not isinstance(quantizer, Codebook):
            raise TypeError(f"variant {spec.variant.value} requires a single codebook")
        if spec.variant is Variant.N and spec.n_nearest > quantizer.k:
            raise ValueError(f"n_nearest={spec.n_nearest} exceeds k={quantizer.k}")
        return quantizer.k
    if not isinstance(quantizer, DualCodebook):
        raise TypeError(f"variant {spec.variant.value} requires a dual codebook")
    if spec.variant is Variant.N2 and spec.n_nearest > quantizer.k:
        raise ValueError(f"n_nearest={spec.n_nearest} exceeds sub-codebook k={quantizer.k}")
    return quantizer.code_length


def _encode_bits(block: np.ndarray, quantizer, spec: EncoderSpec) -> np.ndarray:
    if spec.variant in (Variant.T, Variant.N):
        d = np.sqrt(pairwise_sq_distances(block, quantizer.centroids))
        if spec.variant is Variant.T:
            return _bits_threshold(d, spec.mean_kind)
        return _bits_nearest(d, spec.n_nearest)
    parts = []
    for cb in (quantizer.first, quantizer.second):
        d = np.sqrt(pairwise_sq_distances(block, cb.centroids))
        if spec.variant is Variant.T2:
            parts.append(_bits_threshold(d, spec.mean_kind))
        else:
            parts.append(_bits_nearest(d, spec.n_nearest))
    return np.concatenate(parts, axis=1)


def encode_many(vectors, quantizer, spec: EncoderSpec, chunk_rows: int = 65536) -> np.ndarray:
    """Encode a stack of descriptors; returns packed codes shaped (N, words).

    Rows are processed in chunks so the float64 distance temporaries stay
    bounded on large batches.
    """
    X = as_matrix(vectors, "vectors")
    length = code_length(spec, quantizer)
    if X.shape[1] != quantizer.dim:
        raise ValueError(f"dimension mismatch: vectors {X.shape[1]} vs codebook {quantizer.dim}")
    out = np.empty((X.shape[0], words_for(length)), dtype=np.uint64)
    for s in range(0, X.shape[0], chunk_rows):
        out[s : s + chunk_rows] = pack_bits(_encode_bits(X[s : s + chunk_rows], quantizer, spec))
    return out


def encode(x, quantizer, spec: EncoderSpec) -> HashCode:
    """Encode one descriptor into a HashCode."""
    v = as_vector(x)
    words = encode_many(v[None, :], quantizer, spec)[0]
    return HashCode(words, code_length(spec, quantizer))


def encode_t(x, codebook: Codebook, mean_kind: MeanKind = MeanKind.ARITHMETIC) -> HashCode:
    """Set every bit whose centroid distance is <= the chosen mean."""
    return encode(x, codebook, EncoderSpec(Variant.T, mean_kind=MeanKind(mean_kind)))


def encode_n(x, codebook: Codebook, n: int) -> HashCode:
    """Set exactly the bits of the n nearest centroids (ties to lower index)."""
    return encode(x, codebook, EncoderSpec(Variant.N, n_nearest=n))


def encode_dual(x, dual: DualCodebook, spec: EncoderSpec) -> HashCode:
    """Concatenate codes from both sub-codebooks per a t2/n2 spec."""
    spec = spec if isinstance(spec, EncoderSpec) else EncoderSpec(*spec)
    if spec.variant not in (Variant.T2, Variant.N2):
        raise ValueError(f"encode_dual needs a t2/n2 spec, got {spec.variant.value}")
    return encode(x, dual, spec)


def split_training(data, seed: int = 0):
    """Shuffle-split rows into two disjoint halves (sizes differ by <= 1)."""
    X = np.asarray(data)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("need at least two training points to split")
    perm = np.random.default_rng(int(seed)).permutation(X.shape[0])
    half = (X.shape[0] + 1) // 2
    return X[perm[:half]].copy(), X[perm[half:]].copy()


def train_dual_codebook(data, k_sub: int, params: TrainParams = TrainParams()) -> DualCodebook:
    """Split the learning set and train one k_sub codebook per half."""
    half_a, half_b = split_training(data, derive_seed(params.seed, _SPLIT_STREAM))
    first = train(half_a, k_sub, replace(params, seed=derive_seed(params.seed, _FIRST_STREAM)))
    second = train(half_b, k_sub, replace(params, seed=derive_seed(params.seed, _SECOND_STREAM)))
    return DualCodebook(first, second)


def write_spec_record(f, spec: EncoderSpec) -> None:
    f.write(_SPEC_RECORD.pack(_VARIANT_TAGS[spec.variant], _MEAN_TAGS[spec.mean_kind], spec.n_nearest))


def read_spec_record(f) -> EncoderSpec:
    start = f.tell()
    vtag, mtag, n_nearest = _SPEC_RECORD.unpack(read_exact(f, _SPEC_RECORD.size, "encoder spec"))
    if vtag not in _TAG_VARIANTS:
        raise FormatError(f"unknown variant tag {vtag}", offset=start)
    if mtag not in _TAG_MEANS:
        raise FormatError(f"unknown mean tag {mtag}", offset=start + 1)
    variant = _TAG_VARIANTS[vtag]
    if variant in (Variant.N, Variant.N2) and n_nearest < 1:
        raise FormatError(f"variant {variant.value} stored with n_nearest={n_nearest}", offset=start + 2)
    return EncoderSpec(variant, _TAG_MEANS[mtag], n_nearest)


def write_dual_record(f, dual: DualCodebook) -> None:
    f.write(DUAL_MAGIC)
    write_codebook_record(f, dual.first)
    write_codebook_record(f, dual.second)


def read_dual_record(f) -> DualCodebook:
    start = f.tell()
    magic = read_exact(f, 4, "dual codebook magic")
    if magic != DUAL_MAGIC:
        raise FormatError(f"bad dual codebook magic {magic!r}", offset=start)
    first = read_codebook_record(f)
    second = read_codebook_record(f)
    try:
        return DualCodebook(first, second)
    except ValueError as exc:
        raise FormatError(f"inconsistent dual codebook: {exc}", offset=start) from exc


def save_dual_codebook(dual: DualCodebook, path) -> None:
    with open(path, "wb") as f:
        write_dual_record(f, dual)


def load_dual_codebook(path) -> DualCodebook:
    with open(path, "rb") as f:
        dual = read_dual_record(f)
        if f.read(1):
            raise FormatError("trailing bytes after dual codebook record", offset=f.tell() - 1)
    return dual


def load_quantizer(path):
    """Load either codebook flavor by sniffing the leading magic."""
    with open(path, "rb") as f:
        magic = read_exact(f, 4, "codebook magic")
    if magic == DUAL_MAGIC:
        return load_dual_codebook(path)
    return load_codebook(path)
