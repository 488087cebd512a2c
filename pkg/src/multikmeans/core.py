"""Shared primitives: dense vectors, bit-packed hash codes, distance measures.

Vectors are 1-D numpy float arrays; files and codebooks store float32
components and every reduction here accumulates in float64. Hash codes pack
bit j into bit (j % 64) of little-endian word (j // 64), and bits past the
logical length stay zero so word-wise popcounts equal logical Hamming
weights.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

WORD_BITS = 64

__all__ = [
    "WORD_BITS",
    "Metric",
    "FormatError",
    "HashCode",
    "euclidean_distance",
    "cosine_similarity",
    "hamming_distance",
    "hamming_distances",
    "pairwise_sq_distances",
    "pack_bits",
    "unpack_bits",
    "words_for",
    "derive_seed",
]


class Metric(str, Enum):
    """Exact measures used for re-ranking and ground truth."""

    EUCLIDEAN = "euclidean"
    COSINE = "cosine"


class FormatError(ValueError):
    """A binary file does not match its declared layout."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


def read_exact(f, n: int, what: str) -> bytes:
    """Read exactly n bytes or raise FormatError at the current offset."""
    pos = f.tell()
    buf = f.read(n)
    if len(buf) != n:
        raise FormatError(
            f"truncated file while reading {what}: wanted {n} bytes, got {len(buf)}",
            offset=pos,
        )
    return buf


def as_vector(x, name: str = "vector") -> np.ndarray:
    """Validate a single descriptor: nonempty 1-D, numeric, finite."""
    arr = np.asarray(x)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError(f"{name} must be a nonempty 1-D array, got shape {arr.shape}")
    if not (np.issubdtype(arr.dtype, np.floating) or np.issubdtype(arr.dtype, np.integer)):
        raise ValueError(f"{name} must be numeric, got dtype {arr.dtype}")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite components")
    return arr


def as_matrix(x, name: str = "data") -> np.ndarray:
    """Validate a stack of descriptors: nonempty 2-D, numeric, finite."""
    arr = np.asarray(x)
    if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
        raise ValueError(f"{name} must be a nonempty 2-D array, got shape {arr.shape}")
    if not (np.issubdtype(arr.dtype, np.floating) or np.issubdtype(arr.dtype, np.integer)):
        raise ValueError(f"{name} must be numeric, got dtype {arr.dtype}")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite values")
    return arr


def pairwise_sq_distances(a, b, chunk_rows: int | None = None) -> np.ndarray:
    """Squared Euclidean distances between rows of a and rows of b.

    Computes ||x||^2 + ||y||^2 - 2 x.y in float64. Entries small enough to
    be dominated by cancellation error are recomputed with the exact
    difference form, so bitwise-equal rows get exactly 0. Rows of a are
    processed in chunks so the float64 temporaries stay bounded for large
    inputs. Returns shape (len(a), len(b)).
    """
    A = as_matrix(a, "a")
    B = as_matrix(b, "b")
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    B64 = np.asarray(B, dtype=np.float64)
    b_sq = np.einsum("md,md->m", B64, B64)
    n, m = A.shape[0], B64.shape[0]
    out = np.empty((n, m), dtype=np.float64)
    if chunk_rows is None:
        chunk_rows = max(1, (1 << 23) // m)
    for s in range(0, n, chunk_rows):
        blk = np.asarray(A[s : s + chunk_rows], dtype=np.float64)
        a_sq = np.einsum("nd,nd->n", blk, blk)
        scale = a_sq[:, None] + b_sq[None, :]
        chunk = scale - 2.0 * (blk @ B64.T)
        tiny = chunk <= 1e-8 * scale
        if tiny.any():
            ii, jj = np.nonzero(tiny)
            diffs = blk[ii] - B64[jj]
            chunk[ii, jj] = np.einsum("nd,nd->n", diffs, diffs)
        out[s : s + chunk_rows] = chunk
    np.maximum(out, 0.0, out=out)
    return out


def euclidean_distance(a, b) -> float:
    va = as_vector(a, "a")
    vb = as_vector(b, "b")
    if va.shape[0] != vb.shape[0]:
        raise ValueError(f"dimension mismatch: {va.shape[0]} vs {vb.shape[0]}")
    return float(np.sqrt(pairwise_sq_distances(va[None, :], vb[None, :])[0, 0]))


def cosine_similarity(a, b) -> float:
    """Cosine of the angle between a and b, clipped into [-1, 1]."""
    va = np.asarray(as_vector(a, "a"), dtype=np.float64)
    vb = np.asarray(as_vector(b, "b"), dtype=np.float64)
    if va.shape[0] != vb.shape[0]:
        raise ValueError(f"dimension mismatch: {va.shape[0]} vs {vb.shape[0]}")
    na = np.linalg.norm(va)
    nb = np.linalg.norm(vb)
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine similarity is undefined for zero-norm vectors")
    return float(np.clip(np.dot(va, vb) / (na * nb), -1.0, 1.0))


def words_for(length: int) -> int:
    """Number of 64-bit words needed for a code of the given bit length."""
    return (length + WORD_BITS - 1) // WORD_BITS


def pack_bits(bits) -> np.ndarray:
    """Pack bits (shape (..., length)) into little-endian uint64 words.

    Bit j of a row lands in bit (j % 64) of word (j // 64); pad bits past
    the length are zero. Accepts 1-D or 2-D input and keeps leading shape.
    """
    arr = np.asarray(bits)
    if arr.ndim not in (1, 2) or arr.shape[-1] == 0:
        raise ValueError(f"bits must be a nonempty 1-D or 2-D array, got shape {arr.shape}")
    packed = np.packbits(arr.astype(np.uint8), axis=-1, bitorder="little")
    nbytes = words_for(arr.shape[-1]) * 8
    pad = nbytes - packed.shape[-1]
    if pad:
        pad_widths = [(0, 0)] * (packed.ndim - 1) + [(0, pad)]
        packed = np.pad(packed, pad_widths)
    return np.ascontiguousarray(packed).view("<u8").astype(np.uint64, copy=False)


def unpack_bits(words, length: int) -> np.ndarray:
    """Inverse of pack_bits: uint64 words back to a bool array of given length."""
    w = np.asarray(words, dtype=np.uint64)
    if w.ndim not in (1, 2):
        raise ValueError(f"words must be 1-D or 2-D, got shape {w.shape}")
    if length < 1 or w.shape[-1] != words_for(length):
        raise ValueError(f"word count {w.shape[-1]} does not match length {length}")
    raw = np.ascontiguousarray(w).astype("<u8", copy=False).view(np.uint8)
    bits = np.unpackbits(raw, axis=-1, bitorder="little")
    return bits[..., :length].astype(bool)


@dataclass(frozen=True, eq=False)
class HashCode:
    """A fixed-length binary signature packed into uint64 words."""

    words: np.ndarray
    length: int

    def __post_init__(self):
        if self.length < 1:
            raise ValueError("code length must be positive")
        w = np.ascontiguousarray(self.words, dtype=np.uint64)
        if w.ndim != 1 or w.shape[0] != words_for(self.length):
            raise ValueError(
                f"expected {words_for(self.length)} words for length {self.length}, "
                f"got shape {np.shape(self.words)}"
            )
        tail = self.length % WORD_BITS
        if tail and int(w[-1]) >> tail:
            raise ValueError("non-canonical padding: bits set past the code length")
        w.setflags(write=False)
        object.__setattr__(self, "words", w)

    @classmethod
    def from_bits(cls, bits) -> "HashCode":
        arr = np.asarray(bits)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("bits must be a nonempty 1-D sequence")
        return cls(pack_bits(arr), arr.shape[0])

    def to_bits(self) -> np.ndarray:
        return unpack_bits(self.words, self.length)

    def popcount(self) -> int:
        return int(np.bitwise_count(self.words).sum())

    def __eq__(self, other) -> bool:
        if not isinstance(other, HashCode):
            return NotImplemented
        return self.length == other.length and bool(np.array_equal(self.words, other.words))

    def __repr__(self) -> str:
        return f"HashCode(length={self.length}, popcount={self.popcount()})"


def hamming_distance(a: HashCode, b: HashCode) -> int:
    if not isinstance(a, HashCode) or not isinstance(b, HashCode):
        raise TypeError("hamming_distance expects two HashCode values")
    if a.length != b.length:
        raise ValueError(f"code length mismatch: {a.length} vs {b.length}")
    return int(np.bitwise_count(np.bitwise_xor(a.words, b.words)).sum())


def hamming_distances(codes: np.ndarray, query_words: np.ndarray) -> np.ndarray:
    """Hamming distance from one packed query row to many packed code rows."""
    c = np.asarray(codes, dtype=np.uint64)
    q = np.asarray(query_words, dtype=np.uint64)
    if c.ndim != 2 or q.ndim != 1 or c.shape[1] != q.shape[0]:
        raise ValueError(f"shape mismatch: codes {c.shape} vs query words {q.shape}")
    return np.bitwise_count(np.bitwise_xor(c, q[None, :])).sum(axis=1, dtype=np.int64)


def derive_seed(seed: int, tag: int) -> int:
    """Deterministic sub-stream seed: child `tag` of `seed` via spawn keys.

    Keeps independent pipeline stages (training split, sub-codebook
    training, query sampling, synthetic data streams) on distinct PCG64
    streams even when the user supplies a single seed.
    """
    if seed < 0:
        raise ValueError("seed must be non-negative")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(tag),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
