"""Vector file formats and synthetic dataset generation.

The three on-disk formats share one record layout: a little-endian int32
component count, then that many components. `.fvecs` stores float32
components, `.bvecs` uint8, `.ivecs` int32 (used for neighbor-id lists).
Every record in a file carries the same count, so file size must be an
exact multiple of the record size; anything else raises FormatError with
the byte offset of the first inconsistency.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

from .core import FormatError, as_matrix, derive_seed, read_exact
from .evaluate import brute_force_gt

__all__ = [
    "VectorFile",
    "VectorReader",
    "inspect_vectors",
    "read_vectors",
    "write_vectors",
    "read_labels",
    "write_labels",
    "SyntheticSpec",
    "SyntheticDataset",
    "generate_synthetic",
]

_KINDS = {
    "float32": ("<f4", 4),
    "uint8": ("u1", 1),
    "int32": ("<i4", 4),
}
_SUFFIX_KIND = {".fvecs": "float32", ".bvecs": "uint8", ".ivecs": "int32"}

# sub-stream tags for the synthetic generator
_CENTERS_STREAM = 10
_BASE_STREAM = 11
_QUERIES_STREAM = 12
_LEARNING_STREAM = 13


def element_kind_for(path, element_kind: str | None = None) -> str:
    """Resolve the element kind from an explicit argument or the file suffix."""
    if element_kind is not None:
        if element_kind not in _KINDS:
            raise ValueError(f"unknown element kind {element_kind!r}")
        return element_kind
    suffix = os.path.splitext(str(path))[1].lower()
    if suffix not in _SUFFIX_KIND:
        raise ValueError(f"cannot infer element kind from suffix {suffix!r}; pass element_kind")
    return _SUFFIX_KIND[suffix]


def _record_dtype(kind: str, dim: int) -> np.dtype:
    payload, _ = _KINDS[kind]
    return np.dtype([("dim", "<i4"), ("data", payload, (dim,))])


@dataclass(frozen=True)
class VectorFile:
    """Shape summary of one vector file."""

    path: str
    element_kind: str
    dim: int
    count: int

    @property
    def record_size(self) -> int:
        return 4 + self.dim * _KINDS[self.element_kind][1]


def inspect_vectors(path, element_kind: str | None = None) -> VectorFile:
    """Read the leading header and validate the whole-file size invariant."""
    kind = element_kind_for(path, element_kind)
    size = os.path.getsize(path)
    if size == 0:
        raise FormatError(f"{path}: empty vector file", offset=0)
    with open(path, "rb") as f:
        head = read_exact(f, 4, "record header")
    dim = struct.unpack("<i", head)[0]
    if dim < 1:
        raise FormatError(f"{path}: invalid component count {dim} in record header", offset=0)
    rec = 4 + dim * _KINDS[kind][1]
    if size % rec:
        raise FormatError(
            f"{path}: size {size} is not a whole number of {rec}-byte records",
            offset=size - (size % rec),
        )
    return VectorFile(path=str(path), element_kind=kind, dim=dim, count=size // rec)


def _check_headers(headers: np.ndarray, dim: int, first_record: int, record_size: int, path) -> None:
    bad = np.flatnonzero(headers != dim)
    if bad.size:
        rec_no = first_record + int(bad[0])
        raise FormatError(
            f"{path}: record {rec_no} declares {int(headers[bad[0]])} components, expected {dim}",
            offset=rec_no * record_size,
        )


def _payload(recs: np.ndarray, kind: str) -> np.ndarray:
    data = recs["data"]
    if kind == "int32":
        return data.astype(np.int32)
    # descriptor kinds widen to the float32 storage dtype
    return data.astype(np.float32)


def read_vectors(path, start: int = 0, count: int | None = None, element_kind: str | None = None) -> np.ndarray:
    """Load records [start, start+count) as a 2-D array.

    Returns float32 for descriptor files (bvecs widen from uint8) and int32
    for id-list files. Validates every record header it touches.
    """
    meta = inspect_vectors(path, element_kind)
    if start < 0 or start > meta.count:
        raise ValueError(f"start={start} outside [0, {meta.count}]")
    if count is None:
        count = meta.count - start
    if count < 0 or start + count > meta.count:
        raise ValueError(f"range [{start}, {start + count}) exceeds {meta.count} records")
    dt = _record_dtype(meta.element_kind, meta.dim)
    if count == 0:
        return np.empty((0, meta.dim), dtype=np.int32 if meta.element_kind == "int32" else np.float32)
    with open(path, "rb") as f:
        f.seek(start * meta.record_size)
        buf = read_exact(f, count * meta.record_size, "vector records")
    recs = np.frombuffer(buf, dtype=dt)
    _check_headers(recs["dim"], meta.dim, start, meta.record_size, path)
    return _payload(recs, meta.element_kind)


def write_vectors(path, vectors, element_kind: str | None = None) -> VectorFile:
    """Write a 2-D array in the record format matching the suffix or kind.

    Values must be representable in the element kind: finite for float32,
    integral and in range for uint8/int32.
    """
    kind = element_kind_for(path, element_kind)
    arr = as_matrix(vectors, "vectors")
    n, dim = arr.shape
    if kind == "float32":
        with np.errstate(over="ignore"):
            cast = np.ascontiguousarray(arr, dtype=np.float32)
        if not np.isfinite(cast).all():
            raise ValueError("values overflow float32")
    else:
        if np.issubdtype(arr.dtype, np.floating) and not (arr == np.floor(arr)).all():
            raise ValueError(f"fractional values are not representable as {kind}")
        lo, hi = (0, 255) if kind == "uint8" else (-(2**31), 2**31 - 1)
        if (arr < lo).any() or (arr > hi).any():
            raise ValueError(f"values outside [{lo}, {hi}] are not representable as {kind}")
        cast = np.ascontiguousarray(arr, dtype=np.uint8 if kind == "uint8" else np.int32)
    recs = np.empty(n, dtype=_record_dtype(kind, dim))
    recs["dim"] = dim
    recs["data"] = cast
    with open(path, "wb") as f:
        f.write(recs.tobytes())
    return VectorFile(path=str(path), element_kind=kind, dim=dim, count=n)


class VectorReader:
    """Random access over a vector file without loading it fully.

    Rows are memory-mapped; take() validates the headers of the rows it
    touches and returns float32 (descriptor kinds) or int32 payloads, so a
    reader can stand in for an in-memory base array during search.
    """

    def __init__(self, path, element_kind: str | None = None):
        self.meta = inspect_vectors(path, element_kind)
        self._mm = np.memmap(path, dtype=_record_dtype(self.meta.element_kind, self.meta.dim), mode="r")

    @property
    def dim(self) -> int:
        return self.meta.dim

    @property
    def count(self) -> int:
        return self.meta.count

    def __len__(self) -> int:
        return self.meta.count

    def take(self, ids) -> np.ndarray:
        if self._mm is None:
            raise ValueError("reader is closed")
        idx = np.asarray(ids, dtype=np.int64)
        if idx.ndim != 1:
            raise ValueError("ids must be 1-D")
        if idx.size and (idx.min() < 0 or idx.max() >= self.meta.count):
            bad = idx[(idx < 0) | (idx >= self.meta.count)][0]
            raise LookupError(f"vector id {int(bad)} outside file with {self.meta.count} records")
        recs = self._mm[idx]
        _check_headers(np.asarray(recs["dim"]), self.meta.dim, 0, self.meta.record_size, self.meta.path)
        return _payload(recs, self.meta.element_kind)

    def read(self, start: int, count: int) -> np.ndarray:
        if start < 0 or count < 0 or start + count > self.meta.count:
            raise ValueError(f"range [{start}, {start + count}) exceeds {self.meta.count} records")
        return self.take(np.arange(start, start + count))

    def __getitem__(self, i: int):
        return self.take(np.asarray([int(i)]))[0]

    def close(self) -> None:
        self._mm = None

    def __enter__(self) -> "VectorReader":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def write_labels(path, labels) -> None:
    """One integer class label per line, aligned with vector row order."""
    arr = np.asarray(labels)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("labels must be a nonempty 1-D sequence")
    if not np.issubdtype(arr.dtype, np.integer):
        if not (np.asarray(arr) == np.floor(arr)).all():
            raise ValueError("labels must be integers")
        arr = arr.astype(np.int64)
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(str(int(v)) for v in arr) + "\n")


def read_labels(path) -> np.ndarray:
    with open(path, "r", encoding="utf-8") as f:
        lines = [line.strip() for line in f]
    values = []
    for lineno, line in enumerate(lines, start=1):
        if not line:
            continue
        try:
            values.append(int(line))
        except ValueError as exc:
            raise ValueError(f"{path}: line {lineno} is not an integer label: {line!r}") from exc
    if not values:
        raise ValueError(f"{path}: no labels found")
    return np.asarray(values, dtype=np.int64)


@dataclass(frozen=True)
class SyntheticSpec:
    """Geometry and sizes for a clustered Gaussian dataset.

    Cluster centers are uniform in [-center_scale, center_scale]^dim; base,
    query, and learning points are centers plus isotropic Gaussian noise of
    scale cluster_spread. Queries and learning points cycle through the
    clusters round-robin. n_learning defaults to a quarter of the base size
    (at least 2 points per cluster).
    """

    n_clusters: int
    points_per_cluster: int
    dim: int
    cluster_spread: float = 0.05
    center_scale: float = 1.0
    seed: int = 0
    n_queries: int = 100
    n_learning: int | None = None

    def __post_init__(self):
        if self.n_clusters < 2:
            raise ValueError("need at least 2 clusters")
        if self.points_per_cluster < 1:
            raise ValueError("need at least 1 point per cluster")
        if self.dim < 2:
            raise ValueError("dim must be at least 2")
        if not (self.cluster_spread > 0.0):
            raise ValueError("cluster_spread must be positive")
        if not (self.center_scale > 0.0):
            raise ValueError("center_scale must be positive")
        if not (0 <= self.seed < 2**64):
            raise ValueError("seed must fit in an unsigned 64-bit integer")
        if self.n_queries < 1:
            raise ValueError("need at least 1 query")
        if self.n_learning is None:
            derived = max(2 * self.n_clusters, self.n_clusters * self.points_per_cluster // 4)
            object.__setattr__(self, "n_learning", derived)
        elif self.n_learning < 1:
            raise ValueError("need at least 1 learning point")


@dataclass(frozen=True)
class SyntheticDataset:
    """Base/query/learning splits plus cluster labels and exact ground truth."""

    base: np.ndarray
    queries: np.ndarray
    learning: np.ndarray
    base_labels: np.ndarray
    query_labels: np.ndarray
    ground_truth: np.ndarray  # (n_queries, gt_depth) base row ids


def generate_synthetic(spec: SyntheticSpec, gt_depth: int = 100) -> SyntheticDataset:
    """Draw a clustered dataset with exact Euclidean ground truth.

    Every split draws from its own sub-stream of spec.seed, so e.g. the base
    set is reproducible independently of how many queries are requested.
    """
    if gt_depth < 1:
        raise ValueError("gt_depth must be at least 1")
    centers = np.random.default_rng(derive_seed(spec.seed, _CENTERS_STREAM)).uniform(
        -spec.center_scale, spec.center_scale, size=(spec.n_clusters, spec.dim)
    )
    total = spec.n_clusters * spec.points_per_cluster
    rng_base = np.random.default_rng(derive_seed(spec.seed, _BASE_STREAM))
    base_labels = np.repeat(np.arange(spec.n_clusters, dtype=np.int64), spec.points_per_cluster)
    base = centers[base_labels] + rng_base.normal(0.0, spec.cluster_spread, size=(total, spec.dim))
    rng_q = np.random.default_rng(derive_seed(spec.seed, _QUERIES_STREAM))
    query_labels = np.arange(spec.n_queries, dtype=np.int64) % spec.n_clusters
    queries = centers[query_labels] + rng_q.normal(
        0.0, spec.cluster_spread, size=(spec.n_queries, spec.dim)
    )
    rng_l = np.random.default_rng(derive_seed(spec.seed, _LEARNING_STREAM))
    learn_labels = np.arange(spec.n_learning, dtype=np.int64) % spec.n_clusters
    learning = centers[learn_labels] + rng_l.normal(
        0.0, spec.cluster_spread, size=(spec.n_learning, spec.dim)
    )
    base32 = base.astype(np.float32)
    queries32 = queries.astype(np.float32)
    gt = brute_force_gt(base32, queries32, min(gt_depth, total))
    return SyntheticDataset(
        base=base32,
        queries=queries32,
        learning=learning.astype(np.float32),
        base_labels=base_labels,
        query_labels=query_labels,
        ground_truth=gt,
    )
