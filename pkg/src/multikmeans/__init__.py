"""Compact multi-assignment k-means hash codes for approximate NN search.

Train small k-means codebooks, give every centroid one bit of a hash
code, set the bits of all sufficiently-near centroids, and search by
Hamming shortlist plus exact re-rank. See the README for the pipeline.
"""

__version__ = "0.1.0"

from .core import (
    FormatError,
    HashCode,
    Metric,
    cosine_similarity,
    derive_seed,
    euclidean_distance,
    hamming_distance,
    pack_bits,
    unpack_bits,
)
from .dataio import (
    SyntheticDataset,
    SyntheticSpec,
    VectorFile,
    VectorReader,
    generate_synthetic,
    inspect_vectors,
    read_labels,
    read_vectors,
    write_labels,
    write_vectors,
)
from .encoder import (
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
    save_dual_codebook,
    split_training,
    threshold_delta,
    train_dual_codebook,
)
from .evaluate import (
    EvalReport,
    average_precision,
    brute_force_gt,
    label_relevance,
    mean_average_precision,
    recall_at_r,
)
from .index import (
    SearchIndex,
    SearchResult,
    build_index,
    load_index,
    save_index,
    search,
    search_ids,
    search_many,
    shortlist,
)
from .kmeans import (
    Codebook,
    TrainMeta,
    TrainParams,
    distances_to_centroids,
    kmeanspp_seed,
    load_codebook,
    objective,
    save_codebook,
    train,
)

__all__ = [
    "__version__",
    "FormatError",
    "HashCode",
    "Metric",
    "cosine_similarity",
    "derive_seed",
    "euclidean_distance",
    "hamming_distance",
    "pack_bits",
    "unpack_bits",
    "Codebook",
    "TrainMeta",
    "TrainParams",
    "distances_to_centroids",
    "kmeanspp_seed",
    "load_codebook",
    "objective",
    "save_codebook",
    "train",
    "DualCodebook",
    "EncoderSpec",
    "MeanKind",
    "Variant",
    "encode",
    "encode_dual",
    "encode_many",
    "encode_n",
    "encode_t",
    "load_dual_codebook",
    "load_quantizer",
    "save_dual_codebook",
    "split_training",
    "threshold_delta",
    "train_dual_codebook",
    "SearchIndex",
    "SearchResult",
    "build_index",
    "load_index",
    "save_index",
    "search",
    "search_ids",
    "search_many",
    "shortlist",
    "EvalReport",
    "average_precision",
    "brute_force_gt",
    "label_relevance",
    "mean_average_precision",
    "recall_at_r",
    "SyntheticDataset",
    "SyntheticSpec",
    "VectorFile",
    "VectorReader",
    "generate_synthetic",
    "inspect_vectors",
    "read_labels",
    "read_vectors",
    "write_labels",
    "write_vectors",
]
