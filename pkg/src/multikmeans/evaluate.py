"""Brute-force ground truth and retrieval metrics (recall@R, MAP).

Every exact ranking here breaks ties by ascending id, matching the search
path, so metric computations never depend on sort accidents.
"""

from __future__ import annotations

import json
import warnings
from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np

from .core import Metric, as_matrix, pairwise_sq_distances

__all__ = [
    "brute_force_gt",
    "recall_at_r",
    "average_precision",
    "mean_average_precision",
    "label_relevance",
    "EvalReport",
]


def brute_force_gt(base, queries, k: int, metric: Metric = Metric.EUCLIDEAN) -> np.ndarray:
    """Exact k-nearest ids (base row positions) for every query, shape (Q, k).

    Euclidean ranks ascending distance, cosine descending similarity; equal
    scores rank the lower id first.
    """
    B = as_matrix(base, "base")
    Q = as_matrix(queries, "queries")
    if B.shape[1] != Q.shape[1]:
        raise ValueError(f"dimension mismatch: base {B.shape[1]} vs queries {Q.shape[1]}")
    if not (1 <= k <= B.shape[0]):
        raise ValueError(f"k={k} outside [1, {B.shape[0]}]")
    metric = Metric(metric)
    B64 = np.asarray(B, dtype=np.float64)
    if metric is Metric.COSINE:
        norms = np.linalg.norm(B64, axis=1)
        if (norms == 0.0).any():
            raise ValueError("cosine ground truth is undefined for zero-norm base vectors")
    out = np.empty((Q.shape[0], k), dtype=np.int64)
    chunk = max(1, (1 << 23) // B.shape[0])
    for s in range(0, Q.shape[0], chunk):
        if metric is Metric.EUCLIDEAN:
            scores = pairwise_sq_distances(Q[s : s + chunk], B64)
        else:
            Q64 = np.asarray(Q[s : s + chunk], dtype=np.float64)
            qn = np.linalg.norm(Q64, axis=1)
            if (qn == 0.0).any():
                raise ValueError("cosine ground truth is undefined for zero-norm queries")
            scores = -(Q64 @ B64.T) / (qn[:, None] * norms[None, :])
        # stable argsort on (possibly negated) scores: ties keep ascending id
        out[s : s + chunk] = np.argsort(scores, axis=1, kind="stable")[:, :k]
    return out


def _ranked_ids(result) -> np.ndarray:
    ranked = getattr(result, "ranked", None)
    if ranked is not None:
        return np.asarray([i for i, _ in ranked], dtype=np.int64)
    return np.asarray(result, dtype=np.int64)


def recall_at_r(results, ground_truth, r: int) -> float:
    """Fraction of queries whose true first neighbor shows up in the top r."""
    if r < 1:
        raise ValueError("r must be at least 1")
    gt = np.asarray(ground_truth, dtype=np.int64)
    if gt.ndim == 1:
        gt = gt[:, None]
    if gt.ndim != 2 or gt.shape[0] == 0 or gt.shape[1] == 0:
        raise ValueError(f"ground truth must be a nonempty (Q, k) array, got {gt.shape}")
    results = list(results)
    if len(results) != gt.shape[0]:
        raise ValueError(f"{len(results)} results for {gt.shape[0]} ground-truth rows")
    hits = 0
    for res, row in zip(results, gt):
        ids = _ranked_ids(res)
        if ids.shape[0] < r:
            raise ValueError(f"result holds {ids.shape[0]} ids, cannot score recall@{r}")
        hits += int((ids[:r] == row[0]).any())
    return hits / gt.shape[0]


def average_precision(relevance, total_relevant: int) -> float:
    """Mean precision over the relevant ranks, normalized by total_relevant.

    A query with no relevant items scores 0 (with a warning), so aggregate
    means stay defined.
    """
    rel = np.asarray(relevance)
    if rel.ndim != 1 or rel.size == 0:
        raise ValueError("relevance must be a nonempty 1-D sequence")
    if not np.isin(rel, (0, 1)).all():
        raise ValueError("relevance flags must be 0 or 1")
    if total_relevant < 0:
        raise ValueError("total_relevant must be non-negative")
    found = int((rel == 1).sum())
    if found > total_relevant:
        raise ValueError(f"{found} relevant results exceed total_relevant={total_relevant}")
    if total_relevant == 0:
        warnings.warn("query has no relevant items; average precision defaults to 0", stacklevel=2)
        return 0.0
    ranks = np.flatnonzero(rel == 1)
    if ranks.size == 0:
        return 0.0
    precisions = (np.arange(ranks.size) + 1.0) / (ranks + 1.0)
    return float(precisions.sum() / total_relevant)


def mean_average_precision(relevances, totals=None) -> float:
    """Mean of per-query average precision."""
    rels = list(relevances)
    if not rels:
        raise ValueError("need at least one query")
    if totals is None:
        totals = [int(np.sum(np.asarray(r))) for r in rels]
    else:
        totals = list(totals)
        if len(totals) != len(rels):
            raise ValueError(f"{len(totals)} totals for {len(rels)} relevance lists")
    return float(np.mean([average_precision(r, t) for r, t in zip(rels, totals)]))


def label_relevance(query_label, result_ids, labels) -> np.ndarray:
    """Binary flags: 1 where a result id carries the query's label."""
    ids = np.asarray(result_ids, dtype=np.int64)
    if ids.ndim != 1:
        raise ValueError("result_ids must be 1-D")
    if isinstance(labels, Mapping):
        flags = np.empty(ids.shape[0], dtype=np.int8)
        for idx, i in enumerate(ids):
            try:
                flags[idx] = 1 if labels[int(i)] == query_label else 0
            except KeyError as exc:
                raise LookupError(f"no label for id {int(i)}") from exc
        return flags
    lab = np.asarray(labels)
    if lab.ndim != 1:
        raise ValueError("labels must be a 1-D array or a mapping")
    if ids.size and (ids.min() < 0 or ids.max() >= lab.shape[0]):
        bad = ids[(ids < 0) | (ids >= lab.shape[0])][0]
        raise LookupError(f"no label for id {int(bad)}")
    return (lab[ids] == query_label).astype(np.int8)


@dataclass
class EvalReport:
    """Aggregated evaluation output plus the configuration that produced it."""

    mode: str
    config: dict
    runs_averaged: int
    recall_at: dict | None = None  # R -> mean rate over runs
    recall_at_std: dict | None = None
    map_value: float | None = None
    map_std: float | None = None
    per_run: list = field(default_factory=list)

    def __post_init__(self):
        if self.mode not in ("recall", "map"):
            raise ValueError(f"unknown eval mode {self.mode!r}")
        if self.runs_averaged < 1:
            raise ValueError("runs_averaged must be at least 1")
        if self.recall_at:
            rs = sorted(self.recall_at)
            vals = [self.recall_at[r] for r in rs]
            if any(b < a for a, b in zip(vals, vals[1:])):
                raise ValueError("recall@R must be non-decreasing in R")

    def to_json(self) -> str:
        """Deterministic JSON: identical reports serialize to identical bytes."""
        payload = {
            "mode": self.mode,
            "config": self.config,
            "runs_averaged": self.runs_averaged,
            "recall_at": None if self.recall_at is None else {str(r): v for r, v in self.recall_at.items()},
            "recall_at_std": None
            if self.recall_at_std is None
            else {str(r): v for r, v in self.recall_at_std.items()},
            "map_value": self.map_value,
            "map_std": self.map_std,
            "per_run": self.per_run,
        }
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"
