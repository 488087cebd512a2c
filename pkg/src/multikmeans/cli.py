"""Command-line pipeline: gen, gt, train, index, query, eval.

Seed discipline: every stochastic stage draws from its own child stream of
the run seed (core.derive_seed): training split and the two sub-codebook
trainings use tags 1-3, the synthetic generator tags 10-13, and evaluation
query sampling tag 20. Identical configuration therefore reproduces
byte-identical reports; wall-clock timings go to the console only.

A `--config` file supplies defaults as `key = value` lines (keys are the
long option names); flags given on the command line win.
"""

from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

from . import __version__
from .core import FormatError, Metric, derive_seed
from .dataio import (
    SyntheticSpec,
    VectorReader,
    generate_synthetic,
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
    encode_many,
    load_quantizer,
    save_dual_codebook,
    train_dual_codebook,
)
from .evaluate import EvalReport, average_precision, brute_force_gt, label_relevance
from .index import build_index, load_index, save_index, search, search_ids
from .kmeans import TrainParams, save_codebook, train

__all__ = ["main", "build_parser", "ConfigError"]

_QUERY_SAMPLE_STREAM = 20
_EVAL_BLOCK = 256  # queries scored per search_ids call; bounds memory
_METRICS = {"l2": Metric.EUCLIDEAN, "cosine": Metric.COSINE}


class ConfigError(Exception):
    """Bad flag combination or config file; exits with status 2."""


def _ints_csv(text: str, name: str) -> list[int]:
    try:
        values = [int(tok) for tok in str(text).split(",") if tok.strip() != ""]
    except ValueError as exc:
        raise ConfigError(f"{name} must be a comma-separated list of integers, got {text!r}") from exc
    if not values:
        raise ConfigError(f"{name} must list at least one integer")
    return values


def _positive(value: int, name: str) -> int:
    if value < 1:
        raise ConfigError(f"{name} must be at least 1, got {value}")
    return value


def _seed_ok(value: int, name: str = "--seed") -> int:
    if not (0 <= value < 2**64):
        raise ConfigError(f"{name} must fit in an unsigned 64-bit integer, got {value}")
    return value


def _metric(args) -> Metric:
    return _METRICS[args.metric]


def _has_flag(argv: list[str], flag: str) -> bool:
    return any(tok == flag or tok.startswith(flag + "=") for tok in argv)


def _read_config_file(path: str) -> list[tuple[str, str]]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            lines = f.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    entries = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}: line {lineno} is not `key = value`: {line!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not key or not value:
            raise ConfigError(f"{path}: line {lineno} is not `key = value`: {line!r}")
        entries.append((key, value))
    return entries


def _merge_config(argv: list[str]) -> list[str]:
    """Append config-file entries as flags unless already given explicitly."""
    path = None
    for i, tok in enumerate(argv):
        if tok == "--config":
            if i + 1 >= len(argv):
                raise ConfigError("--config needs a file path")
            path = argv[i + 1]
            break
        if tok.startswith("--config="):
            path = tok.split("=", 1)[1]
            break
    if path is None:
        return argv
    merged = list(argv)
    for key, value in _read_config_file(path):
        flag = "--" + key.lower().replace("_", "-").lstrip("-")
        if flag == "--config" or _has_flag(argv, flag):
            continue
        merged.extend([flag, value])
    return merged


def _add_config_flag(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="file of `key = value` defaults; explicit flags win")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="multikmeans",
        description="Compact k-means hash codes for approximate nearest-neighbor search.",
        allow_abbrev=False,
    )
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", metavar="command")

    g = sub.add_parser("gen", help="generate a clustered synthetic dataset", allow_abbrev=False)
    g.add_argument("--out-dir", required=True, help="directory for the generated files")
    g.add_argument("--clusters", type=int, default=64)
    g.add_argument("--per-cluster", type=int, default=160, help="base points per cluster")
    g.add_argument("--dim", type=int, default=128)
    g.add_argument("--spread", type=float, default=0.05, help="within-cluster noise scale")
    g.add_argument("--center-scale", type=float, default=1.0)
    g.add_argument("--queries", type=int, default=100)
    g.add_argument("--learning", type=int, default=None, help="learning points (default: base/4)")
    g.add_argument("--gt-depth", type=int, default=100)
    g.add_argument("--seed", type=int, default=0)
    _add_config_flag(g)
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("gt", help="compute exact ground truth for a query set", allow_abbrev=False)
    t.add_argument("--base", required=True)
    t.add_argument("--queries", required=True)
    t.add_argument("--out", required=True, help="output id file (.ivecs)")
    t.add_argument("--depth", type=int, default=100, help="neighbors per query")
    t.add_argument("--metric", choices=sorted(_METRICS), default="l2")
    _add_config_flag(t)
    t.set_defaults(func=cmd_gt)

    tr = sub.add_parser("train", help="train a codebook on a learning set", allow_abbrev=False)
    tr.add_argument("--learning", required=True, help="learning vectors (.fvecs/.bvecs)")
    tr.add_argument("--variant", required=True, choices=[v.value for v in Variant])
    tr.add_argument("--k", type=int, required=True, help="total code length in bits")
    tr.add_argument("--max-iters", type=int, default=100)
    tr.add_argument("--tol", type=float, default=1e-4, help="relative objective improvement cutoff")
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--out", required=True, help="output codebook path")
    _add_config_flag(tr)
    tr.set_defaults(func=cmd_train)

    ix = sub.add_parser("index", help="encode base vectors into a search index", allow_abbrev=False)
    ix.add_argument("--codebook", required=True)
    ix.add_argument("--base", required=True, help="base vectors (.fvecs/.bvecs)")
    ix.add_argument("--out", required=True, help="output index path")
    ix.add_argument("--variant", required=True, choices=[v.value for v in Variant])
    ix.add_argument("--mean", choices=[m.value for m in MeanKind], default=None,
                    help="threshold mean for t/t2 (default arith)")
    ix.add_argument("--n", type=int, default=None,
                    help="total bits set per code for n/n2 (n2 splits it across halves)")
    ix.add_argument("--batch-size", type=int, default=65536)
    _add_config_flag(ix)
    ix.set_defaults(func=cmd_index)

    q = sub.add_parser("query", help="search one query against an index", allow_abbrev=False)
    q.add_argument("--index", required=True)
    q.add_argument("--base", required=True, help="base vectors the index was built from")
    q.add_argument("--query-file", required=True)
    q.add_argument("--query-row", type=int, default=0)
    q.add_argument("--shortlist", type=int, default=10000)
    q.add_argument("--top", type=int, default=10)
    q.add_argument("--metric", choices=sorted(_METRICS), default="l2")
    _add_config_flag(q)
    q.set_defaults(func=cmd_query)

    e = sub.add_parser("eval", help="score an index against ground truth or labels", allow_abbrev=False)
    e.add_argument("--index", required=True)
    e.add_argument("--base", required=True)
    e.add_argument("--queries", required=True)
    e.add_argument("--mode", choices=["recall", "map"], default="recall")
    e.add_argument("--gt", help="exact neighbor ids (.ivecs), required for recall mode")
    e.add_argument("--base-labels", help="class labels for base rows, required for map mode")
    e.add_argument("--query-labels", help="class labels for query rows, required for map mode")
    e.add_argument("--recall-at", default="1,10,100,1000,10000",
                   help="comma-separated recall depths")
    e.add_argument("--map-depth", type=int, default=1000, help="ranked depth scored in map mode")
    e.add_argument("--shortlist", type=int, default=10000)
    e.add_argument("--metric", choices=sorted(_METRICS), default="l2")
    e.add_argument("--seeds", default="0", help="comma-separated run seeds for query sampling")
    e.add_argument("--query-sample", type=int, default=None,
                   help="queries drawn per run (map mode samples per class); default all")
    e.add_argument("--threads", type=int, default=1)
    e.add_argument("--out", default=None, help="write the JSON report here instead of stdout")
    _add_config_flag(e)
    e.set_defaults(func=cmd_eval)

    return p


def cmd_gen(args) -> int:
    _positive(args.gt_depth, "--gt-depth")
    _seed_ok(args.seed)
    try:
        spec = SyntheticSpec(
            n_clusters=args.clusters,
            points_per_cluster=args.per_cluster,
            dim=args.dim,
            cluster_spread=args.spread,
            center_scale=args.center_scale,
            seed=args.seed,
            n_queries=args.queries,
            n_learning=args.learning,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    t0 = time.perf_counter()
    ds = generate_synthetic(spec, gt_depth=args.gt_depth)
    os.makedirs(args.out_dir, exist_ok=True)
    paths = {
        "base": os.path.join(args.out_dir, "base.fvecs"),
        "queries": os.path.join(args.out_dir, "queries.fvecs"),
        "learning": os.path.join(args.out_dir, "learning.fvecs"),
        "gt": os.path.join(args.out_dir, "groundtruth.ivecs"),
        "base_labels": os.path.join(args.out_dir, "base_labels.txt"),
        "query_labels": os.path.join(args.out_dir, "query_labels.txt"),
    }
    write_vectors(paths["base"], ds.base)
    write_vectors(paths["queries"], ds.queries)
    write_vectors(paths["learning"], ds.learning)
    write_vectors(paths["gt"], ds.ground_truth.astype(np.int32), element_kind="int32")
    write_labels(paths["base_labels"], ds.base_labels)
    write_labels(paths["query_labels"], ds.query_labels)
    dt = time.perf_counter() - t0
    print(
        f"generated {len(ds.base)} base / {len(ds.queries)} query / {len(ds.learning)} "
        f"learning vectors (dim {spec.dim}, {spec.n_clusters} clusters) in {dt:.2f}s"
    )
    for name in ("base", "queries", "learning", "gt", "base_labels", "query_labels"):
        print(f"  {name}: {paths[name]}")
    return 0


def cmd_gt(args) -> int:
    _positive(args.depth, "--depth")
    base = read_vectors(args.base)
    queries = read_vectors(args.queries)
    if args.depth > len(base):
        raise ConfigError(f"--depth {args.depth} exceeds base size {len(base)}")
    t0 = time.perf_counter()
    gt = brute_force_gt(base, queries, args.depth, metric=_metric(args))
    write_vectors(args.out, gt.astype(np.int32), element_kind="int32")
    dt = time.perf_counter() - t0
    print(
        f"wrote exact top-{args.depth} ids for {len(queries)} queries over "
        f"{len(base)} base vectors to {args.out} in {dt:.2f}s"
    )
    return 0


def cmd_train(args) -> int:
    variant = Variant(args.variant)
    if args.k < 2:
        raise ConfigError(f"--k must be at least 2, got {args.k}")
    _positive(args.max_iters, "--max-iters")
    if args.tol < 0:
        raise ConfigError(f"--tol must be non-negative, got {args.tol}")
    _seed_ok(args.seed)
    dual = variant in (Variant.T2, Variant.N2)
    if dual and args.k % 2:
        raise ConfigError(f"variant {variant.value} needs an even --k, got {args.k}")
    data = read_vectors(args.learning)
    params = TrainParams(max_iters=args.max_iters, rel_tol=args.tol, seed=args.seed)
    t0 = time.perf_counter()
    if dual:
        dcb = train_dual_codebook(data, args.k // 2, params)
        save_dual_codebook(dcb, args.out)
        dt = time.perf_counter() - t0
        for name, cb in (("first", dcb.first), ("second", dcb.second)):
            m = cb.train_meta
            print(
                f"{name} codebook: k={cb.k} dim={cb.dim} iterations={m.iterations} "
                f"objective={m.objective:.6f}"
            )
        print(f"trained dual codebook ({args.k} bits total) in {dt:.2f}s -> {args.out}")
    else:
        cb = train(data, args.k, params)
        save_codebook(cb, args.out)
        dt = time.perf_counter() - t0
        m = cb.train_meta
        print(
            f"trained codebook: k={cb.k} dim={cb.dim} iterations={m.iterations} "
            f"objective={m.objective:.6f} in {dt:.2f}s -> {args.out}"
        )
    return 0


def _encoder_spec(args, quantizer) -> EncoderSpec:
    """Build the EncoderSpec for the index command, checking flag pairings."""
    variant = Variant(args.variant)
    dual = variant in (Variant.T2, Variant.N2)
    if dual and not isinstance(quantizer, DualCodebook):
        raise ConfigError(f"variant {variant.value} needs a dual codebook file")
    if not dual and isinstance(quantizer, DualCodebook):
        raise ConfigError(f"variant {variant.value} needs a single codebook file")
    if variant in (Variant.T, Variant.T2):
        if args.n is not None:
            raise ConfigError(f"--n does not apply to variant {variant.value}")
        mean = MeanKind(args.mean) if args.mean else MeanKind.ARITHMETIC
        return EncoderSpec(variant, mean_kind=mean)
    if args.mean is not None:
        raise ConfigError(f"--mean does not apply to variant {variant.value}")
    if args.n is None:
        raise ConfigError(f"variant {variant.value} needs --n")
    n = args.n
    if variant is Variant.N2:
        if n % 2:
            raise ConfigError(f"variant n2 splits --n across two codebooks; need even --n, got {n}")
        n //= 2
    if n < 1:
        raise ConfigError(f"--n too small: each codebook must set at least 1 bit")
    k = quantizer.k
    if n > k:
        raise ConfigError(f"--n sets {n} bits per codebook but codebooks have k={k} centroids")
    return EncoderSpec(variant, n_nearest=n)


def cmd_index(args) -> int:
    _positive(args.batch_size, "--batch-size")
    quantizer = load_quantizer(args.codebook)
    spec = _encoder_spec(args, quantizer)
    t0 = time.perf_counter()
    with VectorReader(args.base) as reader:
        if reader.dim != quantizer.dim:
            raise ValueError(
                f"base file dimension {reader.dim} does not match codebook dimension {quantizer.dim}"
            )
        parts = []
        for start in range(0, reader.count, args.batch_size):
            block = reader.read(start, min(args.batch_size, reader.count - start))
            parts.append(encode_many(block, quantizer, spec))
        codes = np.vstack(parts)
        ids = np.arange(reader.count, dtype=np.int64)
        idx = build_index(codes, ids, spec, quantizer)
    save_index(idx, args.out)
    dt = time.perf_counter() - t0
    rate = idx.size / dt if dt > 0 else float("inf")
    print(
        f"indexed {idx.size} vectors into {idx.code_length}-bit codes "
        f"in {dt:.2f}s ({rate:.0f} vec/s) -> {args.out}"
    )
    return 0


def cmd_query(args) -> int:
    _positive(args.top, "--top")
    _positive(args.shortlist, "--shortlist")
    idx = load_index(args.index)
    with VectorReader(args.base) as reader:
        if reader.count < idx.size:
            raise ValueError(f"base file holds {reader.count} vectors but index expects {idx.size}")
        qvec = read_vectors(args.query_file, start=args.query_row, count=1)[0]
        shortlist_size = min(args.shortlist, idx.size)
        if shortlist_size < args.shortlist:
            print(f"note: shortlist clamped to index size {idx.size}", file=sys.stderr)
        top = min(args.top, shortlist_size)
        if top < args.top:
            print(f"note: top clamped to shortlist size {shortlist_size}", file=sys.stderr)
        result = search(idx, reader, qvec, shortlist_size, top, metric=_metric(args))
    label = "distance" if result.metric is Metric.EUCLIDEAN else "similarity"
    print(f"rank\tid\t{label}")
    for rank, (vid, score) in enumerate(result.ranked, start=1):
        print(f"{rank}\t{vid}\t{score:.6f}")
    return 0


def _sample_rows(n: int, rng: np.random.Generator, sample: int | None, labels=None) -> np.ndarray:
    """Row selection for one evaluation run; stratified when labels are given."""
    if sample is None:
        return np.arange(n, dtype=np.int64)
    if sample > n:
        raise ConfigError(f"--query-sample {sample} exceeds query count {n}")
    if labels is None:
        return np.sort(rng.choice(n, size=sample, replace=False))
    classes = np.unique(labels)
    per, extra = divmod(sample, classes.shape[0])
    picks = []
    for i, cls in enumerate(classes):
        want = per + (1 if i < extra else 0)
        if want == 0:
            continue
        rows = np.flatnonzero(labels == cls)
        if want > rows.shape[0]:
            raise ConfigError(
                f"--query-sample needs {want} queries of class {cls}, file has {rows.shape[0]}"
            )
        picks.append(rng.choice(rows, size=want, replace=False))
    return np.sort(np.concatenate(picks))


def _recall_run(idx, reader, queries, gt, sel, recall_rs, shortlist_size, metric, threads):
    """Hit counts per recall depth for one run, accumulated block-wise."""
    top = max(recall_rs)
    hits = {r: 0 for r in recall_rs}
    for s in range(0, sel.shape[0], _EVAL_BLOCK):
        rows = sel[s : s + _EVAL_BLOCK]
        ids = search_ids(idx, reader, queries[rows], shortlist_size, top, metric, threads)
        truth = gt[rows, 0][:, None]
        for r in recall_rs:
            hits[r] += int((ids[:, :r] == truth).any(axis=1).sum())
    return hits


def _map_run(idx, reader, queries, base_labels, query_labels, sel, depth, shortlist_size, metric, threads):
    """Per-query average precisions for one run."""
    aps = []
    for s in range(0, sel.shape[0], _EVAL_BLOCK):
        rows = sel[s : s + _EVAL_BLOCK]
        ids = search_ids(idx, reader, queries[rows], shortlist_size, depth, metric, threads)
        for row, ranked in zip(rows, ids):
            rel = label_relevance(query_labels[row], ranked, base_labels)
            aps.append(average_precision(rel, int(rel.sum())))
    return aps


def cmd_eval(args) -> int:
    seeds = [_seed_ok(s, "--seeds") for s in _ints_csv(args.seeds, "--seeds")]
    _positive(args.shortlist, "--shortlist")
    _positive(args.threads, "--threads")
    if args.query_sample is not None:
        _positive(args.query_sample, "--query-sample")
    metric = _metric(args)
    idx = load_index(args.index)
    shortlist_size = min(args.shortlist, idx.size)
    if shortlist_size < args.shortlist:
        print(f"note: shortlist clamped to index size {idx.size}", file=sys.stderr)

    with VectorReader(args.base) as reader:
        if reader.dim != idx.quantizer.dim:
            raise ValueError(
                f"base file dimension {reader.dim} does not match index dimension {idx.quantizer.dim}"
            )
        queries = read_vectors(args.queries)
        config = {
            "command": "eval",
            "mode": args.mode,
            "index": args.index,
            "base": args.base,
            "queries": args.queries,
            "metric": args.metric,
            "variant": idx.spec.variant.value,
            "mean": idx.spec.mean_kind.value,
            "n_nearest": idx.spec.n_nearest,
            "code_length": idx.code_length,
            "index_size": idx.size,
            "shortlist_requested": args.shortlist,
            "shortlist": shortlist_size,
            "seeds": seeds,
            "query_sample": args.query_sample,
            "threads": args.threads,
        }
        t0 = time.perf_counter()
        if args.mode == "recall":
            if not args.gt:
                raise ConfigError("recall mode needs --gt")
            gt = read_vectors(args.gt)
            if not np.issubdtype(gt.dtype, np.integer):
                raise ValueError(f"{args.gt} does not hold integer neighbor ids")
            if gt.shape[0] != queries.shape[0]:
                raise ValueError(f"{gt.shape[0]} ground-truth rows for {queries.shape[0]} queries")
            requested_rs = sorted(set(_ints_csv(args.recall_at, "--recall-at")))
            if any(r < 1 for r in requested_rs):
                raise ConfigError("--recall-at depths must be at least 1")
            recall_rs = [r for r in requested_rs if r <= shortlist_size]
            if not recall_rs:
                raise ConfigError(
                    f"no --recall-at depth fits the shortlist size {shortlist_size}"
                )
            if len(recall_rs) < len(requested_rs):
                dropped = [r for r in requested_rs if r > shortlist_size]
                print(
                    f"note: recall depths {dropped} exceed the shortlist ({shortlist_size}); skipped",
                    file=sys.stderr,
                )
            config["gt"] = args.gt
            config["recall_at_requested"] = requested_rs
            config["recall_at"] = recall_rs
            per_run = []
            series = {r: [] for r in recall_rs}
            for seed in seeds:
                rng = np.random.default_rng(derive_seed(seed, _QUERY_SAMPLE_STREAM))
                sel = _sample_rows(queries.shape[0], rng, args.query_sample)
                hits = _recall_run(
                    idx, reader, queries, gt, sel, recall_rs, shortlist_size, metric, args.threads
                )
                rates = {r: hits[r] / sel.shape[0] for r in recall_rs}
                for r in recall_rs:
                    series[r].append(rates[r])
                per_run.append(
                    {
                        "seed": seed,
                        "query_count": int(sel.shape[0]),
                        "recall_at": {str(r): rates[r] for r in recall_rs},
                    }
                )
            report = EvalReport(
                mode="recall",
                config=config,
                runs_averaged=len(seeds),
                recall_at={r: float(np.mean(series[r])) for r in recall_rs},
                recall_at_std={r: float(np.std(series[r])) for r in recall_rs},
                per_run=per_run,
            )
        else:
            if not args.base_labels or not args.query_labels:
                raise ConfigError("map mode needs --base-labels and --query-labels")
            base_labels = read_labels(args.base_labels)
            query_labels = read_labels(args.query_labels)
            if base_labels.shape[0] != reader.count:
                raise ValueError(
                    f"{base_labels.shape[0]} base labels for {reader.count} base vectors"
                )
            if query_labels.shape[0] != queries.shape[0]:
                raise ValueError(
                    f"{query_labels.shape[0]} query labels for {queries.shape[0]} queries"
                )
            _positive(args.map_depth, "--map-depth")
            depth = min(args.map_depth, shortlist_size)
            if depth < args.map_depth:
                print(f"note: map depth clamped to shortlist size {shortlist_size}", file=sys.stderr)
            config["base_labels"] = args.base_labels
            config["query_labels"] = args.query_labels
            config["map_depth_requested"] = args.map_depth
            config["map_depth"] = depth
            per_run = []
            values = []
            for seed in seeds:
                rng = np.random.default_rng(derive_seed(seed, _QUERY_SAMPLE_STREAM))
                sel = _sample_rows(queries.shape[0], rng, args.query_sample, labels=query_labels)
                aps = _map_run(
                    idx, reader, queries, base_labels, query_labels, sel, depth,
                    shortlist_size, metric, args.threads,
                )
                run_map = float(np.mean(aps))
                values.append(run_map)
                per_run.append(
                    {"seed": seed, "query_count": int(sel.shape[0]), "map": run_map}
                )
            report = EvalReport(
                mode="map",
                config=config,
                runs_averaged=len(seeds),
                map_value=float(np.mean(values)),
                map_std=float(np.std(values)),
                per_run=per_run,
            )
        dt = time.perf_counter() - t0

    _print_report(report)
    print(f"evaluated {len(seeds)} run(s) in {dt:.2f}s", file=sys.stderr)
    text = report.to_json()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            f.write(text)
        print(f"report -> {args.out}", file=sys.stderr)
    else:
        print(text, end="")
    return 0


def _print_report(report: EvalReport) -> None:
    if report.mode == "recall":
        rs = sorted(report.recall_at)
        header = "".join(f"{'R@' + str(r):>12}" for r in rs)
        means = "".join(f"{report.recall_at[r]:>12.4f}" for r in rs)
        print(header, file=sys.stderr)
        print(means, file=sys.stderr)
        if report.runs_averaged > 1:
            stds = "".join(f"{report.recall_at_std[r]:>12.4f}" for r in rs)
            print(stds + "  (std)", file=sys.stderr)
    else:
        line = f"MAP {report.map_value:.4f}"
        if report.runs_averaged > 1:
            line += f" +/- {report.map_std:.4f}"
        print(line + f" over {report.runs_averaged} run(s)", file=sys.stderr)


def main(argv=None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    parser = build_parser()
    try:
        merged = _merge_config(list(argv))
        args = parser.parse_args(merged)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    if getattr(args, "command", None) is None or not hasattr(args, "func"):
        parser.print_help()
        return 2
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FormatError, OSError, ValueError, LookupError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
