"""Recall@N under geographic ground truth, and the retrieval latency benchmark."""

from __future__ import annotations

import contextlib
import json
import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .descriptors import BinaryCode, l2_normalize, sign_hash_rows
from .geo import PlaceRecord
from .index import build_binary_index, build_float_store, hamming_topk, l2_topk
from .pipeline import rerank

GT_MODES = ("geo", "geo-angle", "frame")


@dataclass(frozen=True)
class GroundTruthSpec:
    mode: str = "geo"
    dist_m: float = 25.0
    angle_deg: float = 40.0
    frame_tolerance: int = 10

    def __post_init__(self):
        if self.mode not in GT_MODES:
            raise ValueError(f"unknown ground-truth mode {self.mode!r}; expected {GT_MODES}")
        if self.dist_m <= 0 or self.angle_deg <= 0 or self.frame_tolerance < 0:
            raise ValueError("ground-truth thresholds must be positive")


def angle_diff(a: float, b: float) -> float:
    """Shortest angular distance in degrees, in [0, 180]."""
    d = abs(a - b) % 360.0
    return min(d, 360.0 - d)


def _require(r: PlaceRecord, fields: Sequence[str], mode: str) -> None:
    for f in fields:
        v = getattr(r, f)
        if v is None or (isinstance(v, float) and math.isnan(v)):
            raise ValueError(f"record {r.id} lacks '{f}' required by ground-truth mode {mode}")


def is_match(query: PlaceRecord, db: PlaceRecord, gt: GroundTruthSpec = GroundTruthSpec()) -> bool:
    if gt.mode == "frame":
        _require(query, ["frame"], gt.mode)
        _require(db, ["frame"], gt.mode)
        return abs(query.frame - db.frame) <= gt.frame_tolerance
    need = ["east", "north"] + (["heading"] if gt.mode == "geo-angle" else [])
    _require(query, need, gt.mode)
    _require(db, need, gt.mode)
    if math.hypot(query.east - db.east, query.north - db.north) > gt.dist_m:
        return False
    if gt.mode == "geo-angle":
        return angle_diff(query.heading, db.heading) <= gt.angle_deg
    return True


@dataclass
class EvalResult:
    recalls: dict[int, float]
    n_queries: int
    first_correct: list[int | None]  # 1-based rank of the first match per query

    def to_records(self) -> list[dict]:
        return [{"n": n, "recall": r, "queries": self.n_queries}
                for n, r in sorted(self.recalls.items())]

    def table(self) -> str:
        head = " ".join(f"R@{n:<6}" for n in sorted(self.recalls))
        vals = " ".join(f"{100 * self.recalls[n]:<8.2f}" for n in sorted(self.recalls))
        return f"{head}\n{vals}\n({self.n_queries} queries)"


def recall_at_n(results: Sequence[Sequence], queries: Sequence[PlaceRecord],
                database: dict | Sequence[PlaceRecord], gt: GroundTruthSpec = GroundTruthSpec(),
                ns: Sequence[int] = (1, 5, 10, 100), exclude_no_positive: bool = False
                ) -> EvalResult:
    """Fraction of queries with at least one ground-truth match in their top N.

    ``results[i]`` is the ranked id list for ``queries[i]``. By default queries
    with no valid positive anywhere in the database still count in the
    denominator; ``exclude_no_positive`` drops them.
    """
    if len(queries) == 0:
        raise ValueError("no queries to evaluate")
    if len(results) != len(queries):
        raise ValueError(f"{len(results)} result lists for {len(queries)} queries")
    db = database if isinstance(database, dict) else {r.id: r for r in database}
    ns = sorted(set(int(n) for n in ns))
    first = []
    keep = []
    for q, ranked in zip(queries, results):
        rank = next((i + 1 for i, rid in enumerate(ranked) if is_match(q, db[rid], gt)), None)
        first.append(rank)
        if exclude_no_positive:
            keep.append(any(is_match(q, r, gt) for r in db.values()))
        else:
            keep.append(True)
    counted = [f for f, k in zip(first, keep) if k]
    if not counted:
        raise ValueError("no query has a valid positive")
    recalls = {n: sum(1 for f in counted if f is not None and f <= n) / len(counted) for n in ns}
    return EvalResult(recalls, len(counted), first)


# latency


@dataclass
class LatencyRow:
    method: str
    distance: str
    dims: str
    initial_ms: float
    rerank_ms: float

    @property
    def total_ms(self) -> float:
        return self.initial_ms + self.rerank_ms

    def to_dict(self) -> dict:
        return {"method": self.method, "distance": self.distance, "dims": self.dims,
                "initial_ms": self.initial_ms, "rerank_ms": self.rerank_ms,
                "total_ms": self.total_ms}


@dataclass
class LatencyReport:
    database_size: int
    rows: list[LatencyRow] = field(default_factory=list)

    def row(self, method: str) -> LatencyRow:
        for r in self.rows:
            if r.method == method:
                return r
        raise KeyError(method)

    def table(self) -> str:
        lines = [f"database size: {self.database_size}",
                 f"{'method':<22}{'distance':<12}{'initial ms':>11}{'re-rank ms':>11}{'total ms':>10}"]
        for r in self.rows:
            rr = "/" if r.rerank_ms == 0 else f"{r.rerank_ms:.3f}"
            lines.append(f"{r.method:<22}{r.distance:<12}{r.initial_ms:>11.3f}{rr:>11}"
                         f"{r.total_ms:>10.3f}")
        return "\n".join(lines)

    def to_jsonl(self) -> str:
        return "\n".join(json.dumps({"database_size": self.database_size, **r.to_dict()})
                         for r in self.rows)


def median_of_means(samples: Sequence[float], groups: int = 10) -> float:
    chunks = np.array_split(np.asarray(samples, dtype=np.float64), min(groups, len(samples)))
    return float(np.median([c.mean() for c in chunks]))


def _time_queries(fn, queries, repeats: int, warmup: int) -> list[float]:
    for i in range(warmup):
        fn(queries[i % len(queries)])
    out = []
    for i in range(repeats):
        q = queries[i % len(queries)]
        t0 = time.perf_counter_ns()
        fn(q)
        out.append((time.perf_counter_ns() - t0) / 1e6)
    return out


def _time_two_stage(bidx, store, qb, qf, k, repeats, warmup):
    initial, rer = [], []
    for i in range(warmup + repeats):
        j = i % len(qb)
        t0 = time.perf_counter_ns()
        cands = hamming_topk(bidx, qb[j], k)
        t1 = time.perf_counter_ns()
        rerank(cands, qf[j], store)
        t2 = time.perf_counter_ns()
        if i >= warmup:
            initial.append((t1 - t0) / 1e6)
            rer.append((t2 - t1) / 1e6)
    return initial, rer


def latency_bench(n_db: int = 10_000, binary_dim: int = 512,
                  float_dims: Sequence[int] = (4096, 2048, 512), rerank_dim: int = 2048,
                  k: int = 100, n_queries: int = 20, repeats: int = 100, warmup: int = 10,
                  seed: int = 0, single_thread: bool = True) -> LatencyReport:
    """Per-query latency of one-stage float L2, binary Hamming, and Hamming + re-rank.

    Timings are medians of per-group means over ``repeats`` timed queries after
    ``warmup`` untimed ones.
    """
    if n_db < 1:
        raise ValueError("latency benchmark needs a non-empty database")
    with contextlib.ExitStack() as stack:
        if single_thread:
            from threadpoolctl import threadpool_limits
            stack.enter_context(threadpool_limits(limits=1))
        rng = np.random.default_rng(seed)
        ids = np.arange(n_db)
        report = LatencyReport(n_db)
        for dim in float_dims:
            x = l2_normalize(rng.standard_normal((n_db + n_queries, dim), dtype=np.float32))
            store = build_float_store(x[:n_db], ids)
            qs = list(x[n_db:])
            t = _time_queries(lambda q: l2_topk(store, q, k), qs, repeats, warmup)
            report.rows.append(LatencyRow(f"float ({dim}D)", "L2", str(dim), median_of_means(t), 0.0))
            del store, x
        raw = rng.standard_normal((n_db + n_queries, binary_dim), dtype=np.float32)
        words = sign_hash_rows(raw)
        bidx = build_binary_index(words[:n_db], ids, dim=binary_dim)
        qb = [BinaryCode(w, binary_dim) for w in words[n_db:]]
        t = _time_queries(lambda q: hamming_topk(bidx, q, k), qb, repeats, warmup)
        report.rows.append(LatencyRow(f"binary ({binary_dim}D)", "Hamming", str(binary_dim),
                                      median_of_means(t), 0.0))
        xf = l2_normalize(rng.standard_normal((n_db + n_queries, rerank_dim), dtype=np.float32))
        store = build_float_store(xf[:n_db], ids)
        ti, tr = _time_two_stage(bidx, store, qb, list(xf[n_db:]), k, repeats, warmup)
        report.rows.append(LatencyRow("two-stage", "Hamming+L2", f"{binary_dim}/{rerank_dim}",
                                      median_of_means(ti), median_of_means(tr)))
        return report
