"""Two-stage retrieval: Hamming candidates, then float re-ranking."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .descriptors import BinaryCode
from .index import BinaryIndex, CandidateList, FloatStore, hamming_topk, l2_topk, squared_l2


@dataclass(frozen=True)
class RetrievalConfig:
    k_candidates: int = 100
    rerank_enabled: bool = True

    def __post_init__(self):
        if self.k_candidates < 1:
            raise ValueError(f"k_candidates must be >= 1, got {self.k_candidates}")


@dataclass
class RankedResult:
    ids: list
    candidates: CandidateList
    rerank_distances: np.ndarray | None = None
    timings_ns: dict = field(default_factory=dict)

    @property
    def total_ns(self) -> int:
        return sum(self.timings_ns.values())


def rerank(candidates: CandidateList, q_float, store: FloatStore) -> RankedResult:
    """Reorder ``candidates`` by squared L2 to ``q_float``; ties broken by id."""
    q = np.asarray(q_float, dtype=np.float32).reshape(-1)
    if q.shape[0] != store.dim:
        raise ValueError(f"query dim {q.shape[0]} does not match store dim {store.dim}")
    t0 = time.perf_counter_ns()
    rows = np.fromiter((store.row_of(i) for i in candidates.ids), dtype=np.int64,
                       count=len(candidates.ids))
    dist = squared_l2(store.descriptors[rows], store._sqnorm[rows], q)
    # rows are in id order, so sorting by (distance, row) breaks ties by id
    order = np.lexsort((rows, dist))
    elapsed = time.perf_counter_ns() - t0
    return RankedResult(
        ids=[store.ids[r] for r in rows[order]],
        candidates=candidates,
        rerank_distances=dist[order],
        timings_ns={"rerank": elapsed},
    )


def two_stage_search(
    bidx: BinaryIndex,
    store: FloatStore,
    q_bin: BinaryCode,
    q_float,
    cfg: RetrievalConfig = RetrievalConfig(),
) -> RankedResult:
    t0 = time.perf_counter_ns()
    cands = hamming_topk(bidx, q_bin, cfg.k_candidates)
    t_initial = time.perf_counter_ns() - t0
    if not cfg.rerank_enabled:
        return RankedResult(list(cands.ids), cands, None, {"initial": t_initial, "rerank": 0})
    result = rerank(cands, q_float, store)
    result.timings_ns = {"initial": t_initial, "rerank": result.timings_ns["rerank"]}
    return result


def binary_search(bidx: BinaryIndex, q_bin: BinaryCode, k: int) -> RankedResult:
    t0 = time.perf_counter_ns()
    cands = hamming_topk(bidx, q_bin, k)
    return RankedResult(list(cands.ids), cands, None,
                        {"initial": time.perf_counter_ns() - t0, "rerank": 0})


def float_search(store: FloatStore, q_float, k: int) -> RankedResult:
    t0 = time.perf_counter_ns()
    cands = l2_topk(store, q_float, k)
    return RankedResult(list(cands.ids), cands, cands.distances,
                        {"initial": time.perf_counter_ns() - t0, "rerank": 0})
