"""Exhaustive-scan indexes over packed binary codes and unit-norm float descriptors.

Rows are stored sorted by id, so a tie-break on row position is a tie-break
on id. Both indexes are immutable once built.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np

from . import _kernels
from .descriptors import BinaryCode, n_words


@dataclass(frozen=True)
class CandidateList:
    """Ranked (id, distance) pairs, ascending distance then ascending id."""

    ids: list
    distances: np.ndarray
    k: int

    def __len__(self):
        return len(self.ids)

    def __iter__(self):
        return iter(zip(self.ids, self.distances.tolist()))


def _sorted_ids(ids: Sequence[Hashable]) -> tuple[list, np.ndarray]:
    ids = list(ids)
    if len(set(ids)) != len(ids):
        seen, dup = set(), None
        for i in ids:
            if i in seen:
                dup = i
                break
            seen.add(i)
        raise ValueError(f"duplicate id {dup!r}")
    try:
        order = sorted(range(len(ids)), key=ids.__getitem__)
    except TypeError as exc:
        raise TypeError("ids must be mutually comparable (all int or all str)") from exc
    return [ids[i] for i in order], np.asarray(order, dtype=np.int64)


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class BinaryIndex:
    codes: np.ndarray  # (n, ceil(dim/64)) uint64
    dim: int
    ids: list
    _row: dict = field(repr=False)

    def __len__(self):
        return len(self.ids)

    @property
    def n_words(self) -> int:
        return self.codes.shape[1]

    def row_of(self, id_) -> int:
        return self._row[id_]


@dataclass(frozen=True, eq=False)
class FloatStore:
    descriptors: np.ndarray  # (n, d) float32, unit-norm rows
    ids: list
    _sqnorm: np.ndarray = field(repr=False)
    _row: dict = field(repr=False)

    def __len__(self):
        return len(self.ids)

    @property
    def dim(self) -> int:
        return self.descriptors.shape[1]

    def row_of(self, id_) -> int:
        try:
            return self._row[id_]
        except KeyError:
            raise KeyError(f"id {id_!r} not in float store") from None


def build_binary_index(codes, ids, dim: int | None = None) -> BinaryIndex:
    """Build from a list of BinaryCode or a packed (n, words) matrix plus ``dim``."""
    ids = list(ids)
    if isinstance(codes, np.ndarray):
        if dim is None:
            raise ValueError("dim is required when passing a packed word matrix")
        words = np.asarray(codes, dtype=np.uint64).reshape(len(ids), n_words(dim))
    else:
        codes = list(codes)
        if len(codes) != len(ids):
            raise ValueError(f"{len(codes)} codes but {len(ids)} ids")
        dims = {c.dim for c in codes}
        if len(dims) > 1:
            raise ValueError(f"mixed code dimensions: {sorted(dims)}")
        if dims:
            (code_dim,) = dims
            if dim is not None and dim != code_dim:
                raise ValueError(f"dim={dim} but codes have dim {code_dim}")
            dim = code_dim
        elif dim is None:
            dim = 64
        words = (
            np.stack([c.words for c in codes])
            if codes
            else np.zeros((0, n_words(dim)), dtype=np.uint64)
        )
    if words.shape[0] != len(ids):
        raise ValueError(f"{words.shape[0]} code rows but {len(ids)} ids")
    sorted_ids, order = _sorted_ids(ids)
    words = words[order] if len(order) else words
    return BinaryIndex(
        _readonly(words), int(dim), sorted_ids, {i: r for r, i in enumerate(sorted_ids)}
    )


def build_float_store(descriptors, ids, atol: float = 1e-5) -> FloatStore:
    x = np.asarray(descriptors, dtype=np.float32)
    ids = list(ids)
    if x.ndim != 2 or x.shape[0] != len(ids):
        raise ValueError(f"descriptor matrix shape {x.shape} does not match {len(ids)} ids")
    if not np.all(np.isfinite(x)):
        raise ValueError("descriptors contain non-finite entries")
    sq = np.einsum("ij,ij->i", x.astype(np.float64), x.astype(np.float64))
    bad = np.flatnonzero(np.abs(np.sqrt(sq) - 1.0) > atol)
    if bad.size:
        raise ValueError(f"row {int(bad[0])} is not unit-norm (norm={np.sqrt(sq[bad[0]]):.6f})")
    sorted_ids, order = _sorted_ids(ids)
    if len(order):
        x, sq = x[order], sq[order]
    return FloatStore(
        _readonly(x), sorted_ids, _readonly(sq), {i: r for r, i in enumerate(sorted_ids)}
    )


def _query_words(index: BinaryIndex, q: BinaryCode) -> np.ndarray:
    if q.dim != index.dim:
        raise ValueError(f"query dim {q.dim} does not match index dim {index.dim}")
    return np.ascontiguousarray(q.words, dtype=np.uint64)


def hamming_topk(index: BinaryIndex, q: BinaryCode, k: int) -> CandidateList:
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    words = _query_words(index, q)
    if len(index) == 0:
        return CandidateList([], np.zeros(0, dtype=np.int64), k)
    dist, rows = _kernels.hamming_scan_topk(index.codes, words, k)
    return CandidateList([index.ids[r] for r in rows], dist.copy(), k)


def hamming_distances(index: BinaryIndex, q: BinaryCode) -> np.ndarray:
    """Hamming distance from ``q`` to every row, in id order."""
    words = _query_words(index, q)
    if len(index) == 0:
        return np.zeros(0, dtype=np.int64)
    return _kernels.hamming_scan_all(index.codes, words)


def squared_l2(rows: np.ndarray, row_sqnorm: np.ndarray, q: np.ndarray) -> np.ndarray:
    """``||x||^2 + ||q||^2 - 2<x, q>`` per row, clamped at zero."""
    q64 = q.astype(np.float64)
    dots = (rows @ q).astype(np.float64)
    return np.maximum(row_sqnorm + q64 @ q64 - 2.0 * dots, 0.0)


def _float_query(store: FloatStore, q) -> np.ndarray:
    q = np.asarray(q, dtype=np.float32).reshape(-1)
    if q.shape[0] != store.dim:
        raise ValueError(f"query dim {q.shape[0]} does not match store dim {store.dim}")
    if not np.all(np.isfinite(q)):
        raise ValueError("query contains non-finite entries")
    return q


def l2_topk(store: FloatStore, q, k: int) -> CandidateList:
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    q = _float_query(store, q)
    if len(store) == 0:
        return CandidateList([], np.zeros(0), k)
    dist = squared_l2(store.descriptors, store._sqnorm, q)
    d, rows = _kernels.topk_of_distances(dist, k)
    return CandidateList([store.ids[r] for r in rows], d.copy(), k)


def batch_search(fn, index, queries, k: int, workers: int = 1) -> list[CandidateList]:
    """Run ``fn(index, q, k)`` over many queries, optionally on a thread pool.

    Each query is an independent task, so results do not depend on scheduling.
    """
    if workers <= 1:
        return [fn(index, q, k) for q in queries]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda q: fn(index, q, k), queries))
