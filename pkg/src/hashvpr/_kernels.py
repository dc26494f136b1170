"""Compiled scan kernels: fused XOR/popcount scans and bounded-heap top-k."""

import numba as nb
import numpy as np

_M1 = np.uint64(0x5555555555555555)
_M2 = np.uint64(0x3333333333333333)
_M4 = np.uint64(0x0F0F0F0F0F0F0F0F)
_H01 = np.uint64(0x0101010101010101)


@nb.njit(inline="always", nogil=True, cache=True)
def _popcount(x):
    x = x - ((x >> np.uint64(1)) & _M1)
    x = (x & _M2) + ((x >> np.uint64(2)) & _M2)
    x = (x + (x >> np.uint64(4))) & _M4
    return (x * _H01) >> np.uint64(56)


@nb.njit(inline="always", nogil=True, cache=True)
def _less(da, pa, db, pb):
    return da < db or (da == db and pa < pb)


@nb.njit(nogil=True, cache=True)
def _sift_down(hd, hp, size, i):
    # max-heap on (distance, position)
    while True:
        left = 2 * i + 1
        if left >= size:
            return
        big = left
        right = left + 1
        if right < size and _less(hd[left], hp[left], hd[right], hp[right]):
            big = right
        if _less(hd[i], hp[i], hd[big], hp[big]):
            hd[i], hd[big] = hd[big], hd[i]
            hp[i], hp[big] = hp[big], hp[i]
            i = big
        else:
            return


@nb.njit(nogil=True, cache=True)
def _sift_up(hd, hp, i):
    while i > 0:
        parent = (i - 1) // 2
        if _less(hd[parent], hp[parent], hd[i], hp[i]):
            hd[i], hd[parent] = hd[parent], hd[i]
            hp[i], hp[parent] = hp[parent], hp[i]
            i = parent
        else:
            return


@nb.njit(nogil=True, cache=True)
def _heap_sorted(hd, hp, size):
    # heapsort in place; leaves ascending (distance, position)
    end = size
    while end > 1:
        end -= 1
        hd[0], hd[end] = hd[end], hd[0]
        hp[0], hp[end] = hp[end], hp[0]
        _sift_down(hd, hp, end, 0)
    return hd[:size], hp[:size]


@nb.njit(nogil=True, cache=True)
def hamming_scan_topk(codes, query, k):
    """Top-k rows of ``codes`` by Hamming distance to ``query``; ties by row."""
    n, w = codes.shape
    k = min(k, n)
    hd = np.empty(k, dtype=np.int64)
    hp = np.empty(k, dtype=np.int64)
    size = 0
    for i in range(n):
        s = np.uint64(0)
        for j in range(w):
            s += _popcount(codes[i, j] ^ query[j])
        d = np.int64(s)
        if size < k:
            hd[size] = d
            hp[size] = i
            _sift_up(hd, hp, size)
            size += 1
        elif d < hd[0]:
            # equal distance never displaces: rows arrive in ascending order
            hd[0] = d
            hp[0] = i
            _sift_down(hd, hp, size, 0)
    return _heap_sorted(hd, hp, size)


@nb.njit(nogil=True, cache=True)
def hamming_scan_all(codes, query):
    n, w = codes.shape
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        s = np.uint64(0)
        for j in range(w):
            s += _popcount(codes[i, j] ^ query[j])
        out[i] = np.int64(s)
    return out


@nb.njit(nogil=True, cache=True)
def topk_of_distances(dist, k):
    """Bounded max-heap selection over a distance array; ties by position."""
    n = dist.shape[0]
    k = min(k, n)
    hd = np.empty(k, dtype=dist.dtype)
    hp = np.empty(k, dtype=np.int64)
    size = 0
    for i in range(n):
        d = dist[i]
        if size < k:
            hd[size] = d
            hp[size] = i
            _sift_up(hd, hp, size)
            size += 1
        elif d < hd[0]:
            hd[0] = d
            hp[0] = i
            _sift_down(hd, hp, size, 0)
    return _heap_sorted(hd, hp, size)
