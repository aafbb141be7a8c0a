"""Greedy degrading merge of adjacent symbols, compiled with numba."""

import heapq

import numpy as np
from numba import njit


@njit(cache=True)
def _f(a, b):
    s = a + b
    out = 0.0
    if a > 0:
        out += a * np.log2(2 * a / s)
    if b > 0:
        out += b * np.log2(2 * b / s)
    return out


@njit(cache=True)
def _loss(a, b, i, j):
    d = _f(a[i], b[i]) + _f(a[j], b[j]) - _f(a[i] + a[j], b[i] + b[j])
    return d if d > 0 else 0.0


@njit(cache=True)
def _greedy_merge(a, b, target):
    n = a.shape[0]
    a = a.copy()
    b = b.copy()
    nxt = np.arange(1, n + 1)
    prv = np.arange(-1, n - 1)
    alive = np.ones(n, dtype=np.bool_)
    ver = np.zeros(n, dtype=np.int64)
    heap = [(0.0, 0, 0, 0, 0)]
    heap.pop()
    for i in range(n - 1):
        heap.append((_loss(a, b, i, i + 1), i, i + 1, 0, 0))
    heapq.heapify(heap)
    count = n
    while count > target and len(heap) > 0:
        loss, i, j, vi, vj = heapq.heappop(heap)
        if not alive[i] or not alive[j] or nxt[i] != j or ver[i] != vi or ver[j] != vj:
            continue
        a[i] += a[j]
        b[i] += b[j]
        alive[j] = False
        k = nxt[j]
        nxt[i] = k
        if k < n:
            prv[k] = i
        ver[i] += 1
        count -= 1
        p = prv[i]
        if p >= 0:
            heapq.heappush(heap, (_loss(a, b, p, i), p, i, ver[p], ver[i]))
        if k < n:
            heapq.heappush(heap, (_loss(a, b, i, k), i, k, ver[i], ver[k]))
    return a[alive], b[alive]


def greedy_merge(a: np.ndarray, b: np.ndarray, target: int):
    """Merge adjacent entries of the ascending-LLR half ``(a, b)`` down to ``target``."""
    if a.size <= target:
        return a, b
    return _greedy_merge(np.ascontiguousarray(a, dtype=np.float64),
                         np.ascontiguousarray(b, dtype=np.float64), int(target))
