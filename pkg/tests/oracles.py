"""
Brute-force references used by the tests. Nothing here reuses app code
except to build parameter objects and evaluate the objective.
"""
import math
from typing import Callable

import numpy as np


def naive_matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    n, k = a.shape
    m = b.shape[1]
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            out[i, j] = sum(a[i, t] * b[t, j] for t in range(k))
    return out


def naive_distances(rows: np.ndarray) -> np.ndarray:
    n = rows.shape[0]
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            out[i, j] = math.dist(rows[i].tolist(), rows[j].tolist())
    return out


def sorted_neighbors(dist: np.ndarray, k: int) -> list[list[int]]:
    """Full sort by (distance, index); self excluded."""
    n = dist.shape[0]
    return [
        sorted((j for j in range(n) if j != i), key=lambda j: (dist[i, j], j))[:k]
        for i in range(n)
    ]


def mine_oracle(
    dist_v: np.ndarray,
    dist_s: np.ndarray,
    k1: int,
    k2: int,
    hubs: set[int],
) -> set[tuple[int, int, int]]:
    """Triplet selection re-derived from raw distance matrices."""
    nv1, nv2 = sorted_neighbors(dist_v, k1), sorted_neighbors(dist_v, k2)
    ns1, ns2 = sorted_neighbors(dist_s, k1), sorted_neighbors(dist_s, k2)
    out = set()
    for a in range(dist_v.shape[0]):
        visual_k1 = set(nv1[a]) - hubs
        visual_k2 = set(nv2[a]) - hubs
        negatives = {s for s in ns1[a] if s not in visual_k2}
        positives = {v for v in visual_k1 if v not in set(ns2[a])}
        out |= {(a, p, n) for p in positives for n in negatives}
    return out


def central_differences(f: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    grad = np.zeros_like(x)
    for i in range(x.size):
        step = np.zeros_like(x)
        step[i] = h
        grad[i] = (f(x + step) - f(x - step)) / (2.0 * h)
    return grad


def cosine_argmax(query: np.ndarray, candidates: np.ndarray) -> int:
    """First index with the highest cosine, by explicit loop."""
    best, best_idx = -math.inf, 0
    qn = math.sqrt(sum(v * v for v in query))
    for j, c in enumerate(candidates):
        cn = math.sqrt(sum(v * v for v in c))
        cos = sum(a * b for a, b in zip(query, c)) / (qn * cn)
        if cos > best:
            best, best_idx = cos, j
    return best_idx
