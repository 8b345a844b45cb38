"""Pareto dominance, non-dominated sorting and crowding-based truncation."""

from __future__ import annotations

import numpy as np


def dominates(a, b) -> bool:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("objective tuples differ in arity")
    return bool(np.all(a <= b) and np.any(a < b))


def dominance_matrix(F: np.ndarray) -> np.ndarray:
    """``D[i, j]`` is True when row ``i`` dominates row ``j``."""
    F = np.asarray(F, dtype=float)
    le = np.all(F[:, None, :] <= F[None, :, :], axis=2)
    lt = np.any(F[:, None, :] < F[None, :, :], axis=2)
    return le & lt


def nondominated_sort(F) -> list:
    """Fronts as lists of row indices, best first (each front in index order)."""
    F = np.asarray(F, dtype=float)
    n = F.shape[0]
    if n == 0:
        return []
    D = dominance_matrix(F)
    count = D.sum(axis=0)  # how many rows dominate each row
    fronts = []
    current = np.flatnonzero(count == 0)
    while current.size:
        fronts.append([int(i) for i in current])
        count = count - D[current].sum(axis=0)
        count[current] = -1
        current = np.flatnonzero(count == 0)
    return fronts


def ranks(F) -> np.ndarray:
    out = np.empty(np.asarray(F).shape[0], dtype=int)
    for r, front in enumerate(nondominated_sort(F)):
        out[front] = r
    return out


def crowding_distance(F) -> np.ndarray:
    """Crowding distance of each row within one front (boundary rows get inf)."""
    F = np.asarray(F, dtype=float)
    n, k = F.shape
    dist = np.zeros(n)
    if n <= 2:
        dist[:] = np.inf
        return dist
    for m in range(k):
        order = np.argsort(F[:, m], kind="stable")
        col = F[order, m]
        dist[order[0]] = dist[order[-1]] = np.inf
        span = col[-1] - col[0]
        if span <= 0 or not np.isfinite(span):
            continue
        dist[order[1:-1]] += (col[2:] - col[:-2]) / span
    return dist


def truncate(F, target: int) -> list:
    """Indices of the ``target`` survivors: whole fronts first, then the most isolated."""
    F = np.asarray(F, dtype=float)
    if target < 1:
        raise ValueError("target size must be >= 1")
    n = F.shape[0]
    if n <= target:
        return list(range(n))
    keep = []
    for front in nondominated_sort(F):
        if len(keep) + len(front) <= target:
            keep.extend(front)
            if len(keep) == target:
                break
            continue
        cd = crowding_distance(F[front])
        order = np.argsort(-cd, kind="stable")
        keep.extend(front[i] for i in order[: target - len(keep)])
        break
    return keep
