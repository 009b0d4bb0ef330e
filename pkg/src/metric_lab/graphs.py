"""Weighted-graph helpers: shortest paths with deterministic geodesics."""

from __future__ import annotations

import os

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components, dijkstra

from .errors import NoGeodesic

REL_TOL = 1e-9


def thread_count(default: int | None = None) -> int:
    env = os.environ.get("METRIC_LAB_THREADS")
    if env:
        return max(1, int(env))
    return default or os.cpu_count() or 1


def symmetric_csr(n: int, i, j, w) -> sp.csr_matrix:
    i, j, w = np.asarray(i, int), np.asarray(j, int), np.asarray(w, float)
    A = sp.coo_matrix((np.r_[w, w], (np.r_[i, j], np.r_[j, i])), shape=(n, n))
    A = A.tocsr()
    A.sum_duplicates()
    return A


def reweight(adj: sp.csr_matrix, fn) -> sp.csr_matrix:
    """Copy of ``adj`` with weight ``fn(i, j, w)`` on every stored edge."""
    coo = adj.tocoo()
    w = fn(coo.row, coo.col, coo.data)
    return sp.csr_matrix((w, (coo.row, coo.col)), shape=adj.shape)


def shortest_paths(adj: sp.csr_matrix, sources=None) -> np.ndarray:
    return dijkstra(adj, directed=False, indices=sources)


def is_connected(adj: sp.csr_matrix) -> bool:
    if adj.shape[0] <= 1:
        return True
    return connected_components(adj, directed=False)[0] == 1


def lex_predecessors(adj: sp.csr_matrix, dist: np.ndarray) -> np.ndarray:
    """Shortest-path tree from a single-source distance vector.

    The predecessor of ``v`` is the smallest index ``u`` with
    ``dist[u] + w(u, v) == dist[v]`` up to relative tolerance.  The source
    (and unreachable nodes) get ``-1``.
    """
    coo = adj.tocoo()
    u, v, w = coo.row, coo.col, coo.data
    ok = np.isfinite(dist[u]) & np.isfinite(dist[v]) & (dist[v] > 0)
    tight = ok & (np.abs(dist[u] + w - dist[v]) <= REL_TOL * np.maximum(dist[v], 1.0))
    # strictly closer to the source rules out zero-progress cycles
    tight &= dist[u] < dist[v]
    pred = np.full(adj.shape[0], -1, dtype=int)
    order = np.lexsort((u[tight], v[tight]))
    vv, uu = v[tight][order], u[tight][order]
    first = np.ones(vv.size, dtype=bool)
    first[1:] = vv[1:] != vv[:-1]
    pred[vv[first]] = uu[first]
    return pred


def path_from_tree(pred: np.ndarray, source: int, target: int) -> list[int]:
    path = [int(target)]
    while path[-1] != source:
        nxt = pred[path[-1]]
        if nxt < 0:
            raise NoGeodesic(f"node {target} is not reachable from {source}")
        path.append(int(nxt))
    return path[::-1]


def metric_skeleton(D: np.ndarray, rtol: float = REL_TOL) -> sp.csr_matrix:
    """Graph whose edges are the pairs that no third point splits.

    A pair ``(i, j)`` is dropped when some ``k`` has
    ``d(i, k) + d(k, j) == d(i, j)`` within ``rtol``; shortest paths in what
    remains reproduce ``D``.
    """
    n = D.shape[0]
    keep = np.ones((n, n), dtype=bool)
    np.fill_diagonal(keep, False)
    tol = rtol * max(float(D.max()) if n else 0.0, 1.0)
    for k in range(n):
        split = D[:, k][:, None] + D[k, :][None, :] <= D + tol
        split[k, :] = False
        split[:, k] = False
        keep &= ~split
    i, j = np.nonzero(np.triu(keep, 1))
    return symmetric_csr(n, i, j, D[i, j])
