"""Gromov products, four-point hyperbolicity, visual metrics and rough starlikeness."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import dijkstra, shortest_path

from . import graphs
from .errors import EmptyBoundary, MetricError, NegativeDelta, NoGeodesic
from .metric_core import MarkedMetricSpace


def _matrix(space) -> np.ndarray:
    if isinstance(space, MarkedMetricSpace):
        return space.dist
    return np.asarray(space, dtype=float)


@dataclass(frozen=True)
class PointedSpace:
    """A space (marked metric space or metric graph) with a base point."""

    space: object
    base: int

    def __post_init__(self):
        n = _size(self.space)
        if not 0 <= self.base < n:
            raise IndexError(f"base point {self.base} outside 0..{n - 1}")
        flags = getattr(self.space, "boundary", None)
        if isinstance(self.space, MarkedMetricSpace) and flags[self.base]:
            raise MetricError("base point must be an interior point")


def _size(space) -> int:
    if hasattr(space, "n"):
        return space.n
    return _matrix(space).shape[0]


def gromov_product(space, x: int, y: int, m: int) -> float:
    """``(x|y)_m = (d(m, x) + d(m, y) - d(x, y)) / 2``."""
    d = _matrix(space)
    n = d.shape[0]
    for i in (x, y, m):
        if not 0 <= i < n:
            raise IndexError(f"index {i} outside 0..{n - 1}")
    return 0.5 * (d[m, x] + d[m, y] - d[x, y])


def gromov_products(d: np.ndarray, m: int) -> np.ndarray:
    """Matrix of ``(x|y)_m`` over all ``x, y``."""
    return 0.5 * (d[m][:, None] + d[m][None, :] - d)


@dataclass(frozen=True)
class HyperbolicityReport:
    delta: float
    witness: tuple[int, int, int, int]
    quadruples_scanned: int

    def to_dict(self) -> dict:
        return {
            "delta": float(self.delta),
            "witness": list(self.witness),
            "quadruples_scanned": self.quadruples_scanned,
        }


def four_point_delta(space) -> HyperbolicityReport:
    """Least delta with ``(x|z)_m >= min((x|y)_m, (y|z)_m) - delta`` everywhere.

    Scans every base point ``m`` and every ``y``, and only ``x <= z`` since
    the defect is symmetric in ``x`` and ``z``.  The witness is the
    lexicographically smallest ``(x, y, z, m)`` attaining the maximum.
    """
    d = _matrix(space)
    n = d.shape[0]
    if n == 0:
        return HyperbolicityReport(0.0, (0, 0, 0, 0), 0)
    upper = np.triu(np.ones((n, n), dtype=bool))
    best = -math.inf
    witness = (0, 0, 0, 0)
    block = max(1, int(4e6 // (n * n)))
    for m in range(n):
        G = gromov_products(d, m)
        for y0 in range(0, n, block):
            # T[y, x, z] = min((x|y)_m, (y|z)_m) - (x|z)_m
            T = np.minimum(G.T[y0 : y0 + block, :, None], G[y0 : y0 + block, None, :]) - G[None, :, :]
            T[:, ~upper] = -math.inf
            top = T.max()
            if top < best:
                continue
            ys, xs, zs = np.nonzero(T == top)
            cand = min(zip(xs.tolist(), (ys + y0).tolist(), zs.tolist()))
            cand = (cand[0], cand[1], cand[2], m)
            if top > best or cand < witness:
                best, witness = float(top), cand
    scanned = n * n * (n * (n + 1) // 2)
    if best <= 0.0:
        return HyperbolicityReport(0.0, (0, 0, 0, 0), scanned)
    return HyperbolicityReport(best, witness, scanned)


class HyperbolicityConstants(NamedTuple):
    L: float
    eps0: float


def epsilon0_exact(delta) -> tuple[Fraction, Fraction]:
    delta = Fraction(delta)
    if delta < 0:
        raise NegativeDelta(f"delta must be nonnegative, got {delta}")
    L = 6 * (1 + 24 * delta) * (2 + 40 * delta) + 48 * delta + 3
    return L, 1 / (14 * L)


def epsilon0(delta) -> HyperbolicityConstants:
    """Geodesic-neighborhood constant ``L(delta)`` and the uniformization threshold ``1/(14 L)``."""
    L, eps0 = epsilon0_exact(delta)
    return HyperbolicityConstants(float(L), float(eps0))


def subdivision_bound(eps: float, delta_prime: float, R: float, delta: float) -> float:
    """Upper bound ``4/(eps delta') exp(eps T R)`` with ``T = 4 + L(delta)`` on the
    number of pieces of length in ``[delta'/2, delta')`` a uniformized geodesic
    between points of ``B(p, R)`` splits into."""
    T = 4 + epsilon0(delta).L
    return 4.0 / (eps * delta_prime) * math.exp(eps * T * R)


def uniformized_diameter_bound(eps: float) -> float:
    return 2.0 / eps


@dataclass(frozen=True)
class VisualMetric:
    boundary: np.ndarray
    dist: np.ndarray
    rho: np.ndarray

    def to_dict(self) -> dict:
        return {
            "boundary": self.boundary.tolist(),
            "dist": [[float(v) for v in row] for row in self.dist],
        }


def visual_metric(space: MarkedMetricSpace, base: int, eps: float, delta: float | None = None) -> VisualMetric:
    """Chain-infimum metric built from ``exp(-eps (x|y)_p)``, restricted to the boundary.

    Chains may pass through every point of the space.  Warns when
    ``eps >= 1/(5 delta)``; ``delta`` is measured when not supplied and the
    space is small enough for a quick scan.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    PointedSpace(space, base)
    bidx = space.boundary_idx
    if bidx.size == 0:
        raise EmptyBoundary("visual metric needs a designated boundary set")
    d = space.dist
    if delta is None and space.n <= 60:
        delta = four_point_delta(space).delta
    if delta and eps >= 1 / (5 * delta):
        warnings.warn(f"eps={eps} is not below 1/(5 delta) = {1 / (5 * delta):.6g}", stacklevel=2)
    rho = np.exp(-eps * gromov_products(d, base))
    np.fill_diagonal(rho, 0.0)
    closure = shortest_path(rho, method="FW", directed=False)
    return VisualMetric(bidx, closure[np.ix_(bidx, bidx)], rho[np.ix_(bidx, bidx)])


@dataclass(frozen=True)
class StarlikeReport:
    M: float
    witness: int
    targets: tuple[int, ...]

    def to_dict(self) -> dict:
        return {"M": float(self.M), "witness": self.witness, "targets": list(self.targets)}


def _graph_of(space):
    """Adjacency of the space's metric graph plus a distance-to-set callback."""
    if isinstance(space, MarkedMetricSpace) or isinstance(space, np.ndarray):
        D = _matrix(space)
        adj = graphs.metric_skeleton(D)
        return adj, lambda nodes: D[:, nodes].min(axis=1)
    adj = space.adjacency if hasattr(space, "adjacency") else sp.csr_matrix(space)
    return adj, lambda nodes: dijkstra(adj, directed=False, indices=nodes, min_only=True)


def rough_starlike_constant(pointed: PointedSpace, ray_targets=None) -> StarlikeReport:
    """Largest distance from a point to the union of geodesics from the base to the targets.

    Geodesics are shortest paths in the space's metric graph (for a bare
    matrix, the graph of pairs no third point splits), with ties broken by
    the smallest predecessor.  Default targets are the points farthest from
    the base.
    """
    adj, dist_to = _graph_of(pointed.space)
    p = pointed.base
    from_p = dijkstra(adj, directed=False, indices=p)
    if not np.all(np.isfinite(from_p)):
        raise NoGeodesic(f"node {int(np.flatnonzero(~np.isfinite(from_p))[0])} is not reachable from the base")
    if ray_targets is None:
        far = from_p.max()
        ray_targets = np.flatnonzero(from_p >= far - graphs.REL_TOL * max(far, 1.0))
    targets = sorted({int(t) for t in ray_targets})
    if not targets:
        raise ValueError("ray_targets must be nonempty")
    pred = graphs.lex_predecessors(adj, from_p)
    on_geodesic = set()
    for t in targets:
        on_geodesic.update(graphs.path_from_tree(pred, p, t))
    gap = dist_to(sorted(on_geodesic))
    w = int(np.argmax(gap))
    return StarlikeReport(float(gap[w]), w, tuple(targets))
