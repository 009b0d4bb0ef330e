"""Discretized domains: boundary distances, quasihyperbolic and uniformized metrics.

A :class:`DomainGraph` connects interior sample points that lie within a
connection radius of each other.  Conformal path metrics are then shortest
paths with trapezoidal edge weights ``len(i, j) * (rho(i) + rho(j)) / 2``
for a density ``rho``.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from . import graphs
from .errors import (
    DisconnectedInterior,
    NoGeodesic,
    EmptyBoundary,
    EmptyInterior,
    InvalidCurve,
    ParseError,
)
from .hyperbolicity import epsilon0, four_point_delta

EXACT_UNIFORMITY_NODES = 400
# relative tie window when choosing the deepest node
DEPTH_RTOL = 1e-9


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Sample points of a closed domain with boundary flags.

    ``ref`` optionally holds reference coordinates (for instance the
    undeformed grid position) used to align samples of related domains.
    """

    points: np.ndarray
    boundary: np.ndarray
    ref: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2:
            raise ValueError("points must be an (n, dim) array")
        b = np.asarray(self.boundary, dtype=bool).reshape(-1)
        if b.size != pts.shape[0]:
            raise ValueError(f"{pts.shape[0]} points but {b.size} boundary flags")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "boundary", b)
        if self.ref is not None:
            object.__setattr__(self, "ref", np.asarray(self.ref, dtype=float))

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __eq__(self, other):
        if not isinstance(other, PointCloud):
            return NotImplemented
        same_ref = (self.ref is None and other.ref is None) or (
            self.ref is not None and other.ref is not None and np.array_equal(self.ref, other.ref)
        )
        return (
            np.array_equal(self.points, other.points)
            and np.array_equal(self.boundary, other.boundary)
            and same_ref
        )

    def to_dict(self) -> dict:
        out = {
            "kind": "point_cloud",
            "version": 1,
            "dim": self.dim,
            "points": self.points.tolist(),
            "boundary": [int(v) for v in self.boundary],
        }
        if self.ref is not None:
            out["ref"] = self.ref.tolist()
        if self.meta:
            out["meta"] = self.meta
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "PointCloud":
        if data.get("kind") != "point_cloud":
            raise ParseError("kind", f"expected 'point_cloud', got {data.get('kind')!r}")
        try:
            pts = np.asarray(data["points"], dtype=float)
            flags = np.asarray(data["boundary"], dtype=int)
        except KeyError as exc:
            raise ParseError(exc.args[0], "missing field") from None
        except (TypeError, ValueError) as exc:
            raise ParseError("points", str(exc)) from None
        dim = int(data.get("dim", pts.shape[1] if pts.ndim == 2 else 0))
        if pts.ndim != 2 or pts.shape[1] != dim:
            raise ParseError("points", f"expected rows of length {dim}")
        if flags.shape != (pts.shape[0],):
            raise ParseError("boundary", f"expected {pts.shape[0]} flags, got {flags.size}")
        return cls(pts, flags.astype(bool), data.get("ref"), data.get("meta", {}))


def load_cloud(path) -> PointCloud:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"line {exc.lineno}", exc.msg) from None
    return PointCloud.from_dict(data)


def save_cloud(cloud: PointCloud, path) -> None:
    Path(path).write_text(json.dumps(cloud.to_dict()) + "\n")


@dataclass(frozen=True, eq=False)
class MetricGraph:
    """Undirected weighted graph; ``coords`` is optional."""

    adjacency: sp.csr_matrix
    coords: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    def distances(self, sources=None) -> np.ndarray:
        return graphs.shortest_paths(self.adjacency, sources)


@dataclass(frozen=True, eq=False)
class DomainGraph(MetricGraph):
    """Graph on the interior samples of a domain.

    Node ``k`` is cloud point ``interior[k]``; ``bdist[k]`` is its distance
    to the nearest boundary sample.
    """

    cloud: PointCloud | None = None
    interior: np.ndarray | None = None
    bdist: np.ndarray | None = None
    h: float = 0.0

    @property
    def boundary_points(self) -> np.ndarray:
        return self.cloud.points[self.cloud.boundary]

    @property
    def ref(self) -> np.ndarray | None:
        return None if self.cloud.ref is None else self.cloud.ref[self.interior]


def _segment_point_distance(a, b, q):
    """Distance from points ``q`` (m, dim) to segment ``ab``."""
    ab = b - a
    t = np.clip(((q - a) @ ab) / max(float(ab @ ab), 1e-300), 0.0, 1.0)
    return np.linalg.norm(q - (a + t[:, None] * ab), axis=1)


def build_domain_graph(cloud: PointCloud, h: float) -> DomainGraph:
    """Connect interior samples within distance ``h`` of each other.

    An edge is dropped when its segment passes closer to a boundary sample
    than half the smaller endpoint clearance, which keeps edges from jumping
    across slits and holes.  The boundary sampling must be at least as fine
    as ``h``.
    """
    if h <= 0:
        raise ValueError("connection radius h must be positive")
    interior = np.flatnonzero(~cloud.boundary)
    if interior.size == 0:
        raise EmptyInterior("point cloud has no interior points")
    bpts = cloud.points[cloud.boundary]
    if bpts.shape[0] == 0:
        raise EmptyBoundary("point cloud has no boundary points")
    ipts = cloud.points[interior]
    btree = cKDTree(bpts)
    bdist, _ = btree.query(ipts)
    if np.any(bdist <= 0):
        raise ValueError("an interior point coincides with a boundary point")

    pairs = cKDTree(ipts).query_pairs(h * (1 + 1e-12), output_type="ndarray")
    keep = np.ones(len(pairs), dtype=bool)
    if len(pairs):
        lens = np.linalg.norm(ipts[pairs[:, 0]] - ipts[pairs[:, 1]], axis=1)
        mids = 0.5 * (ipts[pairs[:, 0]] + ipts[pairs[:, 1]])
        clear = 0.5 * np.minimum(bdist[pairs[:, 0]], bdist[pairs[:, 1]])
        # only edges that could dip below the clearance need the exact test
        near_mid, _ = btree.query(mids)
        suspect = np.flatnonzero(near_mid < 0.5 * lens + clear)
        for e in suspect:
            i, j = pairs[e]
            cand = btree.query_ball_point(mids[e], 0.5 * lens[e] + clear[e])
            if cand and _segment_point_distance(ipts[i], ipts[j], bpts[cand]).min() < clear[e]:
                keep[e] = False
        pairs, lens = pairs[keep], lens[keep]
    else:
        lens = np.zeros(0)
    adj = graphs.symmetric_csr(interior.size, pairs[:, 0] if len(pairs) else [], pairs[:, 1] if len(pairs) else [], lens)
    if interior.size > 1 and not graphs.is_connected(adj):
        raise DisconnectedInterior(f"interior graph is disconnected at connection radius {h}")
    return DomainGraph(adj, ipts, cloud, interior, bdist, float(h))


def deepest_node(g: DomainGraph) -> int:
    """Interior node maximizing boundary distance; ties go to the node nearest the interior centroid."""
    top = g.bdist.max()
    cand = np.flatnonzero(g.bdist >= top * (1 - DEPTH_RTOL))
    if cand.size > 1:
        centre = g.coords.mean(axis=0)
        off = np.linalg.norm(g.coords[cand] - centre, axis=1)
        cand = cand[np.lexsort((cand, off))]
    return int(cand[0])


def qh_adjacency(g: DomainGraph) -> sp.csr_matrix:
    b = g.bdist
    return graphs.reweight(g.adjacency, lambda i, j, w: w * 0.5 * (1 / b[i] + 1 / b[j]))


def qh_graph(g: DomainGraph) -> MetricGraph:
    """The domain graph with quasihyperbolic edge weights."""
    return MetricGraph(qh_adjacency(g), g.coords)


def quasihyperbolic_metric(g: DomainGraph, sources=None) -> np.ndarray:
    """Quasihyperbolic distances between interior nodes (rows limited to ``sources``)."""
    return graphs.shortest_paths(qh_adjacency(g), sources)


@dataclass(frozen=True)
class Uniformized:
    dist: np.ndarray
    diam: float
    base: int
    eps: float
    base_dist: np.ndarray


def _sample_delta(graph: MetricGraph, max_nodes: int = 40) -> float:
    idx = np.unique(np.linspace(0, graph.n - 1, min(graph.n, max_nodes)).round().astype(int))
    D = graph.distances(idx)[:, idx]
    return four_point_delta(D).delta


def uniformize(graph: MetricGraph, base: int, eps: float, delta: float | None = None) -> Uniformized:
    """Uniformized distances with density ``exp(-eps d(base, .))`` on ``graph``.

    ``d`` is the graph's own shortest-path metric.  Warns (does not fail)
    when ``eps`` exceeds ``epsilon0`` of the supplied or sampled delta.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if not 0 <= base < graph.n:
        raise IndexError(f"base {base} outside 0..{graph.n - 1}")
    if delta is None:
        delta = _sample_delta(graph)
    limit = epsilon0(delta).eps0
    if eps > limit:
        warnings.warn(f"eps={eps} exceeds epsilon0({delta:.4g}) = {limit:.4g}", stacklevel=2)
    d_p = graph.distances(base)
    rho = np.exp(-eps * d_p)
    adj = graphs.reweight(graph.adjacency, lambda i, j, w: w * 0.5 * (rho[i] + rho[j]))
    D = graphs.shortest_paths(adj)
    return Uniformized(D, float(D.max()), base, eps, d_p)


@dataclass(frozen=True)
class CurveSample:
    nodes: tuple[int, ...]
    cumlen: np.ndarray

    @classmethod
    def from_nodes(cls, g: DomainGraph, nodes) -> "CurveSample":
        nodes = tuple(int(v) for v in nodes)
        if not nodes:
            raise InvalidCurve("a curve needs at least one node")
        steps = []
        for a, b in zip(nodes[:-1], nodes[1:]):
            w = g.adjacency[a, b]
            if w == 0:
                raise InvalidCurve(f"nodes {a} and {b} are not adjacent")
            steps.append(w)
        cum = np.concatenate([[0.0], np.cumsum(steps)])
        return cls(nodes, cum)


@dataclass(frozen=True)
class CurveCheck:
    passed: bool
    length_ratio: float
    cigar_ratio: float
    worst_node: int

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "length_ratio": float(self.length_ratio),
            "cigar_ratio": float(self.cigar_ratio),
            "worst_node": self.worst_node,
        }


def _curve_ratios(cum, coords_ends, bd):
    L = cum[-1]
    chord = float(np.linalg.norm(coords_ends[1] - coords_ends[0]))
    length_ratio = L / chord if chord > 0 else (0.0 if L == 0 else math.inf)
    cig = np.minimum(cum, L - cum) / bd
    w = int(np.argmax(cig))
    return length_ratio, float(cig[w]), w


def check_uniform_curve(curve: CurveSample, A: float, g: DomainGraph) -> CurveCheck:
    """Test the length condition and the cigar condition at every sample node."""
    nodes = np.asarray(curve.nodes)
    if np.any(np.diff(curve.cumlen) <= 0) and len(nodes) > 1:
        raise InvalidCurve("cumulative lengths must be strictly increasing")
    lr, cr, w = _curve_ratios(curve.cumlen, g.coords[[nodes[0], nodes[-1]]], g.bdist[nodes])
    return CurveCheck(bool(lr <= A and cr <= A), lr, cr, int(nodes[w]))


@dataclass(frozen=True)
class UniformityEstimate:
    A: float
    pair: tuple[int, int]
    length_ratio: float
    cigar_ratio: float
    exact: bool
    sources: int

    def to_dict(self) -> dict:
        return {
            "A": float(self.A),
            "pair": list(self.pair),
            "length_ratio": float(self.length_ratio),
            "cigar_ratio": float(self.cigar_ratio),
            "exact": self.exact,
            "sources": self.sources,
        }


def _tree_arclength(pred, amb, source):
    """Ambient length of the tree path from ``source`` to every node."""
    n = len(pred)
    has = pred >= 0
    step = np.zeros(n)
    step[has] = np.asarray(amb[pred[has], np.flatnonzero(has)]).ravel()
    cum = step.copy()
    node = np.where(has, pred, source)
    while np.any(node != source):
        cum += np.where(node != source, step[node], 0.0)
        node = np.where(node != source, pred[node], source)
    return cum


def _tree_ratios(pred, cum, coords, bdist, source, targets):
    """Both uniformity ratios of the tree path from ``source`` to each target."""
    L = cum[targets]
    chord = np.linalg.norm(coords[targets] - coords[source], axis=1)
    lr = np.where(chord > 0, L / np.where(chord > 0, chord, 1.0), np.where(L > 0, np.inf, 0.0))
    cr = np.zeros(len(targets))
    node = np.asarray(targets).copy()
    alive = np.ones(len(targets), dtype=bool)
    # walk every path toward the source in lockstep
    while alive.any():
        c = cum[node]
        val = np.minimum(c, L - c) / bdist[node]
        cr = np.where(alive, np.maximum(cr, val), cr)
        alive &= node != source
        node = np.where(alive, pred[node], node)
    return lr, cr


def estimate_uniformity_constant(g: DomainGraph, max_nodes: int = EXACT_UNIFORMITY_NODES, seed: int = 0) -> UniformityEstimate:
    """Upper estimate of the uniformity constant from quasihyperbolic geodesics.

    Every pair of interior nodes is joined by its quasihyperbolic shortest
    path and scored by the larger of its two uniformity ratios.  Above
    ``max_nodes`` interior nodes only a seeded subset of source nodes is
    used and ``exact`` is False.
    """
    n = g.n
    exact = n <= max_nodes
    if exact:
        sources = np.arange(n)
    else:
        rng = np.random.default_rng(seed)
        sources = np.sort(rng.choice(n, max_nodes, replace=False))
    qadj = qh_adjacency(g)
    amb = g.adjacency.tocsr()
    best = (1.0, (0, 0), 1.0, 0.0)
    if n < 2:
        return UniformityEstimate(1.0, (0, 0), 1.0, 0.0, exact, len(sources))
    for s in sources:
        dist = graphs.shortest_paths(qadj, int(s))
        pred = graphs.lex_predecessors(qadj, dist)
        if np.any((pred < 0) & (np.arange(n) != s)):
            raise NoGeodesic(f"some node is unreachable from {s}")
        cum = _tree_arclength(pred, amb, int(s))
        targets = np.arange(s + 1, n) if exact else np.delete(np.arange(n), s)
        if targets.size == 0:
            continue
        lr, cr = _tree_ratios(pred, cum, g.coords, g.bdist, int(s), targets)
        score = np.maximum(lr, cr)
        w = int(np.argmax(score))
        if score[w] > best[0]:
            best = (float(score[w]), (int(s), int(targets[w])), float(lr[w]), float(cr[w]))
    return UniformityEstimate(best[0], best[1], best[2], best[3], exact, len(sources))


@dataclass(frozen=True)
class Clearance:
    c: float
    verified: bool
    violators: tuple[int, ...]
    ball_size: int

    def to_dict(self) -> dict:
        return {
            "c": float(self.c),
            "verified": self.verified,
            "violators": list(self.violators),
            "ball_size": self.ball_size,
        }


def clearance_radius(depth: float, R: float) -> float:
    """``min((depth/2) / (e^R - 1), depth/2)``."""
    if R <= 0:
        raise ValueError("R must be positive")
    half = depth / 2
    return min(half / (math.exp(R) - 1), half)


def qh_ball_clearance(g: DomainGraph, base: int, R: float) -> Clearance:
    """Check that the quasihyperbolic ball of radius R stays ``c`` away from the boundary."""
    c = clearance_radius(float(g.bdist[base]), R)
    k = quasihyperbolic_metric(g, base)
    ball = np.flatnonzero(k < R)
    bad = ball[g.bdist[ball] <= c]
    return Clearance(c, bad.size == 0, tuple(int(v) for v in bad), int(ball.size))
