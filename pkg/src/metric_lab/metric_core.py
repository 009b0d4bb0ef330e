"""Finite marked metric spaces and set-level distances.

A :class:`MarkedMetricSpace` enumerates the points of a completion
``X ∪ ∂X``; each point carries a flag saying whether it belongs to the
boundary.  Points are plain integer indices, coordinates never enter here.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    AsymmetricMatrix,
    EmptyPart,
    EmptySubset,
    MetricError,
    MetricValidationError,
    NegativeEntry,
    NonzeroDiagonal,
    OwnerMismatch,
    ParseError,
    TriangleViolation,
)

FORMAT_VERSION = 1
TRIANGLE_RTOL = 1e-9
EXACT_NET_LIMIT = 20


@dataclass(frozen=True, eq=False)
class MarkedMetricSpace:
    dist: np.ndarray
    boundary: np.ndarray
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        d = np.array(self.dist, dtype=float)
        b = np.array(self.boundary, dtype=bool).reshape(-1)
        if d.ndim != 2 or d.shape[0] != d.shape[1] or d.shape[0] != b.size:
            raise MetricError(f"distance matrix shape {d.shape} does not match {b.size} flags")
        d.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "dist", d)
        object.__setattr__(self, "boundary", b)
        if self.labels is not None:
            object.__setattr__(self, "labels", tuple(str(s) for s in self.labels))

    @property
    def n(self) -> int:
        return self.dist.shape[0]

    @property
    def interior_idx(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary)

    @property
    def boundary_idx(self) -> np.ndarray:
        return np.flatnonzero(self.boundary)

    @property
    def diam(self) -> float:
        return float(self.dist.max()) if self.n else 0.0

    def subspace(self, idx: Sequence[int]) -> "MarkedMetricSpace":
        idx = np.asarray(idx, dtype=int)
        labels = None if self.labels is None else [self.labels[i] for i in idx]
        return MarkedMetricSpace(self.dist[np.ix_(idx, idx)], self.boundary[idx], labels)

    def unmarked(self) -> "MarkedMetricSpace":
        return MarkedMetricSpace(self.dist, np.zeros(self.n, dtype=bool), self.labels)

    def __eq__(self, other):
        if not isinstance(other, MarkedMetricSpace):
            return NotImplemented
        return (
            self.n == other.n
            and np.array_equal(self.dist, other.dist)
            and np.array_equal(self.boundary, other.boundary)
            and self.labels == other.labels
        )

    def to_dict(self) -> dict:
        rows, cols = np.tril_indices(self.n, -1)
        out = {
            "kind": "marked_metric",
            "version": FORMAT_VERSION,
            "n": self.n,
            "dist": [float(v) for v in self.dist[rows, cols]],
            "boundary": [int(v) for v in self.boundary],
        }
        if self.labels is not None:
            out["labels"] = list(self.labels)
        return out

    @classmethod
    def from_dict(cls, data: dict, validate: bool = True) -> "MarkedMetricSpace":
        if data.get("kind") != "marked_metric":
            raise ParseError("kind", f"expected 'marked_metric', got {data.get('kind')!r}")
        try:
            n = int(data["n"])
            flat = np.asarray(data["dist"], dtype=float)
            flags = np.asarray(data["boundary"], dtype=int)
        except KeyError as exc:
            raise ParseError(exc.args[0], "missing field") from None
        except (TypeError, ValueError) as exc:
            raise ParseError("dist", str(exc)) from None
        if flags.shape != (n,):
            raise ParseError("boundary", f"expected {n} flags, got {flags.size}")
        dist = np.zeros((n, n))
        # strict lower triangle, or lower triangle including the diagonal
        if flat.size == n * (n - 1) // 2:
            rows, cols = np.tril_indices(n, -1)
        elif flat.size == n * (n + 1) // 2:
            rows, cols = np.tril_indices(n, 0)
        else:
            raise ParseError("dist", f"{flat.size} entries is not a lower triangle for n={n}")
        dist[rows, cols] = flat
        dist[cols, rows] = flat
        if validate:
            return validate_space(dist, flags.astype(bool), data.get("labels"))
        return cls(dist, flags.astype(bool), data.get("labels"))


@dataclass(frozen=True)
class PointSubset:
    owner: MarkedMetricSpace
    members: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self):
        members = frozenset(int(i) for i in self.members)
        bad = [i for i in members if not 0 <= i < self.owner.n]
        if bad:
            raise IndexError(f"indices {sorted(bad)} outside 0..{self.owner.n - 1}")
        object.__setattr__(self, "members", members)

    def __len__(self):
        return len(self.members)

    def __iter__(self):
        return iter(sorted(self.members))

    @property
    def index(self) -> np.ndarray:
        return np.array(sorted(self.members), dtype=int)


@dataclass(frozen=True)
class MarkedSubspace:
    """A subset of an ambient space split into an interior and a boundary part."""

    interior: PointSubset
    boundary: PointSubset


def subset(space: MarkedMetricSpace, members: Iterable[int]) -> PointSubset:
    return PointSubset(space, frozenset(members))


def find_violations(dist, rtol: float = TRIANGLE_RTOL) -> list[MetricError]:
    """Every violated metric axiom of a square matrix, each with a witness.

    Triangle violations are reported as ``(x, y, z)`` with
    ``d(x, z) > d(x, y) + d(y, z)`` beyond a relative slack of ``rtol``.
    """
    d = np.asarray(dist, dtype=float)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise MetricError(f"distance matrix must be square, got shape {d.shape}")
    if not np.all(np.isfinite(d)):
        raise MetricError("distance matrix has non-finite entries")
    errors: list[MetricError] = []
    n = d.shape[0]
    scale = max(float(np.abs(d).max()) if n else 0.0, 1.0)
    tol = rtol * scale
    for i, j in zip(*np.nonzero(d < 0)):
        errors.append(NegativeEntry(int(i), int(j), float(d[i, j])))
    for i in np.flatnonzero(np.abs(np.diag(d)) > tol):
        errors.append(NonzeroDiagonal(int(i), float(d[i, i])))
    iu, ju = np.triu_indices(n, 1)
    asym = np.abs(d[iu, ju] - d[ju, iu]) > tol
    for i, j in zip(iu[asym], ju[asym]):
        errors.append(AsymmetricMatrix(int(i), int(j), float(d[i, j]), float(d[j, i])))
    coincide = (d[iu, ju] <= tol) & (d[ju, iu] <= tol)
    for i, j in zip(iu[coincide], ju[coincide]):
        errors.append(MetricError(f"distinct points {i} and {j} are at distance 0"))
    if errors:
        return errors
    for y in range(n):
        # slack[x, z] = d(x, y) + d(y, z) - d(x, z)
        slack = d[:, y][:, None] + d[y, :][None, :] - d
        for x, z in zip(*np.nonzero(slack < -tol)):
            if x < z and x != y and z != y:
                errors.append(TriangleViolation(int(x), y, int(z)))
    errors.sort(key=lambda e: getattr(e, "triple", ()))
    return errors


def validate_space(
    dist, boundary=None, labels=None, rtol: float = TRIANGLE_RTOL
) -> MarkedMetricSpace:
    """Build a space from a raw matrix, raising on any metric axiom violation.

    The raised :class:`MetricValidationError` carries the full list of
    violations in ``.errors``.
    """
    d = np.asarray(dist, dtype=float)
    errors = find_violations(d, rtol)
    if errors:
        raise MetricValidationError(errors)
    if boundary is None:
        boundary = np.zeros(d.shape[0], dtype=bool)
    d = 0.5 * (d + d.T)
    np.fill_diagonal(d, 0.0)
    return MarkedMetricSpace(d, np.asarray(boundary, dtype=bool), labels)


def from_points(points, boundary=None, labels=None) -> MarkedMetricSpace:
    """Euclidean marked space on a point cloud."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    d = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1))
    if boundary is None:
        boundary = np.zeros(len(pts), dtype=bool)
    return MarkedMetricSpace(d, np.asarray(boundary, dtype=bool), labels)


def _check_same_owner(*subsets: PointSubset):
    owner = subsets[0].owner
    for s in subsets[1:]:
        if s.owner is not owner:
            raise OwnerMismatch("subsets belong to different spaces")
    for s in subsets:
        if not s.members:
            raise EmptySubset("distance to an empty subset is undefined")


def neighborhood(space: MarkedMetricSpace, A: PointSubset, eps: float) -> PointSubset:
    """Closed ``eps``-neighborhood ``{x : d(x, a) <= eps for some a in A}``."""
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    if not A.members:
        raise EmptySubset("neighborhood of an empty subset")
    if A.owner is not space:
        raise OwnerMismatch("subset does not belong to this space")
    near = (space.dist[A.index] <= eps).any(axis=0)
    return PointSubset(space, frozenset(np.flatnonzero(near).tolist()) | A.members)


def directed_hausdorff(dist: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    """``sup_{x in a} d(x, b)`` for index arrays into ``dist``."""
    return float(dist[np.ix_(a, b)].min(axis=1).max())


def hausdorff(space: MarkedMetricSpace, A: PointSubset, B: PointSubset) -> float:
    _check_same_owner(A, B)
    if A.owner is not space:
        raise OwnerMismatch("subsets do not belong to this space")
    a, b = A.index, B.index
    return max(directed_hausdorff(space.dist, a, b), directed_hausdorff(space.dist, b, a))


def hausdorff_with_boundary(
    space: MarkedMetricSpace, X1: MarkedSubspace, X2: MarkedSubspace
) -> float:
    for part in (X1.interior, X1.boundary, X2.interior, X2.boundary):
        if not part.members:
            raise EmptyPart("both subspaces need nonempty interior and boundary parts")
    return hausdorff(space, X1.interior, X2.interior) + hausdorff(space, X1.boundary, X2.boundary)


@dataclass(frozen=True)
class NetSeparation:
    net: int
    sep: int
    exact: bool


def _min_cover(masks: list[int], full: int) -> int:
    n = len(masks)
    best = [n]

    def rec(covered: int, used: int):
        if covered == full:
            best[0] = min(best[0], used)
            return
        if used + 1 >= best[0]:
            return
        # lowest uncovered point must be covered by one of its own ball centers
        low = (~covered & full) & -(~covered & full)
        j = low.bit_length() - 1
        cands = [c for c in range(n) if masks[c] >> j & 1]
        cands.sort(key=lambda c: -bin(masks[c] & ~covered).count("1"))
        for c in cands:
            rec(covered | masks[c], used + 1)

    rec(0, 0)
    return best[0]


def _max_independent(conflict: list[int], full: int) -> int:
    best = [0]

    def rec(avail: int, size: int):
        if avail == 0:
            best[0] = max(best[0], size)
            return
        if size + bin(avail).count("1") <= best[0]:
            return
        low = avail & -avail
        j = low.bit_length() - 1
        rec(avail & ~conflict[j] & ~low, size + 1)
        rec(avail & ~low, size)

    rec(full, 0)
    return best[0]


def net_and_separation(space: MarkedMetricSpace, eps: float) -> NetSeparation:
    """Minimal ``eps``-net size and maximal ``eps``-separated size.

    Exact for ``n <= 20``.  Beyond that ``net`` is a greedy upper bound and
    ``sep`` a greedy lower bound, and ``exact`` is False.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    d = space.dist
    n = space.n
    if n == 0:
        return NetSeparation(0, 0, True)
    covers = d <= eps
    too_close = d < eps
    np.fill_diagonal(too_close, False)
    if n <= EXACT_NET_LIMIT:
        full = (1 << n) - 1
        masks = [sum(1 << int(j) for j in np.flatnonzero(covers[i])) for i in range(n)]
        conflict = [sum(1 << int(j) for j in np.flatnonzero(too_close[i])) for i in range(n)]
        return NetSeparation(_min_cover(masks, full), _max_independent(conflict, full), True)

    uncovered = np.ones(n, dtype=bool)
    net = 0
    while uncovered.any():
        gain = (covers & uncovered[None, :]).sum(axis=1)
        c = int(np.argmax(gain))
        uncovered &= ~covers[c]
        net += 1
    avail = np.ones(n, dtype=bool)
    sep = 0
    degree = too_close.sum(axis=1)
    for i in np.argsort(degree, kind="stable"):
        if avail[i]:
            sep += 1
            avail &= ~too_close[i]
            avail[i] = False
    return NetSeparation(net, sep, False)


def load_space(path) -> MarkedMetricSpace:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"line {exc.lineno}", exc.msg) from None
    return MarkedMetricSpace.from_dict(data)


def save_space(space: MarkedMetricSpace, path) -> None:
    Path(path).write_text(json.dumps(space.to_dict()) + "\n")

