"""Gromov-Hausdorff distance with boundary via correspondences.

For marked spaces ``X`` and ``Y`` the boundary-aware GH distance satisfies
``m/2 <= d_GHB(X, Y) <= m`` where ``m`` is the least distortion over
correspondences whose interior-interior part covers both interiors and whose
boundary-boundary part covers both boundaries.  Everything here works with
that bracket and never reports a single value as the distance.

Unmarked spaces go through the same machinery with a single point class, in
which case ``d_GH = m/2`` exactly.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    EmptyBoundary,
    EmptyPart,
    InvalidCorrespondence,
    SizeCapExceeded,
)
from .metric_core import MarkedMetricSpace

EXACT_CAP = 14
COOLING = 0.995
# initial temperature as a fraction of the larger diameter
T0_FRAC = 0.15
# enumerate minimal boundary correspondences only while this is cheap
ANCHOR_ENUM_LIMIT = 256
PROFILE_WORK_LIMIT = 3e7


@dataclass(frozen=True)
class Correspondence:
    pairs: frozenset

    def __init__(self, pairs):
        object.__setattr__(self, "pairs", frozenset((int(i), int(j)) for i, j in pairs))

    def __len__(self):
        return len(self.pairs)

    def sorted_pairs(self) -> list[tuple[int, int]]:
        return sorted(self.pairs)

    def kinds(self, X: MarkedMetricSpace, Y: MarkedMetricSpace) -> dict:
        """Map each pair to 'interior', 'boundary' or 'mixed'."""
        out = {}
        for i, j in self.pairs:
            bx, by = X.boundary[i], Y.boundary[j]
            out[(i, j)] = "mixed" if bx != by else ("boundary" if bx else "interior")
        return out


@dataclass(frozen=True)
class GhbBracket:
    lower: float
    upper: float
    method: str
    optimal_corr: Correspondence | None = field(default=None, compare=False)

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lower + self.upper)

    def to_dict(self) -> dict:
        pairs = [] if self.optimal_corr is None else self.optimal_corr.sorted_pairs()
        return {
            "lower": float(self.lower),
            "upper": float(self.upper),
            "method": self.method,
            "witness": [list(p) for p in pairs],
        }


def check_correspondence(R: Correspondence, X: MarkedMetricSpace, Y: MarkedMetricSpace) -> None:
    """Raise :class:`InvalidCorrespondence` unless all four projections are onto."""
    ii = [(i, j) for i, j in R.pairs if not X.boundary[i] and not Y.boundary[j]]
    bb = [(i, j) for i, j in R.pairs if X.boundary[i] and Y.boundary[j]]
    for i, j in R.pairs:
        if not (0 <= i < X.n and 0 <= j < Y.n):
            raise InvalidCorrespondence(f"pair ({i}, {j}) out of range", (i, j))
    for name, part, side, want in (
        ("interior of X", ii, 0, X.interior_idx),
        ("interior of Y", ii, 1, Y.interior_idx),
        ("boundary of X", bb, 0, X.boundary_idx),
        ("boundary of Y", bb, 1, Y.boundary_idx),
    ):
        hit = {p[side] for p in part}
        missing = [int(k) for k in want if k not in hit]
        if missing:
            raise InvalidCorrespondence(f"{name} point {missing[0]} is not covered", (side, missing[0]))


def _dis(DX, DY, xs, ys) -> float:
    xs = np.asarray(xs, dtype=int)
    ys = np.asarray(ys, dtype=int)
    if xs.size == 0:
        return 0.0
    return float(np.abs(DX[np.ix_(xs, xs)] - DY[np.ix_(ys, ys)]).max())


def distortion(R: Correspondence, X: MarkedMetricSpace, Y: MarkedMetricSpace, check: bool = True) -> float:
    if check:
        check_correspondence(R, X, Y)
    pairs = R.sorted_pairs()
    return _dis(X.dist, Y.dist, [p[0] for p in pairs], [p[1] for p in pairs])


# ---------------------------------------------------------------------------
# lower bounds


def _profile_hausdorff(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Hausdorff distance between the value sets of each row of A and each row of B.

    Returns an ``(len(A), len(B))`` matrix.
    """
    out = np.empty((A.shape[0], B.shape[0]))
    Bs = np.sort(B, axis=1)
    As = np.sort(A, axis=1)
    for i in range(A.shape[0]):
        # |a - b| for every value a of row i and every value b of every row of B
        diff = np.abs(As[i][None, :, None] - Bs[:, None, :])
        out[i] = np.maximum(diff.min(axis=2).max(axis=1), diff.min(axis=1).max(axis=1))
    return out


def _pair_costs(DX, DY, tx, ty, anchors=()) -> np.ndarray:
    """Lower bound on dis(R) for every R containing the pair (x, y).

    Infinite where the point classes differ.
    """
    nx, ny = len(DX), len(DY)
    cost = np.zeros((nx, ny))
    for k in np.union1d(np.unique(tx), np.unique(ty)):
        mx, my = tx == k, ty == k
        if not mx.any() or not my.any():
            continue
        A, B = DX[:, mx], DY[:, my]
        if nx * ny * A.shape[1] * B.shape[1] <= PROFILE_WORK_LIMIT:
            c = _profile_hausdorff(A, B)
        else:
            c = np.abs(A.max(axis=1)[:, None] - B.max(axis=1)[None, :])
        np.maximum(cost, c, out=cost)
    for a, b in anchors:
        np.maximum(cost, np.abs(DX[:, a][:, None] - DY[:, b][None, :]), out=cost)
    cost[tx[:, None] != ty[None, :]] = np.inf
    return cost


def _cover_bound(cost, tx, ty) -> float:
    lb = 0.0
    for k in np.union1d(np.unique(tx), np.unique(ty)):
        sub = cost[np.ix_(tx == k, ty == k)]
        if sub.size == 0:
            continue
        lb = max(lb, float(sub.min(axis=1).max()), float(sub.min(axis=0).max()))
    return lb


def _min_correspondences(xs, ys):
    """Minimal-candidate correspondences between two small index sets.

    Every correspondence contains the union of the graph of some map
    ``xs -> ys`` and the transposed graph of some map ``ys -> xs``.
    """
    seen = set()
    for f in itertools.product(ys, repeat=len(xs)):
        for g in itertools.product(xs, repeat=len(ys)):
            R = frozenset(zip(xs, f)) | frozenset(zip(g, ys))
            if R not in seen:
                seen.add(R)
                yield sorted(R)


def _distortion_lower_bound(DX, DY, tx, ty, anchors=()) -> float:
    lb = _dis(DX, DY, [a for a, _ in anchors], [b for _, b in anchors])
    cost = _pair_costs(DX, DY, tx, ty, anchors)
    return max(lb, _cover_bound(cost, tx, ty))


def _classes(X: MarkedMetricSpace) -> np.ndarray:
    return X.boundary.astype(int)


def min_distortion_lower_bound(X: MarkedMetricSpace, Y: MarkedMetricSpace, marked: bool = True, anchors=()) -> float:
    """A certified lower bound on the least distortion of a correspondence.

    With ``marked`` the correspondence must respect the interior/boundary
    split; with small boundaries every minimal boundary-boundary part is
    enumerated and used as an anchor set.  ``anchors`` pins pairs that every
    correspondence must contain.
    """
    DX, DY = X.dist, Y.dist
    if not marked:
        t0x, t0y = np.zeros(X.n, int), np.zeros(Y.n, int)
        return _distortion_lower_bound(DX, DY, t0x, t0y, anchors)
    tx, ty = _classes(X), _classes(Y)
    base = _distortion_lower_bound(DX, DY, tx, ty, anchors)
    bx, by = X.boundary_idx.tolist(), Y.boundary_idx.tolist()
    if not bx or not by:
        return base
    combos = len(by) ** len(bx) * len(bx) ** len(by)
    if combos > ANCHOR_ENUM_LIMIT:
        return base
    cost0 = _pair_costs(DX, DY, tx, ty, anchors)
    best = math.inf
    for RB in _min_correspondences(bx, by):
        lb = _dis(DX, DY, [a for a, _ in RB], [b for _, b in RB])
        if lb >= best:
            continue
        cost = cost0.copy()
        for a, b in RB:
            np.maximum(cost, np.abs(DX[:, a][:, None] - DY[:, b][None, :]), out=cost)
        lb = max(lb, _cover_bound(cost, tx, ty))
        best = min(best, lb)
    return max(base, best)


# ---------------------------------------------------------------------------
# exact search


def _branch_and_bound(DX, DY, tx, ty, anchors=(), lower=0.0, upper=math.inf):
    """Least distortion over class-respecting correspondences containing ``anchors``.

    Returns ``(value, pairs)``.  Points are visited by decreasing
    eccentricity (ties by side, then index); each uncovered point branches
    over its same-class partners in increasing order of added distortion.
    """
    nx, ny = len(DX), len(DY)
    dx, dy = DX.tolist(), DY.tolist()
    cand = (
        [[j for j in range(ny) if ty[j] == tx[i]] for i in range(nx)],
        [[i for i in range(nx) if tx[i] == ty[j]] for j in range(ny)],
    )
    pairs = []
    cover = ([0] * nx, [0] * ny)
    for a, b in anchors:
        pairs.append((a, b))
        cover[0][a] += 1
        cover[1][b] += 1
    start = _dis(DX, DY, [a for a, _ in anchors], [b for _, b in anchors])
    ecc = (DX.max(axis=1) if nx else [], DY.max(axis=1) if ny else [])
    slots = [(0, i) for i in range(nx)] + [(1, j) for j in range(ny)]
    slots.sort(key=lambda s: (-ecc[s[0]][s[1]], s[0], s[1]))
    best = [upper, None]

    def rec(k, cur):
        while k < len(slots) and cover[slots[k][0]][slots[k][1]]:
            k += 1
        if k == len(slots):
            if cur < best[0] or best[1] is None:
                best[0], best[1] = cur, list(pairs)
            return
        side, i = slots[k]
        opts = []
        for j in cand[side][i]:
            x, y = (i, j) if side == 0 else (j, i)
            rx, ry = dx[x], dy[y]
            c = cur
            for a, b in pairs:
                v = rx[a] - ry[b]
                if v < 0:
                    v = -v
                if v > c:
                    c = v
                    if c >= best[0]:
                        break
            if c < best[0] or (best[1] is None and c <= best[0]):
                opts.append((c, j))
        opts.sort()
        for c, j in opts:
            if best[1] is not None and c >= best[0]:
                break
            x, y = (i, j) if side == 0 else (j, i)
            pairs.append((x, y))
            cover[0][x] += 1
            cover[1][y] += 1
            rec(k + 1, c)
            pairs.pop()
            cover[0][x] -= 1
            cover[1][y] -= 1
            if best[1] is not None and best[0] <= lower:
                return

    rec(0, start)
    return best[0], best[1]


def _require_parts(X: MarkedMetricSpace, Y: MarkedMetricSpace):
    if not X.boundary.any() or not Y.boundary.any():
        raise EmptyBoundary("correspondences with boundary need nonempty boundaries on both sides")
    if X.boundary.all() or Y.boundary.all():
        raise EmptyPart("correspondences with boundary need nonempty interiors on both sides")


def ghb_exact(X: MarkedMetricSpace, Y: MarkedMetricSpace, cap: int = EXACT_CAP) -> GhbBracket:
    """Exact least distortion ``m`` by branch and bound; bracket ``[m/2, m]``."""
    _require_parts(X, Y)
    if X.n + Y.n > cap:
        raise SizeCapExceeded(f"|X|+|Y| = {X.n + Y.n} exceeds {cap}; use ghb_heuristic")
    lb = min_distortion_lower_bound(X, Y)
    m, pairs = _branch_and_bound(X.dist, Y.dist, _classes(X), _classes(Y), lower=lb)
    return GhbBracket(m / 2, m, "exact", Correspondence(pairs))


def gh_bracket(
    X: MarkedMetricSpace,
    Y: MarkedMetricSpace,
    anchors=(),
    cap: int = EXACT_CAP,
    budget: int = 2000,
    seed: int = 0,
    init=None,
) -> GhbBracket:
    """Bracket on the ordinary GH distance of the unmarked spaces.

    ``anchors`` restricts to correspondences containing the given pairs
    (used for base-point-pinned comparisons).  Exact when ``|X|+|Y| <= cap``,
    in which case both ends equal ``m/2``.  Equal spaces with diagonal
    anchors start the search from the identity.
    """
    if X.n == 0 and Y.n == 0:
        return GhbBracket(0.0, 0.0, "exact", Correspondence([]))
    if X.n == 0 or Y.n == 0:
        return GhbBracket(math.inf, math.inf, "exact", None)
    tx, ty = np.zeros(X.n, int), np.zeros(Y.n, int)
    anchors = [tuple(map(int, a)) for a in anchors]
    lb = max(_distortion_lower_bound(X.dist, Y.dist, tx, ty, anchors), abs(X.diam - Y.diam))
    if X.n + Y.n <= cap:
        m, pairs = _branch_and_bound(X.dist, Y.dist, tx, ty, anchors, lower=lb)
        return GhbBracket(m / 2, m / 2, "exact", Correspondence(pairs))
    if init is None and np.array_equal(X.dist, Y.dist) and all(a == b for a, b in anchors):
        init = (np.arange(X.n), np.arange(Y.n))
    up, pairs = _anneal(X.dist, Y.dist, tx, ty, budget, seed, restarts=1, init=init, anchors=anchors)
    return GhbBracket(min(lb, up) / 2, up / 2, "heuristic", Correspondence(pairs))


# ---------------------------------------------------------------------------
# heuristic search


class _State:
    """Pair list of a correspondence built from two partner maps.

    Slot ``k < nx`` holds ``(k, f[k])``; slot ``nx + j`` holds ``(g[j], j)``.
    Row maxima of the pairwise distortion matrix are kept current under
    single-slot changes.
    """

    def __init__(self, DX, DY, px, py):
        self.DX, self.DY = DX, DY
        self.px, self.py = np.array(px), np.array(py)
        self.M = np.abs(DX[np.ix_(self.px, self.px)] - DY[np.ix_(self.py, self.py)])
        self.rowmax = self.M.max(axis=1)

    def trial(self, k, x, y):
        row = np.abs(self.DX[x, self.px] - self.DY[y, self.py])
        row[k] = 0.0
        old = self.M[:, k]
        rm = np.maximum(self.rowmax, row)
        drop = (row < old) & (old >= self.rowmax)
        drop[k] = False
        if drop.any():
            idx = np.flatnonzero(drop)
            sub = self.M[idx].copy()
            sub[:, k] = row[idx]
            rm[idx] = sub.max(axis=1)
        rm[k] = row.max()
        return row, rm

    def commit(self, k, x, y, row, rm):
        self.px[k], self.py[k] = x, y
        self.M[k, :] = row
        self.M[:, k] = row
        self.rowmax = rm

    def snapshot(self, k):
        return k, self.px[k], self.py[k], self.M[k].copy(), self.rowmax.copy()

    def restore(self, snap):
        k, x, y, row, rm = snap
        self.commit(k, x, y, row, rm)


def _energy(rm):
    return rm.max() + 0.1 * rm.mean()


def _anneal(DX, DY, tx, ty, budget, seed, restarts=5, init=None, anchors=()):
    """Simulated annealing over partner maps; returns (distortion, pairs).

    A move reassigns one slot, and half the time also points the partner
    slot back so the new pair lands in both maps.  Temperature starts at
    ``T0_FRAC`` times the larger diameter and cools by ``COOLING`` once per
    sweep over the free slots.
    """
    rng = np.random.default_rng(seed)
    nx, ny = len(DX), len(DY)
    cx = [np.flatnonzero(ty == tx[i]) for i in range(nx)]
    cy = [np.flatnonzero(tx == ty[j]) for j in range(ny)]
    fixed_x = {a: b for a, b in anchors}
    fixed_y = {b: a for a, b in anchors}
    scale = max(float(DX.max()) if nx else 0.0, float(DY.max()) if ny else 0.0, 1e-12)
    free = [k for k in range(nx) if k not in fixed_x] + [nx + j for j in range(ny) if j not in fixed_y]
    fixed_slots = set(range(nx + ny)) - set(free)
    anchor_px = [a for a, _ in anchors]
    anchor_py = [b for _, b in anchors]

    def pairs_of(st):
        pairs = set(zip(st.px.tolist(), st.py.tolist()))
        return sorted(pairs)

    best_val, best_pairs = math.inf, None
    for r in range(restarts):
        if r == 0 and init is not None:
            f, g = np.asarray(init[0]).copy(), np.asarray(init[1]).copy()
        else:
            f = np.array([rng.choice(cx[i]) for i in range(nx)], dtype=int)
            g = np.array([rng.choice(cy[j]) for j in range(ny)], dtype=int)
        for a, b in anchors:
            f[a], g[b] = b, a
        px = np.concatenate([np.arange(nx), g, anchor_px]).astype(int)
        py = np.concatenate([f, np.arange(ny), anchor_py]).astype(int)
        st = _State(DX, DY, px, py)
        e = _energy(st.rowmax)
        cur_best = float(st.rowmax.max())
        if cur_best < best_val:
            best_val, best_pairs = cur_best, pairs_of(st)
        T = T0_FRAC * scale
        sweep = max(1, len(free))
        for it in range(budget if free else 0):
            if best_val == 0.0:
                break
            if it and it % sweep == 0:
                T *= COOLING
            k = free[rng.integers(len(free))]
            if k < nx:
                x, y = k, int(cx[k][rng.integers(len(cx[k]))])
                mate = nx + y
            else:
                x, y = int(cy[k - nx][rng.integers(len(cy[k - nx]))]), k - nx
                mate = x
            moves = []
            if (x, y) != (st.px[k], st.py[k]):
                moves.append(k)
            # coupled move: the partner slot points back, so (x, y) sits in both maps
            if mate not in fixed_slots and (x, y) != (st.px[mate], st.py[mate]) and rng.random() < 0.5:
                moves.append(mate)
            if not moves:
                continue
            snap = None
            for i, slot in enumerate(moves):
                row, rm = st.trial(slot, x, y)
                if i + 1 < len(moves):
                    snap = st.snapshot(slot)
                    st.commit(slot, x, y, row, rm)
            e_new = _energy(rm)
            if e_new <= e or rng.random() < math.exp(-(e_new - e) / max(T, 1e-300)):
                st.commit(moves[-1], x, y, row, rm)
                e = e_new
                v = float(rm.max())
                if v < best_val:
                    best_val, best_pairs = v, pairs_of(st)
            elif snap is not None:
                st.restore(snap)
    # recompute on the deduplicated pair set so the reported value is exact
    xs = [p[0] for p in best_pairs]
    ys = [p[1] for p in best_pairs]
    return _dis(DX, DY, xs, ys), best_pairs


def ghb_heuristic(
    X: MarkedMetricSpace,
    Y: MarkedMetricSpace,
    budget: int = 2000,
    seed: int = 0,
    restarts: int = 5,
    init=None,
) -> GhbBracket:
    """Annealed upper bound with a certified lower bound.

    ``budget`` is the iteration count per restart.  ``init`` optionally
    gives starting partner maps ``(f, g)`` with ``f: X -> Y`` and
    ``g: Y -> X``; the first restart begins there (at the identity when
    the two spaces are equal).  The lower end is the
    larger of half the distortion lower bound and
    :func:`gh_boundary_lower_bound`.
    """
    _require_parts(X, Y)
    if budget < 1:
        raise ValueError("budget must be at least 1")
    tx, ty = _classes(X), _classes(Y)
    if init is None and X == Y:
        init = (np.arange(X.n), np.arange(Y.n))
    up, pairs = _anneal(X.dist, Y.dist, tx, ty, budget, seed, restarts, init)
    lb = max(min_distortion_lower_bound(X, Y) / 2, gh_boundary_lower_bound(X, Y))
    return GhbBracket(min(lb, up), up, "heuristic", Correspondence(pairs))


def gh_lower_bound(X: MarkedMetricSpace, Y: MarkedMetricSpace, anchors=(), cap: int = EXACT_CAP) -> float:
    """Lower bound on the GH distance of the unmarked spaces (exact below ``cap``)."""
    if X.n == 0 or Y.n == 0:
        return 0.0 if X.n == Y.n else math.inf
    tx, ty = np.zeros(X.n, int), np.zeros(Y.n, int)
    anchors = [tuple(map(int, a)) for a in anchors]
    lb = max(_distortion_lower_bound(X.dist, Y.dist, tx, ty, anchors), abs(X.diam - Y.diam))
    if X.n + Y.n <= cap:
        lb, _ = _branch_and_bound(X.dist, Y.dist, tx, ty, anchors, lower=lb)
    return lb / 2


def gh_boundary_lower_bound(X: MarkedMetricSpace, Y: MarkedMetricSpace, cap: int = EXACT_CAP) -> float:
    """Lower bound on d_GHB from GH distances of completions and of boundaries.

    A side with an empty boundary contributes nothing to the boundary term.
    """
    total = gh_lower_bound(X.unmarked(), Y.unmarked(), cap=cap)
    bX, bY = X.boundary_idx, Y.boundary_idx
    if bX.size and bY.size:
        total += gh_lower_bound(X.subspace(bX).unmarked(), Y.subspace(bY).unmarked(), cap=cap)
    return total


# ---------------------------------------------------------------------------
# maps


@dataclass(frozen=True)
class EpsIsometry:
    eps: float
    distortion: float
    cover: float
    boundary_cover: float

    def to_dict(self) -> dict:
        return {k: float(v) for k, v in self.__dict__.items()}


def check_eps_isometry_with_boundary(f, X: MarkedMetricSpace, Y: MarkedMetricSpace) -> EpsIsometry:
    """Least ``eps`` for which ``f`` is an eps-isometry with boundary."""
    f = np.asarray(f, dtype=int)
    if f.shape != (X.n,):
        raise ValueError(f"map must assign an image to each of the {X.n} points")
    dis = float(np.abs(Y.dist[np.ix_(f, f)] - X.dist).max()) if X.n else 0.0

    def defect(targets, sources):
        if targets.size == 0:
            return 0.0
        if sources.size == 0:
            return math.inf
        return float(Y.dist[np.ix_(targets, f[sources])].min(axis=1).max())

    cover = defect(Y.interior_idx, X.interior_idx)
    bcover = defect(Y.boundary_idx, X.boundary_idx)
    return EpsIsometry(max(dis, cover, bcover), dis, cover, bcover)


def induced_map(R: Correspondence, X: MarkedMetricSpace, Y: MarkedMetricSpace) -> np.ndarray:
    """A map X -> Y choosing, for each point, its smallest same-class partner."""
    f = np.full(X.n, -1, dtype=int)
    for i, j in R.sorted_pairs():
        if f[i] < 0 and X.boundary[i] == Y.boundary[j]:
            f[i] = j
    for i, j in R.sorted_pairs():
        if f[i] < 0:
            f[i] = j
    if (f < 0).any():
        raise InvalidCorrespondence("correspondence leaves a point of X unpaired", (0, int(np.flatnonzero(f < 0)[0])))
    return f
