"""Domain-sequence generators and convergence experiments.

Each experiment discretizes a sequence of planar domains, measures the
relevant metric quantity on every member and on a limit member (the
unperturbed domain at the finest mesh), and turns the expected behavior
into explicit checks.  Upper bounds on Gromov-Hausdorff type distances
come from coordinate-alignment correspondences, optionally improved by
annealing; lower bounds come from the ghb module.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property

import numpy as np
from scipy.spatial import cKDTree

from . import conformal
from .conformal import PointCloud, build_domain_graph, deepest_node
from .errors import BudgetExceeded, MeshMisaligned, MeshTooCoarse, SpecInvalid
from .ghb import (
    GhbBracket,
    _dis,
    gh_boundary_lower_bound,
    gh_bracket,
    ghb_heuristic,
    min_distortion_lower_bound,
)
from .hyperbolicity import PointedSpace, epsilon0, four_point_delta, rough_starlike_constant
from .metric_core import MarkedMetricSpace, from_points

REPORT_VERSION = 1
FAMILIES = (
    "slit_square",
    "punctured_square",
    "perturbed_square",
    "perturbed_disk",
    "shrinking_annulus",
    "constant",
)
EXPERIMENTS = (
    "T1_delta",
    "T1_starlike",
    "T2_uniformized",
    "T4_quasihyperbolic",
    "U_completeness",
    "counterexample_ghb",
)
# connection radius in units of the mesh: keeps the 8-neighbor stencil
# under the mild vertical stretch of the perturbed squares
RADIUS_FACTOR = 1.5
FRONTIER_FACTOR = 1.5
SET_TOL_FACTOR = 4.0
REL_TOL = 0.10
ZERO = 1e-12
BALL_RADII = (1.0, 2.0, 4.0)
COUNTEREXAMPLE_FLOOR = 0.2

DEFAULT_PARAMS = {
    "perturbed_square": {"amplitude": 0.2},
    "perturbed_disk": {"amplitude": 0.05},
    "shrinking_annulus": {"r0": 0.5, "r_out": 1.0},
    "slit_square": {},
    "punctured_square": {},
    "constant": {},
}


# ---------------------------------------------------------------------------
# generators


def _grid_count(mesh: float, span: float = 1.0) -> int:
    k = span / mesh
    if mesh <= 0 or abs(k - round(k)) > 1e-9:
        raise MeshMisaligned(f"mesh {mesh} does not divide {span}")
    return int(round(k))


def _square_grid(mesh: float) -> np.ndarray:
    N = _grid_count(mesh)
    ax = np.arange(N + 1) / N
    u, v = np.meshgrid(ax, ax, indexing="ij")
    return np.column_stack([u.ravel(), v.ravel()])


def _on_frame(p: np.ndarray) -> np.ndarray:
    return np.any(np.isclose(p, 0.0) | np.isclose(p, 1.0), axis=1)


def generate_slit_square(n: int, mesh: float) -> PointCloud:
    """Open unit square with ``n - 1`` slits ``[1/2, 1) x {k/n}``.

    Slit grid points are boundary samples (standing for both slit sides).
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if mesh > 1 / (4 * n) + 1e-15:
        raise MeshTooCoarse(f"mesh {mesh} exceeds 1/(4n) = {1 / (4 * n)}")
    try:
        _grid_count(mesh, 1 / n)
        _grid_count(mesh, 0.5)
    except MeshMisaligned as exc:
        raise MeshTooCoarse(str(exc)) from None
    p = _square_grid(mesh)
    bd = _on_frame(p)
    for k in range(1, n):
        bd |= np.isclose(p[:, 1], k / n) & (p[:, 0] >= 0.5 - 1e-12)
    return PointCloud(p, bd, p.copy(), {"family": "slit_square", "n": n, "mesh": mesh})


def generate_punctured_square(variant: str, mesh: float) -> PointCloud:
    """Closed unit square whose only boundary points are two punctures.

    ``mid`` punctures ``(1/2, 0)`` and ``(1/2, 1)``; ``corner`` punctures
    ``(1, 0)`` and ``(1, 1)``.
    """
    if variant not in ("mid", "corner"):
        raise ValueError(f"variant must be 'mid' or 'corner', got {variant!r}")
    _grid_count(mesh, 0.5)
    p = _square_grid(mesh)
    x0 = 0.5 if variant == "mid" else 1.0
    bd = np.isclose(p[:, 0], x0) & (np.isclose(p[:, 1], 0.0) | np.isclose(p[:, 1], 1.0))
    return PointCloud(p, bd, p.copy(), {"family": "punctured_square", "variant": variant, "mesh": mesh})


def generate_perturbed_square(amplitude: float, mesh: float) -> PointCloud:
    """Square with top edge ``y = 1 + a sin(pi x)``, sampled by stretching a grid.

    The reference coordinates are the unstretched grid positions.  For
    ``a >= 0`` the domain is convex, so its Euclidean metric is a length
    metric.
    """
    if amplitude < 0:
        raise ValueError("amplitude must be nonnegative")
    ref = _square_grid(mesh)
    pts = ref.copy()
    pts[:, 1] *= 1 + amplitude * np.sin(np.pi * ref[:, 0])
    return PointCloud(pts, _on_frame(ref), ref, {"family": "perturbed_square", "amplitude": amplitude, "mesh": mesh})


def _disk_grid(radius: float, mesh: float) -> np.ndarray:
    N = int(math.ceil(radius / mesh))
    ax = np.arange(-N, N + 1) * mesh
    u, v = np.meshgrid(ax, ax, indexing="ij")
    return np.column_stack([u.ravel(), v.ravel()])


def _circle(radius: float, mesh: float) -> np.ndarray:
    k = max(8, int(math.ceil(2 * math.pi * radius / mesh)))
    t = 2 * math.pi * np.arange(k) / k
    return radius * np.column_stack([np.cos(t), np.sin(t)])


def generate_perturbed_disk(amplitude: float, mesh: float, radius: float = 1.0) -> PointCloud:
    """Disk whose radius in direction ``theta`` is ``radius (1 + a cos(4 theta))``.

    Samples are a square grid and a boundary circle pushed radially; the
    reference coordinates are the unperturbed positions.  Convex for
    ``a < 1/15``.
    """
    if amplitude < 0:
        raise ValueError("amplitude must be nonnegative")
    g = _disk_grid(radius, mesh)
    g = g[np.linalg.norm(g, axis=1) < radius - 0.5 * mesh]
    ref = np.vstack([g, _circle(radius, mesh)])
    bd = np.r_[np.zeros(len(g), bool), np.ones(len(ref) - len(g), bool)]
    theta = np.arctan2(ref[:, 1], ref[:, 0])
    pts = ref * (1 + amplitude * np.cos(4 * theta))[:, None]
    meta = {"family": "perturbed_disk", "amplitude": amplitude, "mesh": mesh, "radius": radius}
    return PointCloud(pts, bd, ref, meta)


def generate_annulus(r_in: float, r_out: float, mesh: float) -> PointCloud:
    """Annulus ``r_in < |z| < r_out``; with ``r_in = 0`` the disk punctured at the origin."""
    if not 0 <= r_in < r_out:
        raise ValueError("need 0 <= r_in < r_out")
    g = _disk_grid(r_out, mesh)
    r = np.linalg.norm(g, axis=1)
    g = g[(r > r_in + 0.5 * mesh) & (r < r_out - 0.5 * mesh)]
    inner = _circle(r_in, mesh) if r_in > 0 else np.zeros((1, 2))
    bpts = np.vstack([inner, _circle(r_out, mesh)])
    pts = np.vstack([g, bpts])
    bd = np.r_[np.zeros(len(g), bool), np.ones(len(bpts), bool)]
    return PointCloud(pts, bd, pts.copy(), {"family": "annulus", "r_in": r_in, "r_out": r_out, "mesh": mesh})


def cloud_space(cloud: PointCloud) -> MarkedMetricSpace:
    """Euclidean marked space on all samples, boundary samples marked."""
    return from_points(cloud.points, cloud.boundary)


# ---------------------------------------------------------------------------
# sequence specification


def parse_mesh(text) -> float:
    return float(Fraction(str(text).strip()))


@dataclass(frozen=True)
class DomainSequenceSpec:
    """A family of domains indexed by ``indices[0]..indices[1]``, one mesh per index."""

    family: str
    indices: tuple[int, int]
    meshes: tuple[float, ...]
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise SpecInvalid(f"unknown family {self.family!r}; choose from {', '.join(FAMILIES)}")
        a, b = (int(v) for v in self.indices)
        if a > b:
            raise SpecInvalid(f"empty index range {a}..{b}")
        meshes = tuple(float(m) for m in self.meshes)
        count = b - a + 1
        if len(meshes) == 1:
            meshes = meshes * count
        if len(meshes) != count:
            raise SpecInvalid(f"{len(meshes)} meshes for {count} indices")
        if any(not m > 0 for m in meshes):
            raise SpecInvalid("meshes must be positive")
        params = dict(DEFAULT_PARAMS[self.family])
        params.update(self.params)
        object.__setattr__(self, "indices", (a, b))
        object.__setattr__(self, "meshes", meshes)
        object.__setattr__(self, "params", params)

    @property
    def index_list(self) -> list[int]:
        return list(range(self.indices[0], self.indices[1] + 1))

    @property
    def finest(self) -> float:
        return min(self.meshes)

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "indices": list(self.indices),
            "meshes": list(self.meshes),
            "params": self.params,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DomainSequenceSpec":
        try:
            return cls(data["family"], tuple(data["indices"]), tuple(data["meshes"]), data.get("params", {}), int(data.get("seed", 0)))
        except KeyError as exc:
            raise SpecInvalid(f"missing field {exc.args[0]!r}") from None


def _amplitude(spec: DomainSequenceSpec, index: int | None) -> float:
    return 0.0 if index is None else spec.params["amplitude"] * 2.0 ** (-index)


def member_cloud(spec: DomainSequenceSpec, index: int | None, mesh: float) -> PointCloud:
    """The family member at ``index``; ``index=None`` is the limit domain."""
    fam, prm = spec.family, spec.params
    if fam == "perturbed_square":
        return generate_perturbed_square(_amplitude(spec, index), mesh)
    if fam == "perturbed_disk":
        return generate_perturbed_disk(_amplitude(spec, index), mesh)
    if fam == "shrinking_annulus":
        r_in = 0.0 if index is None else prm["r0"] * 2.0 ** (-index)
        return generate_annulus(r_in, prm["r_out"], mesh)
    if fam == "slit_square":
        return generate_slit_square(spec.indices[1] if index is None else index, mesh)
    if fam == "constant":
        return generate_perturbed_square(0.0, spec.finest)
    raise SpecInvalid(f"family {fam!r} has no sequence members")


def _is_length_family(spec: DomainSequenceSpec) -> bool:
    if spec.family in ("perturbed_square", "constant"):
        return True
    if spec.family == "perturbed_disk":
        return spec.params["amplitude"] < 1 / 15
    return False


class _Member:
    """A discretized domain with lazily computed metrics."""

    def __init__(self, label, mesh: float, cloud: PointCloud, max_allpairs: int):
        self.label = label
        self.mesh = mesh
        self.cloud = cloud
        self.graph = build_domain_graph(cloud, RADIUS_FACTOR * mesh)
        self.max_allpairs = max_allpairs

    @cached_property
    def base(self) -> int:
        return deepest_node(self.graph)

    @cached_property
    def frontier(self) -> np.ndarray:
        return self.graph.bdist <= FRONTIER_FACTOR * self.mesh * (1 + 1e-9)

    @cached_property
    def ref(self) -> np.ndarray:
        r = self.graph.ref
        return self.graph.coords if r is None else r

    @cached_property
    def k(self) -> np.ndarray:
        if self.graph.n > self.max_allpairs:
            raise BudgetExceeded(f"{self.graph.n} interior nodes exceed the all-pairs budget {self.max_allpairs}")
        return conformal.quasihyperbolic_metric(self.graph)

    def lattice(self, step: float) -> np.ndarray:
        q = self.ref / step
        return np.flatnonzero(np.all(np.abs(q - np.round(q)) < 1e-6, axis=1))


# ---------------------------------------------------------------------------
# alignment certificates


def align_maps(ref_x, cls_x, ref_y, cls_y) -> np.ndarray:
    """Map each x to the nearest y of the same class in reference coordinates."""
    f = np.full(len(ref_x), -1, dtype=int)
    for c in np.unique(cls_x):
        ys = np.flatnonzero(cls_y == c)
        xs = np.flatnonzero(cls_x == c)
        if ys.size == 0:
            raise ValueError(f"class {c} is empty on the target side")
        _, j = cKDTree(ref_y[ys]).query(ref_x[xs])
        f[xs] = ys[j]
    return f


def map_distortion(DX, DY, f, g) -> float:
    """Distortion of the correspondence ``graph(f) | graph(g)^T``."""
    pairs = sorted(set(zip(range(len(f)), f.tolist())) | set(zip(g.tolist(), range(len(g)))))
    return _dis(DX, DY, [p[0] for p in pairs], [p[1] for p in pairs])


def aligned_bracket(X: MarkedMetricSpace, Y: MarkedMetricSpace, ref_x, ref_y, marked: bool = True) -> dict:
    """Bracket from the alignment correspondence and the feature lower bound.

    Marked: ``[lb/2, dis]`` on d_GHB.  Unmarked: ``[lb/2, dis/2]`` on d_GH.
    """
    cx = X.boundary.astype(int) if marked else np.zeros(X.n, int)
    cy = Y.boundary.astype(int) if marked else np.zeros(Y.n, int)
    f = align_maps(ref_x, cx, ref_y, cy)
    g = align_maps(ref_y, cy, ref_x, cx)
    dis = map_distortion(X.dist, Y.dist, f, g)
    lb = min_distortion_lower_bound(X, Y, marked=marked)
    upper = dis if marked else dis / 2
    return {"lower": min(lb / 2, upper), "upper": upper}


def pointed_gh_ball_distance(
    X: PointedSpace,
    Y: PointedSpace,
    R: float,
    refs=None,
    budget: int = 300,
    seed: int = 0,
) -> GhbBracket:
    """GH bracket between closed R-balls about the base points, base pair pinned.

    ``refs`` optionally supplies reference coordinates for both spaces; the
    nearest-neighbor alignment then seeds the correspondence search.
    """
    if R <= 0:
        raise ValueError("R must be positive")
    DX, DY = _dist_of(X.space), _dist_of(Y.space)
    bx = np.flatnonzero(DX[X.base] <= R * (1 + 1e-12))
    by = np.flatnonzero(DY[Y.base] <= R * (1 + 1e-12))
    Xb = MarkedMetricSpace(DX[np.ix_(bx, bx)], np.zeros(bx.size, bool))
    Yb = MarkedMetricSpace(DY[np.ix_(by, by)], np.zeros(by.size, bool))
    anchor = (int(np.searchsorted(bx, X.base)), int(np.searchsorted(by, Y.base)))
    init = None
    if refs is not None:
        rx, ry = np.asarray(refs[0])[bx], np.asarray(refs[1])[by]
        zx, zy = np.zeros(bx.size, int), np.zeros(by.size, int)
        init = (align_maps(rx, zx, ry, zy), align_maps(ry, zy, rx, zx))
    return gh_bracket(Xb, Yb, anchors=[anchor], budget=budget, seed=seed, init=init)


def _dist_of(space) -> np.ndarray:
    if isinstance(space, MarkedMetricSpace):
        return space.dist
    return np.asarray(space, dtype=float)


# ---------------------------------------------------------------------------
# reports


@dataclass
class ExperimentReport:
    experiment: str
    spec: DomainSequenceSpec
    rows: list
    limit: dict
    tolerances: dict
    checks: list
    runtime: float = 0.0

    @property
    def verdict(self) -> str:
        return "pass" if all(c["passed"] for c in self.checks) else "fail"

    def to_dict(self, include_runtime: bool = False) -> dict:
        out = {
            "kind": "experiment_report",
            "version": REPORT_VERSION,
            "experiment": self.experiment,
            "spec": self.spec.to_dict(),
            "tolerances": self.tolerances,
            "rows": self.rows,
            "limit": self.limit,
            "checks": self.checks,
            "verdict": self.verdict,
        }
        if include_runtime:
            out["runtime_s"] = self.runtime
        return out

    def to_json(self) -> str:
        return json.dumps(_plain(self.to_dict()), sort_keys=True)

    def table(self) -> list[dict]:
        """One flat record per index for external plotting."""
        flat = []
        for row in self.rows:
            rec = {}
            _flatten(row, "", rec)
            flat.append(rec)
        return flat


def _flatten(obj, prefix, out):
    if isinstance(obj, dict):
        for k, v in obj.items():
            _flatten(v, f"{prefix}{k}.", out)
    else:
        out[prefix[:-1]] = obj


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _check(name: str, passed, detail: str) -> dict:
    return {"name": name, "passed": bool(passed), "detail": detail}


def _decreasing(vals) -> bool:
    """Strictly decreasing, except that values already at zero may stay there."""
    return all(b < a or (a <= ZERO and b <= ZERO) for a, b in zip(vals[:-1], vals[1:]))


def _fmt(vals) -> str:
    return "[" + ", ".join(f"{v:.6g}" for v in vals) + "]"


# ---------------------------------------------------------------------------
# experiments


class _Context:
    def __init__(self, spec: DomainSequenceSpec):
        self.spec = spec
        max_nodes = int(spec.params.get("max_nodes", 20000))
        self.max_allpairs = int(spec.params.get("max_allpairs", 4000))
        self.budget = int(spec.params.get("budget", 300))
        self.members = []
        for i, mesh in zip(spec.index_list, spec.meshes):
            self.members.append(self._make(i, mesh, max_nodes))
        self.limit = self._make(None, spec.finest, max_nodes)

    def _make(self, index, mesh, max_nodes):
        cloud = member_cloud(self.spec, index, mesh)
        if cloud.n > max_nodes:
            raise BudgetExceeded(f"{cloud.n} samples exceed max_nodes={max_nodes}")
        return _Member("limit" if index is None else index, mesh, cloud, self.max_allpairs)

    def set_tol(self, mesh: float) -> float:
        return SET_TOL_FACTOR * mesh

    def lattice_step(self) -> float:
        default = 0.25 if self.spec.family in ("perturbed_disk", "shrinking_annulus") else 0.125
        step = float(self.spec.params.get("delta_lattice", max(default, max(self.spec.meshes))))
        for m in self.spec.meshes:
            if abs(step / m - round(step / m)) > 1e-9:
                raise SpecInvalid(f"delta lattice {step} is not a multiple of mesh {m}")
        return step

    def ghb_to_limit(self, mem: _Member) -> dict:
        X, Y = cloud_space(mem.cloud), cloud_space(self.limit.cloud)
        rx = mem.cloud.ref if mem.cloud.ref is not None else mem.cloud.points
        ry = self.limit.cloud.ref if self.limit.cloud.ref is not None else self.limit.cloud.points
        return aligned_bracket(X, Y, rx, ry)

    def lattice_delta(self, mem: _Member, step: float) -> dict:
        idx = mem.lattice(step)
        if idx.size > int(self.spec.params.get("max_delta_points", 120)):
            raise BudgetExceeded(f"{idx.size} lattice points for the delta scan; raise delta_lattice")
        K = conformal.quasihyperbolic_metric(mem.graph, idx)[:, idx]
        rep = four_point_delta(K)
        return {"delta": rep.delta, "points": int(idx.size)}


def _ghb_checks(ctx: _Context, uppers) -> list:
    tol = ctx.set_tol(ctx.spec.meshes[-1])
    return [
        _check("ghb_to_limit_decreasing", _decreasing(uppers), f"uppers {_fmt(uppers)}"),
        _check("ghb_to_limit_final_gap", uppers[-1] <= tol, f"final upper {uppers[-1]:.6g} <= {tol:.6g}"),
    ]


def _run_t1_delta(ctx: _Context):
    step = ctx.lattice_step()
    rows, uppers, deltas = [], [], []
    for mem in ctx.members:
        br = ctx.ghb_to_limit(mem)
        d = ctx.lattice_delta(mem, step)
        rows.append({"index": mem.label, "mesh": mem.mesh, "nodes": mem.graph.n, "ghb_to_limit": br, "delta": d["delta"], "delta_points": d["points"]})
        uppers.append(br["upper"])
        deltas.append(d["delta"])
    lim = ctx.lattice_delta(ctx.limit, step)
    tol = ctx.set_tol(ctx.spec.finest)
    checks = _ghb_checks(ctx, uppers) + [
        _check("delta_bounded", all(math.isfinite(v) for v in deltas), f"deltas {_fmt(deltas)}"),
        _check(
            "delta_limit",
            lim["delta"] <= max(deltas) + tol,
            f"limit delta {lim['delta']:.6g} <= max {max(deltas):.6g} + {tol:.6g}",
        ),
    ]
    tols = {"set_distance": "4*mesh", "delta_slack": tol, "delta_lattice": step}
    return rows, {"mesh": ctx.limit.mesh, "delta": lim["delta"], "delta_points": lim["points"]}, tols, checks


def _run_t1_starlike(ctx: _Context):
    rows, Ms = [], []

    def measure(mem):
        rep = rough_starlike_constant(PointedSpace(conformal.qh_graph(mem.graph), mem.base))
        return rep.M, len(rep.targets)

    for mem in ctx.members:
        M, t = measure(mem)
        rows.append({"index": mem.label, "mesh": mem.mesh, "nodes": mem.graph.n, "M": M, "targets": t})
        Ms.append(M)
    M_lim, t_lim = measure(ctx.limit)
    checks = [
        _check("M_finite", all(math.isfinite(v) for v in Ms + [M_lim]), f"M_n {_fmt(Ms)}, limit {M_lim:.6g} (raw values, no slack asserted)"),
    ]
    tols = {"targets": "nodes at maximal quasihyperbolic distance from the base"}
    return rows, {"mesh": ctx.limit.mesh, "M": M_lim, "targets": t_lim}, tols, checks


def _uniformized_space(mem: _Member, eps: float, delta: float):
    u = conformal.uniformize(conformal.qh_graph(mem.graph), mem.base, eps, delta=delta)
    return u, MarkedMetricSpace(u.dist, mem.frontier)


def _run_t2(ctx: _Context):
    step = ctx.lattice_step()
    delta_hat = ctx.lattice_delta(ctx.limit, step)["delta"]
    eps = min(epsilon0(delta_hat).eps0, float(ctx.spec.params.get("eps_cap", 0.1)))
    spaces, rows, diam_ok = [], [], []
    for mem in ctx.members:
        u, S = _uniformized_space(mem, eps, delta_hat)
        spaces.append((mem, S))
        diam_ok.append(u.diam <= 2 / eps)
        rows.append({"index": mem.label, "mesh": mem.mesh, "nodes": mem.graph.n, "frontier": int(mem.frontier.sum()), "diam": u.diam})
    uppers, bd_uppers = [], []
    for k in range(len(spaces) - 1):
        (ma, A), (mb, B) = spaces[k], spaces[k + 1]
        br = aligned_bracket(A, B, ma.ref, mb.ref)
        bA, bB = A.boundary_idx, B.boundary_idx
        bdy = aligned_bracket(A.subspace(bA).unmarked(), B.subspace(bB).unmarked(), ma.ref[bA], mb.ref[bB], marked=False)
        rows[k + 1]["ghb_to_previous"] = br
        rows[k + 1]["gh_boundary_to_previous"] = bdy
        uppers.append(br["upper"])
        bd_uppers.append(bdy["upper"])
    checks = [
        _check("diameter_bound", all(diam_ok), f"diam <= 2/eps = {2 / eps:.6g} on every member"),
        _check("ghb_successive_decreasing", len(uppers) >= 2 and _decreasing(uppers), f"uppers {_fmt(uppers)}"),
        _check("gh_boundary_successive_decreasing", len(bd_uppers) >= 2 and _decreasing(bd_uppers), f"uppers {_fmt(bd_uppers)}"),
    ]
    tols = {"eps": eps, "delta_hat": delta_hat, "delta_lattice": step, "frontier": f"bdist <= {FRONTIER_FACTOR}*mesh"}
    return rows, {"mesh": ctx.limit.mesh, "delta": delta_hat}, tols, checks


def _run_t4(ctx: _Context):
    radii = tuple(float(r) for r in ctx.spec.params.get("radii", BALL_RADII))
    lim = ctx.limit
    rows, uppers, balls = [], [], {r: [] for r in radii}
    for mem in ctx.members:
        br = ctx.ghb_to_limit(mem)
        uppers.append(br["upper"])
        row = {"index": mem.label, "mesh": mem.mesh, "nodes": mem.graph.n, "ghb_to_limit": br, "balls": {}}
        for R in radii:
            b = pointed_gh_ball_distance(
                PointedSpace(mem.k, mem.base),
                PointedSpace(lim.k, lim.base),
                R,
                refs=(mem.ref, lim.ref),
                budget=ctx.budget,
                seed=ctx.spec.seed,
            )
            row["balls"][f"{R:g}"] = {"lower": b.lower, "upper": b.upper}
            balls[R].append(b.upper)
        rows.append(row)
    checks = _ghb_checks(ctx, uppers)
    for R in radii:
        checks.append(_check(f"ball_R{R:g}_decreasing", _decreasing(balls[R]), f"uppers {_fmt(balls[R])}"))
    tols = {"set_distance": "4*mesh", "radii": list(radii)}
    return rows, {"mesh": lim.mesh, "base": lim.base}, tols, checks


def _run_uniformity(ctx: _Context):
    cap = int(ctx.spec.params.get("uniformity_nodes", conformal.EXACT_UNIFORMITY_NODES))
    rows, As = [], []
    for mem in ctx.members:
        est = conformal.estimate_uniformity_constant(mem.graph, cap, ctx.spec.seed)
        br = ctx.ghb_to_limit(mem)
        rows.append({"index": mem.label, "mesh": mem.mesh, "nodes": mem.graph.n, "A": est.A, "exact": est.exact, "ghb_to_limit": br})
        As.append(est.A)
    lim = conformal.estimate_uniformity_constant(ctx.limit.graph, cap, ctx.spec.seed)
    bound = max(As) * (1 + REL_TOL)
    checks = [_check("A_limit", lim.A <= bound, f"limit A {lim.A:.6g} <= {bound:.6g}")]
    return rows, {"mesh": ctx.limit.mesh, "A": lim.A, "exact": lim.exact}, {"relative": REL_TOL}, checks


def run_counterexample(meshes, budget: int = 300, seed: int = 0, floor: float = COUNTEREXAMPLE_FLOOR, small: float = 0.1):
    """Mid- versus corner-punctured squares at each mesh.

    Returns report rows and checks.  Completions and boundaries are
    compared as unmarked spaces; the marked pair gets a d_GHB bracket.
    """
    rows = []
    for mesh in meshes:
        cx, cy = generate_punctured_square("mid", mesh), generate_punctured_square("corner", mesh)
        X, Y = cloud_space(cx), cloud_space(cy)
        comp = aligned_bracket(X.unmarked(), Y.unmarked(), cx.points, cy.points, marked=False)
        bX, bY = X.subspace(X.boundary_idx).unmarked(), Y.subspace(Y.boundary_idx).unmarked()
        bdy = gh_bracket(bX, bY)
        sum_lb = gh_boundary_lower_bound(X, Y)
        f = align_maps(cx.points, cx.boundary.astype(int), cy.points, cy.boundary.astype(int))
        g = align_maps(cy.points, cy.boundary.astype(int), cx.points, cx.boundary.astype(int))
        br = ghb_heuristic(X, Y, budget=budget, seed=seed, restarts=1, init=(f, g))
        rows.append(
            {
                "mesh": mesh,
                "nodes": X.n,
                "gh_completions": comp,
                "gh_boundaries": {"lower": bdy.lower, "upper": bdy.upper},
                "gh_sum_lower": sum_lb,
                "gh_sum_upper": comp["upper"] + bdy.upper,
                "ghb": {"lower": br.lower, "upper": br.upper},
            }
        )
    comp_up = [r["gh_completions"]["upper"] for r in rows]
    bd_up = [r["gh_boundaries"]["upper"] for r in rows]
    lows = [r["ghb"]["lower"] for r in rows]
    checks = [
        _check("gh_completions_shrinking", _decreasing(comp_up) and comp_up[-1] < small, f"uppers {_fmt(comp_up)} < {small}"),
        _check("gh_boundaries_shrinking", _decreasing(bd_up) and bd_up[-1] < small, f"uppers {_fmt(bd_up)} < {small}"),
        _check("ghb_lower_floor", all(v > floor for v in lows), f"lowers {_fmt(lows)} > {floor}"),
        _check(
            "strict_ordering",
            all(r["gh_sum_lower"] < r["ghb"]["lower"] for r in rows),
            "GH(completions)+GH(boundaries) lower bound < d_GHB lower bound at every mesh",
        ),
    ]
    return rows, checks


def run_experiment(spec: DomainSequenceSpec, theorem: str) -> ExperimentReport:
    """Run one experiment over the family described by ``spec``."""
    if theorem not in EXPERIMENTS:
        raise SpecInvalid(f"unknown experiment {theorem!r}; choose from {', '.join(EXPERIMENTS)}")
    t0 = time.perf_counter()
    if theorem == "counterexample_ghb" or spec.family == "punctured_square":
        if theorem != "counterexample_ghb" or spec.family != "punctured_square":
            raise SpecInvalid("counterexample_ghb runs exactly on the punctured_square family")
        prm = spec.params
        rows, checks = run_counterexample(
            spec.meshes,
            budget=int(prm.get("budget", 300)),
            seed=spec.seed,
            floor=float(prm.get("floor", COUNTEREXAMPLE_FLOOR)),
            small=float(prm.get("gh_small", 0.1)),
        )
        tols = {"floor": float(prm.get("floor", COUNTEREXAMPLE_FLOOR)), "gh_small": float(prm.get("gh_small", 0.1))}
        report = ExperimentReport(theorem, spec, rows, {}, tols, checks)
    else:
        if theorem == "T4_quasihyperbolic" and not _is_length_family(spec):
            raise SpecInvalid(f"T4_quasihyperbolic needs a length-space family; {spec.family!r} is not one")
        ctx = _Context(spec)
        runner = {
            "T1_delta": _run_t1_delta,
            "T1_starlike": _run_t1_starlike,
            "T2_uniformized": _run_t2,
            "T4_quasihyperbolic": _run_t4,
            "U_completeness": _run_uniformity,
        }[theorem]
        rows, limit, tols, checks = runner(ctx)
        report = ExperimentReport(theorem, spec, rows, limit, tols, checks)
    report.runtime = time.perf_counter() - t0
    return report
