"""Property tests for the metric invariants."""

import itertools
import json
import warnings

import numpy as np
from hypothesis import HealthCheck, assume, given, settings
from hypothesis import strategies as st

from metric_lab import conformal as cf
from metric_lab import ghb
from metric_lab import hyperbolicity as hy
from metric_lab import metric_core as mc
from metric_lab.errors import DisconnectedInterior, EmptyInterior
from metric_lab.stability_lab import generate_perturbed_square

SETTINGS = settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
# coordinates on a 1/64 lattice keep distinct points well separated
coord = st.integers(0, 64).map(lambda k: k / 64)


@st.composite
def spaces(draw, min_n=1, max_n=6, marked=True, need_boundary=False):
    n = draw(st.integers(max(min_n, 2) if need_boundary else min_n, max_n))
    pts = draw(st.lists(st.tuples(coord, coord), min_size=n, max_size=n, unique=True))
    flags = np.zeros(n, bool)
    if need_boundary:
        # at least one point of each kind
        order = draw(st.permutations(range(n)))
        flags[order[: draw(st.integers(1, n - 1))]] = True
    elif marked:
        flags[:] = draw(st.lists(st.booleans(), min_size=n, max_size=n))
    return mc.from_points(np.array(pts, float), flags)


@st.composite
def graph_metrics(draw, max_n=8):
    n = draw(st.integers(2, max_n))
    w = draw(st.lists(st.integers(1, 6), min_size=n * n, max_size=n * n))
    from scipy.sparse.csgraph import shortest_path

    W = np.triu(np.array(w, float).reshape(n, n), 1)
    return mc.MarkedMetricSpace(shortest_path(W + W.T, directed=False), np.zeros(n, bool))


def subsets(n):
    return st.lists(st.integers(0, n - 1), min_size=1, max_size=n, unique=True)


def is_metric(D, tol=1e-9):
    return np.allclose(D, D.T) and np.all(np.diag(D) == 0) and np.all(D[:, :, None] <= D[:, None, :] + D.T[None] + tol)


class TestMetricCoreProperties:
    @SETTINGS
    @given(spaces(max_n=8), st.data())
    def test_hausdorff_symmetric_triangle(self, s, data):
        A, B, C = (mc.subset(s, data.draw(subsets(s.n))) for _ in range(3))
        assert mc.hausdorff(s, A, B) == mc.hausdorff(s, B, A)
        assert mc.hausdorff(s, A, C) <= mc.hausdorff(s, A, B) + mc.hausdorff(s, B, C) + 1e-12

    def test_hausdorff_triangle_exhaustive(self):
        s = mc.from_points(np.random.default_rng(3).random((5, 2)))
        subs = [mc.subset(s, c) for k in range(1, 6) for c in itertools.combinations(range(5), k)]
        H = np.array([[mc.hausdorff(s, a, b) for b in subs] for a in subs])
        assert np.array_equal(H, H.T)
        assert np.all(H[:, :, None] <= H[:, None, :] + H[None, :, :] + 1e-12)

    @SETTINGS
    @given(spaces(max_n=8), st.data(), st.floats(0, 1), st.floats(0, 1))
    def test_neighborhood_monotone(self, s, data, e1, e2):
        A = mc.subset(s, data.draw(subsets(s.n)))
        lo, hi = sorted((e1, e2))
        assert set(mc.neighborhood(s, A, lo)) <= set(mc.neighborhood(s, A, hi))

    @SETTINGS
    @given(spaces(max_n=8), st.data())
    def test_nested_sets(self, s, data):
        B = data.draw(subsets(s.n))
        A = data.draw(st.lists(st.sampled_from(B), min_size=1, unique=True))
        expected = s.dist[np.ix_(B, A)].min(axis=1).max()
        assert mc.hausdorff(s, mc.subset(s, A), mc.subset(s, B)) == expected

    @SETTINGS
    @given(spaces(max_n=8), st.data())
    def test_with_boundary_dominates_parts(self, s, data):
        parts = [mc.subset(s, data.draw(subsets(s.n))) for _ in range(4)]
        X1, X2 = mc.MarkedSubspace(parts[0], parts[1]), mc.MarkedSubspace(parts[2], parts[3])
        total = mc.hausdorff_with_boundary(s, X1, X2)
        assert total >= mc.hausdorff(s, parts[0], parts[2])
        assert total >= mc.hausdorff(s, parts[1], parts[3])

    @SETTINGS
    @given(spaces(max_n=10), st.floats(0.01, 1.5))
    def test_net_at_most_separation(self, s, eps):
        r = mc.net_and_separation(s, eps)
        assert r.exact and r.net <= r.sep

    @SETTINGS
    @given(spaces(max_n=7))
    def test_file_round_trip(self, s):
        assert mc.MarkedMetricSpace.from_dict(json.loads(json.dumps(s.to_dict()))) == s


class TestGhbProperties:
    @SETTINGS
    @given(spaces(max_n=4, need_boundary=True), spaces(max_n=4, need_boundary=True))
    def test_bracket_and_symmetry(self, X, Y):
        a, b = ghb.ghb_exact(X, Y), ghb.ghb_exact(Y, X)
        assert 0 <= a.lower <= a.upper
        assert a.upper <= 2 * a.lower or a.upper == a.lower == 0
        assert (a.lower, a.upper) == (b.lower, b.upper)

    @SETTINGS
    @given(*(spaces(max_n=4, need_boundary=True) for _ in range(3)))
    def test_triangle_compatibility(self, X, Y, Z):
        up = lambda p, q: ghb.ghb_exact(p, q).upper  # noqa: E731
        assert ghb.ghb_exact(X, Z).lower <= up(X, Y) + up(Y, Z) + 1e-12

    @SETTINGS
    @given(spaces(max_n=4, need_boundary=True), spaces(max_n=4, need_boundary=True))
    def test_induced_map_is_2eps_isometry(self, X, Y):
        br = ghb.ghb_exact(X, Y)
        f = ghb.induced_map(br.optimal_corr, X, Y)
        assert ghb.check_eps_isometry_with_boundary(f, X, Y).eps <= 2 * br.upper + 1e-12

    @SETTINGS
    @given(spaces(max_n=5, need_boundary=True), spaces(max_n=5, need_boundary=True), st.data())
    def test_eps_isometry_bounds_upper(self, X, Y, data):
        f = [data.draw(st.sampled_from((Y.boundary_idx if X.boundary[i] else Y.interior_idx).tolist())) for i in range(X.n)]
        eps = ghb.check_eps_isometry_with_boundary(f, X, Y).eps
        assert ghb.ghb_exact(X, Y).upper <= 3 * eps + 1e-12

    @SETTINGS
    @given(spaces(max_n=5, need_boundary=True), spaces(max_n=5, need_boundary=True))
    def test_lower_bounds_dominated(self, X, Y):
        up = ghb.ghb_exact(X, Y).upper
        assert ghb.gh_boundary_lower_bound(X, Y) <= up + 1e-12
        assert ghb.min_distortion_lower_bound(X, Y) <= up + 1e-12

    @settings(max_examples=25, deadline=None)
    @given(spaces(min_n=2, max_n=5, need_boundary=True), spaces(min_n=2, max_n=5, need_boundary=True))
    def test_heuristic_matches_exact(self, X, Y):
        assume(X.n + Y.n <= 10)
        m = ghb.ghb_exact(X, Y).upper
        h = ghb.ghb_heuristic(X, Y, budget=10 * (X.n * Y.n) ** 2, restarts=5)
        assert h.upper == m


class TestHyperbolicityProperties:
    @SETTINGS
    @given(spaces(max_n=8))
    def test_gromov_product_bounds(self, s):
        D = s.dist
        for m in range(s.n):
            G = hy.gromov_products(D, m)
            assert np.all(G >= -1e-12)
            assert np.all(G <= np.minimum(D[m][:, None], D[m][None, :]) + 1e-12)

    @SETTINGS
    @given(spaces(max_n=8), st.randoms(use_true_random=False), st.floats(0.1, 10))
    def test_delta_invariance(self, s, rnd, lam):
        perm = list(range(s.n))
        rnd.shuffle(perm)
        d = hy.four_point_delta(s).delta
        assert hy.four_point_delta(s.dist[np.ix_(perm, perm)]).delta == d
        assert np.isclose(hy.four_point_delta(lam * s.dist).delta, lam * d, rtol=1e-9, atol=1e-12)

    @SETTINGS
    @given(graph_metrics())
    def test_delta_bounded_by_diameter(self, s):
        assert 0 <= hy.four_point_delta(s).delta <= s.diam

    @SETTINGS
    @given(spaces(min_n=3, max_n=9, need_boundary=True), st.floats(0.01, 2))
    def test_visual_metric_axioms(self, s, eps):
        base = int(s.interior_idx[0])
        vm = _quiet(hy.visual_metric, s, base, eps, 0.0)
        assert is_metric(vm.dist, 1e-12)
        assert np.all(vm.dist <= vm.rho + 1e-15)

    @SETTINGS
    @given(graph_metrics(), st.data())
    def test_starlike_monotone(self, s, data):
        p = hy.PointedSpace(s, 0)
        T1 = data.draw(subsets(s.n))
        T2 = sorted(set(T1) | set(data.draw(subsets(s.n))))
        assert hy.rough_starlike_constant(p, T2).M <= hy.rough_starlike_constant(p, T1).M


def _quiet(fn, *args):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return fn(*args)


@st.composite
def domain_graphs(draw):
    """Unit squares at a coarse mesh with some interior samples removed."""
    mesh = draw(st.sampled_from([1 / 4, 1 / 6, 1 / 8]))
    c = generate_perturbed_square(draw(st.floats(0, 0.3)), mesh)
    keep = np.ones(c.n, bool)
    interior = np.flatnonzero(~c.boundary)
    drop = draw(st.lists(st.sampled_from(interior.tolist()), max_size=len(interior) // 3, unique=True))
    keep[drop] = False
    cloud = cf.PointCloud(c.points[keep], c.boundary[keep])
    try:
        return cf.build_domain_graph(cloud, 2.5 * mesh)
    except (DisconnectedInterior, EmptyInterior):
        assume(False)


class TestConformalProperties:
    @SETTINGS
    @given(domain_graphs())
    def test_qh_metric_axioms(self, g):
        assert is_metric(cf.quasihyperbolic_metric(g))

    @SETTINGS
    @given(domain_graphs(), st.floats(0.01, 3), st.data())
    def test_uniformize_axioms_and_diameter(self, g, eps, data):
        base = data.draw(st.integers(0, g.n - 1))
        u = _quiet(cf.uniformize, cf.qh_graph(g), base, eps)
        assert is_metric(u.dist)
        assert u.diam <= 2 / eps

    @SETTINGS
    @given(domain_graphs(), st.floats(0.01, 3), st.data())
    def test_harnack_on_edges(self, g, eps, data):
        q = cf.qh_graph(g)
        d = q.distances(data.draw(st.integers(0, g.n - 1)))
        coo = q.adjacency.tocoo()
        ratio = np.exp(-eps * (d[coo.row] - d[coo.col]))
        assert np.all(np.exp(-eps * coo.data) <= ratio * (1 + 1e-12))
        assert np.all(ratio <= np.exp(eps * coo.data) * (1 + 1e-12))

    @SETTINGS
    @given(domain_graphs())
    def test_uniformity_constant_at_least_one(self, g):
        assert cf.estimate_uniformity_constant(g).A >= 1.0
