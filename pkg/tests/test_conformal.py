import math
import warnings

import numpy as np
import pytest

from metric_lab import conformal as cf
from metric_lab import graphs
from metric_lab.errors import DisconnectedInterior, EmptyBoundary, EmptyInterior, InvalidCurve, ParseError
from metric_lab.stability_lab import generate_annulus, generate_perturbed_disk, generate_perturbed_square, generate_slit_square


def square_graph(mesh):
    return cf.build_domain_graph(generate_perturbed_square(0.0, mesh), 1.5 * mesh)


def node_at(g, xy):
    return int(np.argmin(np.linalg.norm(g.coords - np.asarray(xy), axis=1)))


def half_plane_strip(a=0.1, b=0.8, steps=200):
    """Three columns of points at heights a..b over a sampled line y = 0."""
    s = (b - a) / steps
    ys = a + np.arange(steps + 1) * s
    pts = [(x, y) for x in (-s, 0.0, s) for y in ys]
    line = [(x, 0.0) for x in np.arange(-1.0, 1.0 + s / 2, s)]
    cloud = cf.PointCloud(np.array(pts + line), np.r_[np.zeros(len(pts)), np.ones(len(line))])
    return cf.build_domain_graph(cloud, 1.01 * math.sqrt(2) * s)


def path_graph(n_edges, length):
    adj = graphs.symmetric_csr(n_edges + 1, np.arange(n_edges), np.arange(1, n_edges + 1), np.full(n_edges, length))
    return cf.MetricGraph(adj)


class TestBuild:
    def test_three_by_three(self):
        g = square_graph(0.5)
        assert g.n == 1 and g.bdist.tolist() == [0.5]
        assert g.adjacency.nnz == 0

    def test_unit_grid(self):
        ax = np.arange(3.0)
        pts = np.array([(x, y) for x in ax for y in ax])
        flags = np.array([not (x == 1 and y == 1) for x, y in pts])
        g = cf.build_domain_graph(cf.PointCloud(pts, flags), 1.0)
        assert g.n == 1 and g.bdist[0] == 1.0 and g.adjacency.nnz == 0

    def test_bdist_is_exact(self):
        g = square_graph(1 / 8)
        bpts = g.boundary_points
        brute = np.linalg.norm(g.coords[:, None] - bpts[None], axis=2).min(axis=1)
        assert np.array_equal(g.bdist, brute)
        assert np.all(g.bdist > 0)

    def test_edges_symmetric_positive(self):
        A = square_graph(1 / 8).adjacency
        assert (A != A.T).nnz == 0 and A.data.min() > 0

    def test_no_boundary(self):
        with pytest.raises(EmptyBoundary):
            cf.build_domain_graph(cf.PointCloud(np.zeros((2, 2)) + [[0, 0], [1, 0]], [0, 0]), 2.0)

    def test_no_interior(self):
        with pytest.raises(EmptyInterior):
            cf.build_domain_graph(cf.PointCloud([[0, 0], [1, 0]], [1, 1]), 2.0)

    def test_radius_too_small(self):
        with pytest.raises(DisconnectedInterior):
            cf.build_domain_graph(generate_perturbed_square(0.0, 1 / 4), 0.1)

    def test_slit_blocks_edges(self):
        g = cf.build_domain_graph(generate_slit_square(2, 1 / 8), 3 / 8)
        below, above = node_at(g, (0.75, 0.375)), node_at(g, (0.75, 0.625))
        assert g.adjacency[below, above] == 0

    def test_deepest_node(self):
        g = square_graph(1 / 8)
        assert g.coords[cf.deepest_node(g)].tolist() == [0.5, 0.5]


class TestQuasihyperbolic:
    def test_diagonal_zero(self):
        k = cf.quasihyperbolic_metric(square_graph(1 / 8))
        assert np.all(np.diag(k) == 0)

    def test_single_edge(self):
        pts = [[0, 0], [0.1, 0], [0, 1], [0.1, 1], [0, -1], [0.1, -1]]
        cloud = cf.PointCloud(pts, [0, 0, 1, 1, 1, 1])
        k = cf.quasihyperbolic_metric(cf.build_domain_graph(cloud, 0.15))
        assert k[0, 1] == pytest.approx(0.1 / 1.0, rel=1e-12)

    def test_half_plane_log(self):
        g = half_plane_strip()
        a, b = node_at(g, (0, 0.1)), node_at(g, (0, 0.8))
        k = cf.quasihyperbolic_metric(g, a)[b]
        assert abs(k / math.log(8) - 1) < 0.05

    def test_metric_axioms(self):
        k = cf.quasihyperbolic_metric(square_graph(1 / 8))
        assert np.allclose(k, k.T)
        assert np.all(k[:, :, None] <= k[:, None, :] + k.T[None, :, :] + 1e-12)

    def test_refinement_is_cauchy(self):
        vals = []
        for m in (1 / 8, 1 / 16, 1 / 32, 1 / 64):
            g = square_graph(m)
            vals.append(cf.quasihyperbolic_metric(g, node_at(g, (0.25, 0.5)))[node_at(g, (0.75, 0.25))])
        steps = np.abs(np.diff(vals))
        assert np.all(steps[1:] < steps[:-1])


class TestUniformize:
    def test_path_closed_form(self):
        with pytest.warns(UserWarning):
            u = cf.uniformize(path_graph(1000, 0.01), 0, 0.1, delta=0.0)
        assert u.dist[0, 0] == 0.0
        assert abs(u.dist[0, 500] / ((1 - math.exp(-0.5)) / 0.1) - 1) < 0.01

    def test_bounds(self):
        g = cf.qh_graph(square_graph(1 / 16))
        for eps in (0.05, 0.5, 2.0):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                u = cf.uniformize(g, 0, eps)
            assert u.diam <= 2 / eps
            assert np.all(u.dist <= g.distances() + 1e-12)

    def test_metric_axioms(self):
        u = cf.uniformize(cf.qh_graph(square_graph(1 / 8)), 3, 0.004, delta=0.0)
        D = u.dist
        assert np.allclose(D, D.T)
        assert np.all(D[:, :, None] <= D[:, None, :] + D.T[None, :, :] + 1e-12)

    def test_harnack(self):
        g = cf.qh_graph(square_graph(1 / 16))
        eps = 0.3
        d = g.distances(5)
        coo = g.adjacency.tocoo()
        ratio = np.exp(-eps * d[coo.row]) / np.exp(-eps * d[coo.col])
        assert np.all(np.exp(-eps * coo.data) <= ratio * (1 + 1e-12))
        assert np.all(ratio <= np.exp(eps * coo.data) * (1 + 1e-12))

    def test_warning(self):
        g = cf.qh_graph(square_graph(1 / 8))
        with pytest.warns(UserWarning, match="epsilon0"):
            cf.uniformize(g, 0, 0.5, delta=1.0)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            cf.uniformize(g, 0, 1e-6, delta=1.0)

    def test_measured_delta_warning(self):
        with pytest.warns(UserWarning):
            cf.uniformize(cf.qh_graph(square_graph(1 / 8)), 0, 0.5)

    def test_bad_eps(self):
        with pytest.raises(ValueError):
            cf.uniformize(path_graph(3, 1.0), 0, 0.0)

    def test_refinement_is_cauchy(self):
        vals = []
        for m in (1 / 8, 1 / 16, 1 / 32, 1 / 64):
            g = square_graph(m)
            gq = cf.qh_graph(g)
            a, b = node_at(g, (0.25, 0.5)), node_at(g, (0.75, 0.25))
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                u = cf.uniformize(gq, cf.deepest_node(g), 0.1, delta=0.0)
            vals.append(u.dist[a, b])
        steps = np.abs(np.diff(vals))
        assert np.all(steps[1:] < steps[:-1])


class TestUniformCurves:
    def test_single_edge(self):
        g = square_graph(1 / 8)
        a = node_at(g, (0.5, 0.5))
        b = node_at(g, (0.625, 0.5))
        chk = cf.check_uniform_curve(cf.CurveSample.from_nodes(g, [a, b]), 1.0, g)
        assert chk.length_ratio == pytest.approx(1.0)

    def test_midline_crossing(self):
        g = square_graph(1 / 32)
        nodes = [node_at(g, (i / 32, 0.5)) for i in range(1, 32)]
        chk = cf.check_uniform_curve(cf.CurveSample.from_nodes(g, nodes), 2.0, g)
        assert chk.passed

    def test_boundary_hugging_fails(self):
        g = square_graph(1 / 32)
        down = [node_at(g, (8 / 32, j / 32)) for j in range(16, 0, -1)]
        along = [node_at(g, (i / 32, 1 / 32)) for i in range(9, 25)]
        up = [node_at(g, (24 / 32, j / 32)) for j in range(2, 17)]
        chk = cf.check_uniform_curve(cf.CurveSample.from_nodes(g, down + along + up), 2.0, g)
        assert not chk.passed
        assert chk.cigar_ratio > 2.0
        assert g.bdist[chk.worst_node] == pytest.approx(1 / 32)

    def test_not_adjacent(self):
        g = square_graph(1 / 8)
        with pytest.raises(InvalidCurve):
            cf.CurveSample.from_nodes(g, [node_at(g, (0.25, 0.25)), node_at(g, (0.75, 0.75))])

    def test_empty(self):
        with pytest.raises(InvalidCurve):
            cf.CurveSample.from_nodes(square_graph(1 / 8), [])


class TestUniformityConstant:
    def test_at_least_one(self):
        assert cf.estimate_uniformity_constant(square_graph(1 / 8)).A >= 1.0

    def test_exact_flag(self):
        est = cf.estimate_uniformity_constant(square_graph(1 / 8))
        assert est.exact and est.sources == 49

    def test_matches_path_scan(self):
        # recompute the worst pair by walking its geodesic explicitly
        g = square_graph(1 / 8)
        est = cf.estimate_uniformity_constant(g)
        s, t = est.pair
        qadj = cf.qh_adjacency(g)
        pred = graphs.lex_predecessors(qadj, graphs.shortest_paths(qadj, s))
        chk = cf.check_uniform_curve(cf.CurveSample.from_nodes(g, graphs.path_from_tree(pred, s, t)), est.A, g)
        assert max(chk.length_ratio, chk.cigar_ratio) == pytest.approx(est.A)

    def test_disk_stable_under_refinement(self):
        A = []
        for m in (1 / 32, 1 / 64):
            g = cf.build_domain_graph(generate_perturbed_disk(0.0, m, radius=0.5), 1.5 * m)
            A.append(cf.estimate_uniformity_constant(g).A)
        assert np.isfinite(A).all()
        assert abs(A[1] / A[0] - 1) < 0.10

    def test_subsampled_flag(self):
        g = cf.build_domain_graph(generate_perturbed_disk(0.0, 1 / 32, radius=0.5), 1.5 / 32)
        est = cf.estimate_uniformity_constant(g, max_nodes=100)
        assert not est.exact and est.sources == 100

    def test_slit_increases_constant(self):
        plain = cf.estimate_uniformity_constant(square_graph(1 / 16)).A
        slit = cf.estimate_uniformity_constant(cf.build_domain_graph(generate_slit_square(2, 1 / 16), 1.5 / 16)).A
        assert slit > plain

    def test_quasihyperbolic_growth_bound(self):
        g = square_graph(1 / 16)
        A = cf.estimate_uniformity_constant(g).A
        p = cf.deepest_node(g)
        k = cf.quasihyperbolic_metric(g, p)
        d = np.linalg.norm(g.coords - g.coords[p], axis=1)
        bound = 4 * A**2 * np.log1p(d / np.minimum(g.bdist[p], g.bdist))
        assert np.all(k <= 1.1 * bound)


class TestClearance:
    def test_formula(self):
        assert cf.clearance_radius(1.0, math.log(2)) == 0.5

    def test_monotone_in_R(self):
        vals = [cf.clearance_radius(1.0, R) for R in (0.1, 1, 2, 5, 20)]
        assert all(a >= b for a, b in zip(vals, vals[1:]))
        assert vals[-1] < 1e-8

    def test_annulus_inclusion(self):
        g = cf.build_domain_graph(generate_annulus(0.5, 1.0, 1 / 64), 1.5 / 64)
        p = cf.deepest_node(g)
        assert abs(np.linalg.norm(g.coords[p]) - 0.75) < 1 / 64
        res = cf.qh_ball_clearance(g, p, 1.0)
        assert res.verified and res.violators == ()
        assert res.ball_size > 1

    def test_bad_R(self):
        with pytest.raises(ValueError):
            cf.clearance_radius(1.0, 0.0)


class TestPointCloudFormat:
    def test_round_trip(self, tmp_path):
        c = generate_perturbed_square(0.1, 1 / 4)
        cf.save_cloud(c, tmp_path / "c.json")
        assert cf.load_cloud(tmp_path / "c.json") == c

    def test_plain_format(self):
        data = {"kind": "point_cloud", "dim": 2, "points": [[0, 0], [1, 0]], "boundary": [0, 1]}
        c = cf.PointCloud.from_dict(data)
        assert c.n == 2 and c.boundary.tolist() == [False, True]

    def test_bad_rows(self):
        with pytest.raises(ParseError):
            cf.PointCloud.from_dict({"kind": "point_cloud", "dim": 3, "points": [[0, 0]], "boundary": [0]})

    def test_bad_flags(self):
        with pytest.raises(ParseError):
            cf.PointCloud.from_dict({"kind": "point_cloud", "dim": 2, "points": [[0, 0]], "boundary": [0, 1]})
