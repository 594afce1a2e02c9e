import numpy as np
import pytest

from borsuklab.coloring import (
    ChromaticUnknown,
    beta_net,
    cap_cover_certificate,
    chromatic_number,
    covering_radius,
    fibonacci_sphere,
    greedy_color,
    k_colorable,
)
from borsuklab.graph import BorsukGraph, build_graph, is_bipartite
from borsuklab.sphere import sample_uniform
from oracles import exhaustive_colorable, inclusion_exclusion_colorable, random_graph_edges


def graph(n, edges):
    return BorsukGraph.from_edges(n, edges)


def cycle(k):
    return graph(k, [(i, (i + 1) % k) for i in range(k)])


def complete(k):
    return graph(k, [(i, j) for i in range(k) for j in range(i + 1, k)])


class TestGreedy:
    def test_edgeless(self):
        c = greedy_color(graph(5, []))
        assert c.k == 1 and c.is_proper(graph(5, []))

    def test_single_edge(self):
        g = graph(2, [(0, 1)])
        c = greedy_color(g)
        assert c.k == 2 and c.is_proper(g)

    def test_five_cycle(self):
        g = cycle(5)
        c = greedy_color(g)
        assert c.k <= 3 and c.is_proper(g)

    def test_degree_bound(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            n = int(rng.integers(1, 40))
            g = graph(n, random_graph_edges(n, rng.uniform(0, 0.6), rng))
            c = greedy_color(g)
            assert c.is_proper(g)
            assert c.k <= (g.degrees().max() if n else 0) + 1


class TestExact:
    def test_k1(self):
        assert k_colorable(graph(4, []), 1)[0] is True
        assert k_colorable(graph(4, [(0, 3)]), 1)[0] is False

    def test_odd_cycle_not_two_colorable(self):
        for k in (3, 5, 9):
            assert k_colorable(cycle(k), 2)[0] is False
            ok, col = k_colorable(cycle(k), 3)
            assert ok and col.is_proper(cycle(k))

    def test_complete_graphs(self):
        for k in range(2, 7):
            assert k_colorable(complete(k), k - 1)[0] is False
            assert chromatic_number(complete(k)) == k

    def test_oracles_agree_with_each_other(self):
        rng = np.random.default_rng(1)
        for _ in range(30):
            n = int(rng.integers(1, 9))
            e = random_graph_edges(n, rng.uniform(0.2, 0.9), rng)
            for k in (2, 3):
                assert exhaustive_colorable(n, e, k) == inclusion_exclusion_colorable(n, e, k)

    def test_matches_exhaustive_random_graphs(self):
        rng = np.random.default_rng(2)
        for _ in range(200):
            n = int(rng.integers(1, 13))
            e = random_graph_edges(n, rng.uniform(0.1, 0.9), rng)
            g = graph(n, e)
            for k in (2, 3, 4):
                ok, col = k_colorable(g, k)
                assert ok == inclusion_exclusion_colorable(n, e, k)
                if ok:
                    assert col.is_proper(g)

    def test_matches_exhaustive_borsuk_instances(self):
        rng = np.random.default_rng(3)
        for _ in range(60):
            n = int(rng.integers(3, 13))
            g = build_graph(sample_uniform(2, n, seed=rng), float(rng.uniform(1.5, 3.0)))
            for k in (2, 3):
                assert k_colorable(g, k)[0] == exhaustive_colorable(n, g.edges_, k)

    def test_budget_gives_undecided(self):
        # dense random graph that needs real search
        rng = np.random.default_rng(4)
        g = graph(40, random_graph_edges(40, 0.5, rng))
        ok, col = k_colorable(g, 5, node_budget=1)
        assert ok is None and col is None
        with pytest.raises(ChromaticUnknown) as exc:
            chromatic_number(g, node_budget=1)
        assert exc.value.lo <= exc.value.hi

    def test_components_solved_independently(self):
        g = graph(10, [(0, 1), (1, 2), (2, 0), (5, 6), (6, 7), (7, 8), (8, 9), (9, 5)])
        assert chromatic_number(g) == 3

    def test_chromatic_invariants(self):
        rng = np.random.default_rng(5)
        for _ in range(40):
            g = build_graph(sample_uniform(2, 60, seed=rng), float(rng.uniform(0.8, 2.0)))
            chi = chromatic_number(g)
            assert chi <= greedy_color(g).k
            if not is_bipartite(g)[0]:
                assert chi >= 3


class TestNets:
    def test_covering_radius_octahedron(self):
        P = np.vstack([np.eye(3), -np.eye(3)])
        assert covering_radius(P) == pytest.approx(np.arccos(1 / np.sqrt(3)), abs=1e-12)

    def test_covering_radius_hemisphere_gap(self):
        P = sample_uniform(2, 50, seed=0)
        P[:, -1] = np.abs(P[:, -1])
        assert covering_radius(P) == pytest.approx(np.pi)

    def test_covering_radius_sampled_oracle(self):
        P = fibonacci_sphere(200)
        Q = sample_uniform(2, 200000, seed=1)
        sampled = np.max(np.arccos(np.clip(Q @ P.T, -1, 1)).min(axis=1))
        exact = covering_radius(P)
        assert sampled <= exact + 1e-12
        assert sampled > 0.95 * exact

    @pytest.mark.parametrize("d,beta", [(2, 0.1), (3, 0.3)])
    def test_beta_net(self, d, beta):
        net = beta_net(d, beta, seed=0)
        assert covering_radius(net) <= beta


class TestCertificate:
    def test_empty_vertex_set(self):
        g = build_graph(np.zeros((0, 3)), 0.5)
        cert = cap_cover_certificate(g, 0.1)
        assert not cert.valid

    def test_spacing_guard(self):
        g = build_graph(sample_uniform(2, 10, seed=0), 0.5)
        with pytest.raises(ValueError):
            cap_cover_certificate(g, 0.25)

    def test_net_covers_itself(self):
        beta = 0.05
        net = beta_net(2, beta, seed=0)
        alpha = 2 * (beta + covering_radius(net)) + 0.01
        g = build_graph(net, alpha)
        cert = cap_cover_certificate(g, beta, net=net)
        assert cert.valid
        assert cert.to_dict()["failures"] == []

    def test_uncovered_reports_failures(self):
        X = sample_uniform(2, 30, seed=1)
        X[:, -1] = -np.abs(X[:, -1])
        cert = cap_cover_certificate(build_graph(X, 1.0), 0.1)
        assert not cert.valid
        d = cert.to_dict()
        assert len(d["failures"]) > 0 and d["net_size"] == cert.net_size

    def test_soundness_against_solver(self):
        """Valid certificate means no (d+1)-colouring exists."""
        rng = np.random.default_rng(6)
        checked = 0
        for _ in range(20):
            n = int(rng.integers(30, 61))
            X = sample_uniform(2, n, seed=rng)
            beta = 0.05
            alpha = min(2 * (covering_radius(X) + beta) + 0.02, np.pi - 1e-6)
            g = build_graph(X, alpha)
            cert = cap_cover_certificate(g, beta)
            if cert.valid:
                checked += 1
                assert k_colorable(g, 3)[0] is False
        assert checked >= 10


class TestCertificateScaling:
    """Validity frequency at ``alpha = C (ln n / n)^{1/2}``, n = 5000."""

    n = 5000

    def freq(self, C, seeds):
        a = C * np.sqrt(np.log(self.n) / self.n)
        valid = [cap_cover_certificate(build_graph(sample_uniform(2, self.n, seed=s), a), a / 10,
                                       seed=s).valid for s in seeds]
        return np.mean(valid)

    def test_calibrated_constant(self):
        # C = 6.5 is the calibrated constant; caps have radius alpha/2, so C must beat 2 x 2.33
        assert self.freq(6.5, range(100, 130)) > 0.9

    def test_small_constant_never_certifies(self):
        # covering radius ~ 2.33 (ln n/n)^{1/2} exceeds alpha/2 at C = 2.5
        assert self.freq(2.5, range(3)) == 0.0
