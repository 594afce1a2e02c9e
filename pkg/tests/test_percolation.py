import math

import numpy as np
import pytest

from borsuklab.percolation import (
    ABSample,
    _marked_sample,
    _reach_at,
    ab_edges,
    bond_percolation_box,
    boolean_edges,
    boundary_reach_prob,
    build_clusters,
    c2_constant,
    cap_projection_intensity_check,
    close_pairs,
    covered_directly,
    covered_predicate,
    decay_fit,
    estimate_lambda_c,
    lambda_from_c2,
    m_k_statistic,
    projection_window_radius,
    reach_outcomes,
    reach_profile,
    sample_ab,
)
from borsuklab.rng import stream
from borsuklab.sphere import ball_volume
from borsuklab.stats import TransitionNotBracketed
from oracles import brute_components, same_partition


def two_points(dist):
    pts = np.array([[0.0, 0.0], [dist, 0.0]])
    return ABSample(2, 5.0, 1.0, 1.0, pts, np.array([True, False]))


class TestSampling:
    def test_empty(self):
        s = sample_ab(2, 3.0, 0.0, 0.0, seed=0)
        assert len(s) == 0 and s.origin == -1

    def test_poisson_count(self):
        counts = np.array([len(sample_ab(2, 10.0, 2.0, 0.0, seed=stream(0, t)).A)
                           for t in range(1000)])
        assert abs(counts.mean() - 800) < 4 * math.sqrt(800)
        assert abs(counts.var() / 800 - 1) < 0.15

    def test_origin_label(self):
        s = sample_ab(2, 4.0, 0.5, 0.5, seed=1, origin_label="A")
        assert s.origin == len(s) - 1
        assert np.all(s.points[s.origin] == 0) and s.is_a[s.origin]
        assert np.count_nonzero(np.all(s.points == 0, axis=1)) == 1
        with pytest.raises(ValueError):
            sample_ab(2, 4.0, 0.5, 0.5, seed=1, origin_label="C")

    def test_inside_box(self):
        s = sample_ab(3, 2.5, 1.0, 1.0, seed=2)
        assert np.all(np.abs(s.points) <= 2.5)

    def test_jsonl(self):
        s = sample_ab(2, 2.0, 0.5, 0.5, seed=3, origin_label="B")
        rows = s.to_jsonl()
        assert len(rows) == len(s) and rows[-1]["origin"] and rows[-1]["label"] == "B"


class TestNeighbours:
    def test_close_pairs_matches_brute(self):
        rng = np.random.default_rng(4)
        for _ in range(30):
            d = int(rng.integers(1, 4))
            P = rng.uniform(-4, 4, size=(int(rng.integers(0, 300)), d))
            Q = rng.uniform(-4, 4, size=(int(rng.integers(0, 300)), d))
            got = close_pairs(P, Q)
            D = np.linalg.norm(P[:, None] - Q[None], axis=2) if len(P) and len(Q) else np.zeros((0, 0))
            want = np.argwhere(D <= 1.0)
            assert np.array_equal(got, want.reshape(-1, 2))
            own = boolean_edges(P)
            Dp = np.linalg.norm(P[:, None] - P[None], axis=2) if len(P) else np.zeros((0, 0))
            wp = np.argwhere(np.triu(Dp <= 1.0, 1))
            assert np.array_equal(own, wp.reshape(-1, 2))


class TestClusters:
    def test_close_pair_joined(self):
        c = build_clusters(two_points(0.5))
        assert c.n_components == 1 and c.sizes[0] == 2

    def test_far_pair_separate(self):
        c = build_clusters(two_points(1.5))
        assert c.n_components == 2

    def test_same_label_never_joined(self):
        pts = np.array([[0.0, 0.0], [0.1, 0.0]])
        s = ABSample(2, 5.0, 1.0, 1.0, pts, np.array([True, True]))
        assert build_clusters(s).n_components == 2

    def test_500_point_instance(self):
        s = sample_ab(2, 6.0, 1.7, 1.7, seed=5)
        assert 350 < len(s) < 650
        assert build_clusters(s, "grid").same_partition(build_clusters(s, "brute"))

    def test_grid_equals_brute_many(self):
        rng = np.random.default_rng(6)
        for t in range(100):
            d = int(rng.integers(1, 4))
            R = float(rng.uniform(2, 6))
            lam = float(rng.uniform(0.1, 2.0)) * (400 / (2 * R) ** d)
            s = sample_ab(d, R, lam, lam, seed=stream(6, t), origin_label="A")
            if len(s) > 1000:
                continue
            grid = build_clusters(s, "grid")
            brute = build_clusters(s, "brute")
            assert grid.same_partition(brute)
            # third route: label propagation over brute pairs
            P = s.points
            D = np.linalg.norm(P[:, None] - P[None], axis=2)
            pairs = np.argwhere((D <= 1) & s.is_a[:, None] & ~s.is_a[None, :])
            assert same_partition(grid.component, brute_components(len(s), pairs))
            assert np.array_equal(grid.sizes.sum(), len(s))

    def test_every_edge_bichromatic(self):
        s = sample_ab(2, 8.0, 1.0, 1.0, seed=7)
        e = ab_edges(s)
        assert np.all(s.is_a[e[:, 0]] & ~s.is_a[e[:, 1]])
        assert np.all(np.linalg.norm(s.points[e[:, 0]] - s.points[e[:, 1]], axis=1) <= 1)


class TestReach:
    def test_zero_intensity(self):
        assert boundary_reach_prob(2, 0.0, 5.0, 10).hits == 0

    def test_trials_guard(self):
        with pytest.raises(ValueError):
            boundary_reach_prob(2, 1.0, 5.0, 0)

    def test_tiny_box(self):
        # R < 1: the origin itself sits in the shell
        assert boundary_reach_prob(2, 0.5, 0.8, 20).estimate == 1.0

    def test_thinning_matches_direct_clusters(self):
        """The coupled sweep agrees with clustering the thinned sample from scratch."""
        for t in range(25):
            rng = stream(8, t)
            ms = _marked_sample(2, 6.0, 1.4, rng, "ab")
            for frac in (0.3, 0.6, 0.9, 1.0):
                for R in (3.0, 6.0):
                    keep = (ms.marks < frac) & (np.max(np.abs(ms.points), axis=1) <= R)
                    idx = np.flatnonzero(keep)
                    s = ABSample(2, R, 0, 0, ms.points[idx], ms.is_a[idx],
                                 int(np.flatnonzero(idx == ms.origin)[0]))
                    lab = build_clusters(s, "brute")
                    direct = bool(lab.touches_boundary[lab.component[s.origin]])
                    assert _reach_at(ms, frac, R, 1.0) == direct

    def test_monotone_in_lambda(self):
        out = reach_outcomes(2, [0.6, 0.9, 1.2, 1.5], 6.0, 200, seed=9)
        assert np.all(out[:, 1:] >= out[:, :-1])
        freq = out.mean(axis=0)
        assert freq[0] < freq[-1]

    def test_subcritical_decay(self):
        prof = reach_profile(2, 0.5, [2, 3, 4, 5, 6], 2000, seed=10)
        fit = decay_fit(prof)
        assert fit.decaying and fit.r_squared > 0.9

    def test_decay_fit_needs_hits(self):
        prof = reach_profile(2, 0.1, [5, 50], 5, seed=0)
        with pytest.raises(ValueError):
            decay_fit(prof)


class TestMk:
    def test_zero(self):
        assert m_k_statistic(2, 0.0, 4, 10).hits == 0

    def test_k_guard(self):
        with pytest.raises(ValueError):
            m_k_statistic(2, 1.0, 1, 10)

    def test_subcritical_nonincreasing(self):
        p4 = m_k_statistic(2, 0.5, 4, 300, seed=11)
        p8 = m_k_statistic(2, 0.5, 8, 300, seed=11)
        assert p8.ci[0] <= p4.ci[1]
        assert p8.estimate <= p4.estimate

    def test_supercritical_contrast(self):
        p4 = m_k_statistic(2, 2.0, 4, 100, seed=12)
        p8 = m_k_statistic(2, 2.0, 8, 100, seed=12)
        assert p8.estimate > 0.8 and p4.estimate > 0.8


class TestLambdaC:
    def test_not_bracketed(self):
        with pytest.raises(TransitionNotBracketed):
            estimate_lambda_c(2, [0.05, 0.1, 0.15], [5], 30, seed=0)
        with pytest.raises(TransitionNotBracketed):
            estimate_lambda_c(2, [], [5], 30)

    def test_boolean_against_known_value(self):
        """Disc-graph critical intensity at connection distance 1 is 1.4364 (4 * 0.35911)."""
        est = estimate_lambda_c(2, np.arange(1.1, 1.81, 0.07), [10, 20, 30], 120, seed=3,
                                model="boolean", n_boot=200)
        assert est.ci[0] - 0.05 <= 1.4364 <= est.ci[1] + 0.05
        assert abs(est.estimate - 1.4364) < 0.15

    def test_size_stability_ab(self):
        est = estimate_lambda_c(2, np.arange(0.8, 1.21, 0.05), [10, 20, 30], 100, seed=4,
                                n_boot=200, extrapolate=False)
        c20, c30 = est.crossings[20.0], est.crossings[30.0]
        assert c20.ci[0] <= c30.ci[1] and c30.ci[0] <= c20.ci[1]
        assert est.table and {"lambda", "R", "trials", "hits", "freq", "ci_lo", "ci_hi"} <= set(est.table[0])


class TestConstants:
    def test_c2(self):
        assert c2_constant(2, 0.0) == 0
        assert c2_constant(2, 1 / (3 * ball_volume(3))) == pytest.approx(1.0, abs=1e-14)
        for lam in (0.3, 1.0, 2.5):
            assert lambda_from_c2(3, c2_constant(3, lam)) == pytest.approx(lam, rel=1e-12)


class TestCovered:
    def test_empty(self):
        assert not covered_predicate(sample_ab(2, 1.0, 0, 0, seed=0), -0.5, 0.5, 0.05)

    def test_spacing_guard(self):
        with pytest.raises(ValueError):
            covered_predicate(sample_ab(2, 1.0, 1, 1, seed=0), -0.5, 0.5, 1 / (2 * math.sqrt(2)))

    def test_dense(self):
        hits = sum(covered_predicate(sample_ab(2, 1.0, 200, 200, seed=stream(13, t)), -0.5, 0.5, 0.03)
                   for t in range(50))
        assert hits / 50 > 0.9

    def test_soundness(self):
        rng = np.random.default_rng(14)
        positives = 0
        for t in range(60):
            lam = float(rng.uniform(40, 200))
            s = sample_ab(2, 1.0, lam, lam, seed=stream(14, t))
            if covered_predicate(s, -0.5, 0.5, 0.03):
                positives += 1
                Y = rng.uniform(-0.5, 0.5, size=(10**4, 2))
                assert covered_directly(s, Y)
        assert positives > 10


class TestCapProjection:
    def test_rho_limit(self):
        assert projection_window_radius(1 - 1e-12, 0.1) < 1e-3
        assert projection_window_radius(0.0, 0.1) == pytest.approx(20.0)

    def test_intensity_bounds(self):
        n = 10**6
        rep = cap_projection_intensity_check(2, n, 3 * n ** -0.5, 0.9, 12, seed=15)
        assert rep.within_bounds
        assert rep.rho_consistent
        assert rep.chi2_pvalue > 1e-3
        assert rep.lower_bound < rep.upper_bound

    def test_t_guard(self):
        with pytest.raises(ValueError):
            cap_projection_intensity_check(2, 100, 0.1, 0.1, 2, t0=0.5)


class TestBond:
    def test_p_one(self):
        assert bond_percolation_box(2, 5, 1.0, 10).estimate == 1.0

    def test_p_zero(self):
        assert bond_percolation_box(2, 5, 0.0, 10, epsilon=0.5).estimate == 0.0

    def test_p_range(self):
        with pytest.raises(ValueError):
            bond_percolation_box(2, 5, 1.5, 10)

    def test_dense_box(self):
        assert bond_percolation_box(2, 10, 0.99, 50, seed=16).estimate > 0.9

    def test_3d(self):
        assert bond_percolation_box(3, 4, 1.0, 3).estimate == 1.0
