import math
from fractions import Fraction

import numpy as np
import pytest

from borsuklab.embedding import (
    BadPatchEmbedding,
    BumpLayer,
    BumpSum,
    PreconditionError,
    Schedule,
    build_embedding,
    classify_cubes,
    iterate_perturbation,
    level_count,
    level_side,
    lipschitz_pairs,
    lipschitz_ratio,
    orthant_partition,
    perturb_once,
    sphere_probes,
    zero_function,
)
from borsuklab.sphere import sample_uniform, stereo_inverse


def brute_status(Z, s0, K, anchor, level):
    """Good/bad of one cube straight from the definition, by recursion over children."""
    anchor = np.asarray(anchor, dtype=np.int64)
    d = len(anchor)
    if level == 0:
        lo = anchor * s0
        return bool(np.any(np.all((Z >= lo) & (Z < lo + s0), axis=1)))
    f = K ** level
    bad = 0
    for off in np.ndindex(*([f] * d)):
        if not brute_status(Z, s0, K, anchor * f + np.asarray(off), level - 1):
            bad += 1
            if bad > 1:
                return False
    return True


def ball_count_brute(centers, V, radius):
    D = np.linalg.norm(centers[:, None, :] - V[None, :, :], axis=2)
    return (D < radius).sum(axis=1)


class TestCubes:
    def test_side_recursion(self):
        for K in (2, 3):
            for i in range(1, 6):
                assert level_side(1.0, K, i) == K ** i * level_side(1.0, K, i - 1)

    def test_level_count(self):
        assert level_count(10**5) == math.ceil(2 * math.log(math.log(10**5)))
        assert level_count(2) == 0

    def test_no_points(self):
        h = classify_cubes(np.zeros((0, 2)), 0.5, 2, 2, roi_radius=10)
        assert h.n_bad(0) == h.n_cubes(0) > 0
        assert h.n_bad(1) == h.n_cubes(1)
        assert h.n_bad(2) == h.n_cubes(2)

    def test_one_point_per_cube(self):
        s0 = 0.5
        h0 = classify_cubes(np.zeros((0, 2)), s0, 2, 2, roi_radius=10)
        Z = (h0.index[0] + 0.5) * s0
        h = classify_cubes(Z, s0, 2, 2, roi_radius=10)
        for i in range(3):
            assert h.n_bad(i) == 0

    def test_against_definition(self):
        rng = np.random.default_rng(0)
        s0, K = 0.25, 2
        for trial in range(3):
            Z = rng.uniform(-6, 6, size=(int(rng.integers(300, 1500)), 2))
            h = classify_cubes(Z, s0, K, 2, roi_radius=6)
            for i in range(3):
                pick = rng.choice(h.n_cubes(i), size=min(15, h.n_cubes(i)), replace=False)
                for p in pick:
                    assert h.good[i][p] == brute_status(Z, s0, K, h.index[i][p], i)

    def test_children_nested(self):
        h = classify_cubes(np.random.default_rng(1).uniform(-3, 3, (500, 2)), 0.2, 2, 2, roi_radius=5)
        for i in range(1, 3):
            parents = np.floor_divide(h.index[i - 1], 2 ** i)
            assert {tuple(p) for p in parents} == {tuple(p) for p in h.index[i]}

    def test_window_restricts_region(self):
        Z = np.random.default_rng(2).uniform(-3, 3, (200, 2))
        full = classify_cubes(Z, 0.1, 2, 1, roi_radius=5)
        win = classify_cubes(Z, 0.1, 2, 1, roi_radius=5, window=(0.8, 1.2))
        assert win.n_cubes(1) < full.n_cubes(1)
        for a, g in zip(win.index[1], win.good[1]):
            assert full.status(1, a) == g

    def test_bad_cubes_rare_near_circle(self):
        """Monte Carlo at c = 280: level-2 cubes meeting the band around the unit circle are good."""
        n, eps, c = 10**5, 0.05, 280.0
        alpha = c * n ** -0.5
        s0 = 0.9 * eps / math.sqrt(2) * alpha
        runs, hits = 20, 0
        for seed in range(runs):
            X = sample_uniform(2, n, seed=seed)
            Z = X[:, :-1] / (1 - X[:, -1])[:, None]
            h = classify_cubes(Z, s0, 2, 2, window=(0.9, 1.1))
            a = h.bad_anchors(2)
            s = h.side(2)
            far = np.sqrt(np.sum(np.maximum(np.abs(a), np.abs(a + s)) ** 2, axis=1))
            near = np.sqrt(np.sum(np.maximum(0, np.maximum(a, -(a + s))) ** 2, axis=1))
            hits += bool(np.any((near <= 1.1) & (far >= 0.9)))
        assert hits / runs < 0.05


class TestBumpSum:
    def layer(self, d=2, seed=0):
        rng = np.random.default_rng(seed)
        P = rng.normal(size=(30, d))
        P /= np.linalg.norm(P, axis=1)[:, None]
        P *= 1 + rng.uniform(-0.01, 0.01, size=(30, 1))
        return BumpLayer(P, rng.choice([-1.0, 1.0], 30), 0.005, 0.05)

    def test_zero(self):
        f = zero_function(2)
        U = sphere_probes(2, 100)
        assert np.all(f(U) == 0)

    @pytest.mark.parametrize("d", [2, 3])
    def test_exact_oddness(self, d):
        f = zero_function(d).with_layer(self.layer(d, 0)).with_layer(self.layer(d, 1))
        U = sphere_probes(d, 2000, seed=3, toward=f.layers[0].points)
        plus, minus = f.evaluate_pair(U)
        assert np.all(plus + minus == 0)
        assert np.all(f(-U) == -f(U))
        assert np.any(plus != 0)

    def test_serialisation_round_trip(self):
        f = zero_function(2).with_layer(self.layer())
        g = BumpSum.from_dict(f.to_dict())
        U = sphere_probes(2, 500, toward=f.layers[0].points)
        assert np.array_equal(f(U), g(U))

    def test_single_bump_formula(self):
        p = np.array([[1.002, 0.0]])
        f = zero_function(2).with_layer(BumpLayer(p, np.array([1.0]), 0.004, 0.01))
        u = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]])
        expect = 0.004 * np.array([0.01 - 0.002, -(0.01 - 0.002), 0.0])
        assert np.allclose(f(u), expect, atol=1e-18)

    def test_dimension_check(self):
        with pytest.raises(ValueError):
            zero_function(2)(np.zeros((3, 3)))


class TestOrthantPartition:
    def test_empty(self):
        assert orthant_partition(np.zeros((0, 2)), 0.1, sphere_probes(2, 10)) == []

    def test_single(self):
        parts = orthant_partition(np.array([[0.5, -0.2]]), 0.1, sphere_probes(2, 10))
        assert len(parts) == 1 and parts[0].shape == (1, 2)

    def test_precondition_witness(self):
        V = np.array([[1.0, 0.0], [1.001, 0.0], [0.999, 0.0]])
        U = np.array([[1.0, 0.0]])
        with pytest.raises(PreconditionError) as exc:
            orthant_partition(V, 0.01, U, k=2)
        assert np.allclose(exc.value.witness, [1.0, 0.0])

    def test_postconditions_dense_grid(self):
        rng = np.random.default_rng(4)
        r, k = 0.05, 4
        # clumps of up to k points near the unit circle
        t = np.arange(12) * (2 * np.pi / 12) + 0.1
        centers = np.column_stack([np.cos(t), np.sin(t)])
        V = np.vstack([c + rng.uniform(-r / 3, r / 3, size=(int(rng.integers(1, k + 1)), 2))
                       for c in centers])
        # dense probe grid over the relevant annulus
        g = np.linspace(-1.2, 1.2, 481)
        G = np.stack(np.meshgrid(g, g), axis=-1).reshape(-1, 2)
        G = G[np.abs(np.linalg.norm(G, axis=1) - 1) < 0.1]
        cnt = ball_count_brute(G, V, r)
        assert cnt.max() <= k
        parts = orthant_partition(V, r, G, k)
        assert len(parts) <= k * 2 ** 2
        merged = np.vstack(parts)
        assert sorted(map(tuple, merged)) == sorted(map(tuple, V))
        for P in parts:
            signs = P < 0
            assert np.all(signs == signs[0])
            assert ball_count_brute(G, P, r / 4).max() <= 1


class TestPerturbOnce:
    a, r = 0.004, 0.005

    def test_empty_points(self):
        f = zero_function(2)
        g, rep = perturb_once(f, np.zeros((0, 2)), self.a, self.r, sphere_probes(2, 100))
        assert g is f and rep.n_points == 0

    def test_far_point_has_no_effect(self):
        f = zero_function(2)
        p = np.array([[1.5, 0.1]])
        U = sphere_probes(2, 5000, toward=p)
        g, _ = perturb_once(f, p, self.a, self.r, U)
        assert np.all(g(U) == f(U))

    def test_single_interfering_point(self):
        f = zero_function(2)
        p = np.array([[0.6 * 1.001, 0.8 * 1.001]])
        U = sphere_probes(2, 10**4, toward=p)
        lip = lipschitz_pairs(2, 20000, seed=1)
        g, rep = perturb_once(f, p, self.a, self.r, U, lip)
        assert rep.min_clearance >= self.a * self.r / 2
        assert rep.clearance_ok
        assert np.max(np.abs(g(U) - f(U))) < self.a * self.r
        assert np.all(g(U) + g(-U) == 0)
        assert lipschitz_ratio(g, *lip) <= 9 * self.a * (1 + 1e-6)
        assert rep.max_active_bumps <= 1

    def test_sign_rule(self):
        f = zero_function(2)
        inside = np.array([[0.999, 0.0]])
        outside = np.array([[0.0, 1.001]])
        g, _ = perturb_once(f, np.vstack([inside, outside]), self.a, self.r,
                            sphere_probes(2, 1000, toward=np.vstack([inside, outside])))
        assert list(g.layers[0].signs) == [1.0, -1.0]
        # bumps push the graph away: outwards past the inside point, inwards for the other
        assert g(np.array([1.0, 0.0])) > 0
        assert g(np.array([0.0, 1.0])) < 0

    def test_preconditions(self):
        f = zero_function(2)
        U = sphere_probes(2, 100)
        with pytest.raises(PreconditionError):
            perturb_once(f, np.array([[1.0, 0.0]]), 0.02, self.r, U)
        with pytest.raises(PreconditionError):
            perturb_once(f, np.array([[1.0, 0.0]]), self.a, 0.01, U)
        with pytest.raises(PreconditionError):
            perturb_once(f, np.array([[1.0, 0.001], [-1.0, 0.001]]), self.a, self.r, U)
        with pytest.raises(PreconditionError):
            perturb_once(f, np.array([[1.0, 0.0], [1.001, 0.0]]), self.a, self.r,
                         np.array([[1.0, 0.0]]))

    def test_disjoint_supports(self):
        rng = np.random.default_rng(5)
        t = np.sort(rng.uniform(0.05, np.pi / 2 - 0.05, 40))
        t = t[np.concatenate([[True], np.diff(t) > 3 * self.r])]
        V = np.column_stack([np.cos(t), np.sin(t)]) * (1 + rng.uniform(-0.002, 0.002, (len(t), 1)))
        U = sphere_probes(2, 10**4, toward=V)
        g, rep = perturb_once(zero_function(2), V, self.a, self.r, U)
        assert rep.max_active_bumps <= 1
        assert rep.clearance_ok


class TestIterate:
    def test_empty(self):
        f = zero_function(2)
        g, rep = iterate_perturbation(f, np.zeros((0, 2)), 4, 0.001, 0.004, sphere_probes(2, 100))
        assert g is f and rep.parts == []

    def test_k1_single_orthant_equals_one_step(self):
        a, r = 0.001, 0.004
        t = np.array([0.3, 0.7, 1.1])
        V = np.column_stack([np.cos(t), np.sin(t)]) * 1.0005
        U = sphere_probes(2, 3000, toward=V)
        g, rep = iterate_perturbation(zero_function(2), V, 1, a, r, U)
        h, _ = perturb_once(zero_function(2), V, a, r / 4, U)
        assert len(rep.parts) == 1
        assert np.array_equal(g(U), h(U))

    def test_synthetic_instance(self):
        """Fifty points in clumps of up to k inside one quadrant, all checks on 10^4 probes."""
        rng = np.random.default_rng(6)
        a, r, k = 1e-5, 0.006, 4
        t = np.linspace(0.08, np.pi / 2 - 0.08, 13)
        centers = np.column_stack([np.cos(t), np.sin(t)])
        V = np.vstack([c + rng.uniform(-r / 4, r / 4, size=(k, 2)) for c in centers])[:50]
        U = sphere_probes(2, 10**4, toward=V)
        lip = lipschitz_pairs(2, 20000, seed=2)
        g, rep = iterate_perturbation(zero_function(2), V, k, a, r, U, lip)
        steps = len(rep.parts)
        assert 1 < steps <= k * 4
        assert rep.schedule.matches_closed_form()
        assert rep.clearance_ok and rep.nested_ok
        assert np.all(g(U) + g(-U) == 0)
        assert np.max(np.abs(g(U))) < float(sum(rep.schedule.shifts))
        assert rep.final_clearance > 0
        assert lipschitz_ratio(g, *lip) <= float(rep.schedule.amplitudes[steps]) * (1 + 1e-6)

    def test_inadmissible_schedule_rejected_first(self):
        V = np.array([[1.0, 0.001], [1.0, -0.001]])
        with pytest.raises(PreconditionError, match="inadmissible"):
            iterate_perturbation(zero_function(2), V, 1, 0.009, 0.004, sphere_probes(2, 100))


class TestSchedule:
    @pytest.mark.parametrize("a,r", [(Fraction(1, 1000), Fraction(1, 300)), (0.002, 0.005)])
    def test_closed_forms_exact(self, a, r):
        s = Schedule.build(a, r, 12)
        assert s.matches_closed_form()
        a, r = Fraction(a), Fraction(r)
        for i in range(13):
            assert s.amplitudes[i] == 9 ** i * a
            assert s.radii[i] == Fraction(3) ** (i * (i - 1)) * a ** i * r / 2 ** (i + 2)

    def test_shift_is_twice_next_radius(self):
        s = Schedule.build(Fraction(1, 512), Fraction(1, 256), 8)
        for i in range(1, 9):
            assert s.shifts[i] == 2 * s.radii[i]

    def test_admissible(self):
        assert Schedule.build(1e-4, 0.004, 3).admissible()[0]
        ok, why = Schedule.build(0.005, 0.004, 3).admissible()
        assert not ok and why.startswith("a_")


class TestBuildEmbedding:
    def test_no_bad_cubes_gives_zero(self):
        d, eps, s0 = 2, 0.05, 0.02
        delta = 0.9 * eps / math.sqrt(d)
        m = np.arange(-70, 70)
        G = (np.stack(np.meshgrid(m, m), axis=-1).reshape(-1, 2) + 0.5) * s0
        X = stereo_inverse(G)
        n = len(X)
        c = s0 / delta * math.sqrt(n)
        est = BadPatchEmbedding(epsilon=eps, c=c, delta=delta, n_probes=2000,
                                n_lipschitz=5000).fit(X)
        rep = est.report_
        assert est.hierarchy_.n_bad(0) == 0
        assert est.h_.n_layers == 0
        assert rep.success and rep.max_abs_h == 0

    def test_rejects_d1(self):
        with pytest.raises(ValueError):
            BadPatchEmbedding().fit(sample_uniform(1, 100, seed=0))

    @pytest.mark.parametrize("mode", ["effective", "proof"])
    def test_desk_scale_run(self, mode):
        X = sample_uniform(2, 10**5, seed=3)
        h, rep = build_embedding(X, 0.05, 280.0, constant=mode, seed=3,
                                 n_probes=10**4, n_lipschitz=20000)
        assert rep.n == 10**5 and rep.levels_used >= 1
        if rep.success:
            U = sphere_probes(2, 1000, seed=9)
            plus, minus = h.evaluate_pair(U)
            assert np.max(np.abs(plus + minus)) < 1e-12
            assert rep.lipschitz_ratio <= 0.05 * (1 + 1e-6)
            assert rep.coverage_failures == 0
            assert rep.max_abs_h < 10**5 ** (-0.45)
        d = rep.to_dict()
        assert d["success"] == rep.success and len(d["levels"]) == len(rep.level_reports)

    def test_estimator_api(self):
        est = BadPatchEmbedding(epsilon=0.1, c=100.0)
        assert est.get_params()["c"] == 100.0
        est.set_params(K=3)
        assert est.K == 3
