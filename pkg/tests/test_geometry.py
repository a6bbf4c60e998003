import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hat.core import FeatureVector
from hat.geometry import (
    ClusterModel,
    assign_cluster,
    fit_kde,
    incremental_kmeans,
    kde_logdensity,
    median_heuristic_bandwidth,
)
from bruteforce import brute_kde_logdensity


def fv(*vals):
    return FeatureVector(values=np.array(vals, dtype=float))


class TestKde:
    def test_symmetric_midpoint_is_exactly_minus_one(self):
        # points {0, 2}, h=1, query 1: both kernels e^-1 -> log e^-1 = -1
        model = fit_kde([fv(0.0), fv(2.0)], bandwidth=1.0)
        assert math.isclose(kde_logdensity(model, fv(1.0)), -1.0, abs_tol=1e-9)

    def test_on_point_hand_value(self):
        # query 0: log((e^0 + e^-2)/2) = -0.56611...
        model = fit_kde([fv(0.0), fv(2.0)], bandwidth=1.0)
        expected = math.log((1.0 + math.exp(-2.0)) / 2.0)
        got = kde_logdensity(model, fv(0.0))
        assert math.isclose(got, expected, abs_tol=1e-12)
        assert math.isclose(got, -0.5662, abs_tol=5e-5)

    def test_single_point_at_kernel_center(self):
        model = fit_kde([fv(3.0, 4.0)], bandwidth=2.0)
        assert kde_logdensity(model, fv(3.0, 4.0)) == 0.0

    def test_matches_loop_reimplementation(self):
        pts = [fv(0.1, 0.2), fv(1.0, -0.5), fv(-2.0, 0.0)]
        model = fit_kde(pts, bandwidth=0.7)
        q = fv(0.5, 0.5)
        expected = brute_kde_logdensity([p.values.tolist() for p in pts], 0.7, [0.5, 0.5])
        assert math.isclose(kde_logdensity(model, q), expected, rel_tol=1e-12)

    def test_invalid_bandwidth(self):
        with pytest.raises(ValueError):
            fit_kde([fv(0.0)], bandwidth=0.0)
        with pytest.raises(ValueError):
            fit_kde([fv(0.0)], bandwidth=-1.0)

    def test_empty_points(self):
        with pytest.raises(ValueError):
            fit_kde([], bandwidth=1.0)

    def test_permutation_invariance(self):
        pts = [fv(float(i)) for i in range(5)]
        a = fit_kde(pts, bandwidth=1.3)
        b = fit_kde(list(reversed(pts)), bandwidth=1.3)
        q = fv(2.2)
        assert math.isclose(kde_logdensity(a, q), kde_logdensity(b, q), rel_tol=1e-12)

    def test_mass_added_at_query_point_increases_density(self):
        q = fv(0.5)
        sparse = fit_kde([fv(0.0), fv(2.0)], bandwidth=1.0)
        dense = fit_kde([fv(0.0), fv(2.0), fv(0.5)], bandwidth=1.0)
        assert kde_logdensity(dense, q) > kde_logdensity(sparse, q)

    def test_median_heuristic_deterministic(self):
        pts = [fv(float(i), float(i % 3)) for i in range(40)]
        assert median_heuristic_bandwidth(pts, seed=5) == median_heuristic_bandwidth(
            pts, seed=5
        )


class TestIncrementalKmeans:
    def test_two_well_separated_pairs(self):
        pts = [("a", fv(0.0)), ("b", fv(1.0)), ("c", fv(10.0)), ("d", fv(11.0))]
        model = incremental_kmeans(pts, fixed_centers=(), k_total=2, seed=0)
        centers = sorted(float(c.values[0]) for c in model.free_centers)
        assert centers == [0.5, 10.5]
        groups = {}
        for pid, c in model.assignment.items():
            groups.setdefault(c, set()).add(pid)
        assert {frozenset(g) for g in groups.values()} == {
            frozenset({"a", "b"}),
            frozenset({"c", "d"}),
        }

    def test_fixed_center_stays_and_free_converges(self):
        pts = [("a", fv(0.0)), ("b", fv(1.0)), ("c", fv(10.0)), ("d", fv(11.0))]
        fixed = (fv(0.0),)
        model = incremental_kmeans(pts, fixed_centers=fixed, k_total=2, seed=0)
        assert float(model.fixed_centers[0].values[0]) == 0.0
        # the free center ends at the mean of whichever points left the fixed one
        free = float(model.free_centers[0].values[0])
        fixed_members = {p for p, c in model.assignment.items() if c == 0}
        free_members = {p for p, c in model.assignment.items() if c == 1}
        expected = np.mean([{"a": 0.0, "b": 1.0, "c": 10.0, "d": 11.0}[p] for p in free_members])
        assert math.isclose(free, float(expected), rel_tol=1e-12)
        assert fixed_members and free_members

    def test_every_point_its_own_cluster(self):
        pts = [(f"p{i}", fv(float(i))) for i in range(5)]
        model = incremental_kmeans(pts, fixed_centers=(), k_total=5, seed=3)
        assert model.objective_history[-1] == 0.0
        assert len(set(model.assignment.values())) == 5

    def test_too_few_distinct_points(self):
        pts = [("a", fv(1.0)), ("b", fv(1.0)), ("c", fv(2.0))]
        with pytest.raises(ValueError):
            incremental_kmeans(pts, fixed_centers=(), k_total=3, seed=0)

    def test_k_below_fixed_count(self):
        with pytest.raises(ValueError):
            incremental_kmeans([("a", fv(0.0))], fixed_centers=(fv(1.0), fv(2.0)), k_total=1, seed=0)

    def test_objective_monotone(self):
        rng = np.random.default_rng(0)
        pts = [(f"p{i}", fv(*rng.normal(size=3))) for i in range(60)]
        model = incremental_kmeans(pts, fixed_centers=(fv(0.0, 0.0, 0.0),), k_total=6, seed=1)
        hist = model.objective_history
        assert all(b <= a + 1e-9 for a, b in zip(hist, hist[1:]))

    def test_fixed_centers_bit_identical(self):
        rng = np.random.default_rng(1)
        fixed = tuple(fv(*rng.normal(size=4)) for _ in range(3))
        before = [c.values.tobytes() for c in fixed]
        pts = [(f"p{i}", fv(*rng.normal(size=4))) for i in range(40)]
        model = incremental_kmeans(pts, fixed_centers=fixed, k_total=8, seed=2)
        assert [c.values.tobytes() for c in model.fixed_centers] == before

    def test_matches_plain_kmeans_when_no_fixed(self):
        # cross-check against an independent Lloyd run from the same init
        rng = np.random.default_rng(7)
        raw = rng.normal(size=(30, 2))
        pts = [(f"p{i}", fv(*row)) for i, row in enumerate(raw)]
        model = incremental_kmeans(pts, fixed_centers=(), k_total=4, seed=11)

        centers = np.stack([c.values for c in model.free_centers])
        # Lloyd fixed point: each center equals the mean of its members and
        # each point sits with its nearest center
        labels = np.array([model.assignment[f"p{i}"] for i in range(30)])
        for j in range(4):
            members = raw[labels == j]
            assert len(members) > 0
            assert np.allclose(centers[j], members.mean(axis=0), atol=1e-9)
        d = ((raw[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        assert np.array_equal(labels, d.argmin(axis=1))

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(min_value=0, max_value=10_000))
    def test_every_free_cluster_nonempty(self, seed):
        rng = np.random.default_rng(seed)
        pts = [(f"p{i}", fv(*rng.normal(size=2))) for i in range(20)]
        n_fixed = int(rng.integers(0, 3))
        fixed = tuple(fv(*rng.normal(size=2)) for _ in range(n_fixed))
        k_total = int(rng.integers(max(1, n_fixed), 8))
        if k_total < n_fixed:
            return
        model = incremental_kmeans(pts, fixed_centers=fixed, k_total=k_total, seed=seed)
        occupied = set(model.assignment.values())
        for j in range(n_fixed, k_total):
            assert j in occupied


class TestAssign:
    def _model(self):
        pts = [("a", fv(0.0)), ("b", fv(1.0)), ("c", fv(10.0)), ("d", fv(11.0))]
        return incremental_kmeans(pts, fixed_centers=(fv(5.0),), k_total=3, seed=0)

    def test_point_at_center(self):
        model = self._model()
        assert assign_cluster(model, fv(5.0)) == 0

    def test_equidistant_lower_index(self):
        model = ClusterModel(
            fixed_centers=(fv(0.0),),
            free_centers=(fv(2.0),),
            assignment={},
            objective_history=(0.0,),
            _centers=np.array([[0.0], [2.0]]),
        )
        assert assign_cluster(model, fv(1.0)) == 0

    def test_matches_linear_scan(self):
        model = self._model()
        centers = model._centers
        rng = np.random.default_rng(3)
        for _ in range(20):
            q = fv(float(rng.uniform(-5, 15)))
            expected = int(np.argmin([abs(float(c[0]) - float(q.values[0])) for c in centers]))
            assert assign_cluster(model, q) == expected
