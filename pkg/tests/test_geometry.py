import math

import numpy as np
import pytest

from ccplan.geometry import (
    Capsule,
    Ellipsoid,
    HalfEllipsoid,
    MinkowskiSum,
    Polytope,
    Pose,
    Posed,
    Sphere,
    box,
    distance,
    intersects,
    mahalanobis_contact,
    point_body,
    support,
)


def rand_spd(rng, dim, scale=1.0):
    A = rng.normal(size=(dim, dim))
    return scale * (A @ A.T + dim * np.eye(dim))


class TestSupport:
    def test_sphere_support(self):
        s = Sphere([0, 0, 0], 1.0)
        np.testing.assert_allclose(support(s, [0, 0, 1]), [0, 0, 1])

    def test_box_vertex_support(self):
        b = box([1, 1, 1])
        np.testing.assert_allclose(support(b, [1, 1, 1]), [1, 1, 1])

    def test_minkowski_sum_of_spheres(self):
        m = MinkowskiSum(Sphere([0, 0, 0], 1.0), Sphere([0, 0, 0], 1.0))
        np.testing.assert_allclose(support(m, [1, 0, 0]), [2, 0, 0])

    def test_zero_direction_rejected(self):
        with pytest.raises(ValueError):
            support(Sphere([0, 0], 1.0), [0, 0])

    def test_scale_invariance(self):
        rng = np.random.default_rng(0)
        bodies = [Sphere([0.3, -1, 2], 0.7), box([1, 2, 0.5], center=[1, 0, 0]),
                  Capsule([0, 0, 0], [1, 1, 0], 0.2)]
        for body in bodies:
            for _ in range(100):
                v = rng.normal(size=3)
                lam = rng.uniform(0.1, 10)
                np.testing.assert_allclose(support(body, v),
                                           support(body, lam * v), atol=1e-12)

    def test_minkowski_property_random(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            a = Sphere(rng.normal(size=3), rng.uniform(0.1, 1))
            b = Polytope(rng.normal(size=(5, 3)))
            m = MinkowskiSum(a, b)
            v = rng.normal(size=3)
            np.testing.assert_allclose(
                support(m, v), support(a, v) + support(b, v), atol=1e-12)

    def test_posed_support(self):
        pose = Pose.planar(math.pi / 2, np.array([1.0, 0.0]))
        b = Posed(pose, box([1.0, 0.5]))
        # Rotated by 90 degrees: half-extent 0.5 now lies along x.
        np.testing.assert_allclose(support(b, [1, 0])[0], 1.5, atol=1e-12)


class TestEllipsoidSupport:
    def test_unit_sphere(self):
        e = Ellipsoid(np.eye(3), 1.0)
        np.testing.assert_allclose(support(e, [0, 0, 1]), [0, 0, 1], atol=1e-12)

    def test_anisotropic_closed_form(self):
        e = Ellipsoid(np.diag([4.0, 1.0, 1.0]), 1.0)
        np.testing.assert_allclose(support(e, [1, 0, 0]), [2, 0, 0], atol=1e-12)

    def test_degenerate_zero_radius(self):
        e = Ellipsoid(np.diag([4.0, 1.0, 1.0]), 0.0)
        np.testing.assert_allclose(support(e, [1, 2, 3]), [0, 0, 0])

    def test_support_maximizes(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            S = rand_spd(rng, 3)
            c = rng.uniform(0.1, 5)
            e = Ellipsoid(S, c)
            v = rng.normal(size=3)
            p = support(e, v)
            # On the boundary and optimal against sampled boundary points.
            assert p @ np.linalg.solve(S, p) == pytest.approx(c, rel=1e-9)
            L = np.linalg.cholesky(S)
            us = rng.normal(size=(200, 3))
            us /= np.linalg.norm(us, axis=1, keepdims=True)
            samples = math.sqrt(c) * us @ L.T
            assert (samples @ v).max() <= p @ v + 1e-9


class TestHalfEllipsoidSupport:
    def test_halfspace_inactive(self):
        h = HalfEllipsoid(np.eye(3), 1.0, [0, 0, 1])
        np.testing.assert_allclose(support(h, [0, 0, 1]), [0, 0, 1], atol=1e-12)

    def test_antiparallel_gives_slice_point(self):
        h = HalfEllipsoid(np.eye(3), 1.0, [0, 0, 1])
        p = support(h, [0, 0, -1])
        assert abs(p[2]) < 1e-9
        assert np.linalg.norm(p) == pytest.approx(1.0, abs=1e-9)

    def test_2d_unconstrained(self):
        h = HalfEllipsoid(np.eye(2), 4.0, [1, 0])
        v = np.array([math.cos(math.pi / 4), math.sin(math.pi / 4)])
        np.testing.assert_allclose(support(h, v),
                                   [math.sqrt(2), math.sqrt(2)], atol=1e-12)

    def test_feasible_and_undominated(self):
        rng = np.random.default_rng(3)
        for _ in range(30):
            S = rand_spd(rng, 3)
            c = rng.uniform(0.1, 4)
            n = rng.normal(size=3)
            n /= np.linalg.norm(n)
            h = HalfEllipsoid(S, c, n)
            v = rng.normal(size=3)
            p = support(h, v)
            # Feasibility within 1e-9.
            assert p @ np.linalg.solve(S, p) <= c * (1 + 1e-9)
            assert n @ p >= -1e-9
            # Not dominated by dense boundary sampling.
            L = np.linalg.cholesky(S)
            us = rng.normal(size=(100_000, 3))
            us /= np.linalg.norm(us, axis=1, keepdims=True)
            samples = math.sqrt(c) * us @ L.T
            ok = samples @ n >= 0
            assert (samples[ok] @ v).max() <= p @ v + 1e-9


class TestDistance:
    def test_sphere_sphere_separated(self):
        a = Sphere([0, 0, 0], 1.0)
        b = Sphere([3, 0, 0], 1.0)
        res = distance(a, b)
        assert res.signed_distance == pytest.approx(1.0, abs=1e-9)
        np.testing.assert_allclose(res.normal, [1, 0, 0], atol=1e-9)
        np.testing.assert_allclose(res.witness_a, [1, 0, 0], atol=1e-9)

    def test_box_point_face(self):
        res = distance(box([1, 1, 1]), point_body([3.0, 0.0, 0.0]))
        assert res.signed_distance == pytest.approx(2.0, abs=1e-9)
        np.testing.assert_allclose(res.witness_a, [1, 0, 0], atol=1e-6)

    def test_sphere_sphere_penetrating(self):
        a = Sphere([0, 0, 0], 1.0)
        b = Sphere([1, 0, 0], 1.0)
        res = distance(a, b)
        assert res.signed_distance == pytest.approx(-1.0, abs=1e-9)

    def test_coincident_spheres(self):
        a = Sphere([0, 0, 0], 1.0)
        res = distance(a, Sphere([0, 0, 0], 1.0))
        assert res.signed_distance == pytest.approx(-2.0, abs=1e-6)

    def test_box_box_penetration_2d(self):
        a = box([1.0, 1.0])
        b = box([1.0, 1.0], center=[1.5, 0.0])
        res = distance(a, b)
        assert res.signed_distance == pytest.approx(-0.5, abs=1e-8)

    def test_box_box_penetration_3d(self):
        a = box([1.0, 1.0, 1.0])
        b = box([1.0, 1.0, 1.0], center=[1.2, 0.1, 0.0])
        res = distance(a, b)
        assert res.signed_distance == pytest.approx(-0.8, abs=1e-6)

    def test_random_sphere_pairs_match_closed_form(self):
        rng = np.random.default_rng(4)
        for _ in range(200):
            dim = int(rng.integers(2, 4))
            c1, c2 = rng.normal(size=dim), rng.normal(size=dim)
            r1, r2 = rng.uniform(0.05, 1, size=2)
            expect = np.linalg.norm(c1 - c2) - r1 - r2
            res = distance(Sphere(c1, r1), Sphere(c2, r2))
            assert res.signed_distance == pytest.approx(expect, abs=1e-6)

    def test_random_sphere_box_match_closed_form(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            h = rng.uniform(0.2, 1.5, size=3)
            c = rng.normal(size=3) * 3
            r = rng.uniform(0.05, 0.8)
            closest = np.clip(c, -h, h)
            expect = np.linalg.norm(c - closest) - r
            if abs(expect) < 1e-3 or np.all(np.abs(c) < h):
                continue  # closed form differs inside; skip contact band
            res = distance(box(h), Sphere(c, r))
            assert res.signed_distance == pytest.approx(expect, abs=1e-6)

    def test_continuity_through_contact(self):
        # Translate a sphere along a line through a box; sd must be continuous
        # and monotone on approach.
        prev = None
        for x in np.linspace(3.0, 0.0, 61):
            res = distance(box([1, 1, 1]), Sphere([x, 0.2, 0.1], 0.5))
            if prev is not None:
                assert res.signed_distance <= prev + 1e-4
                assert abs(res.signed_distance - prev) < 0.06
            prev = res.signed_distance

    def test_witness_consistency(self):
        rng = np.random.default_rng(6)
        for _ in range(100):
            a = Polytope(rng.normal(size=(6, 3)))
            b = Polytope(rng.normal(size=(6, 3)) + np.array([4.0, 0, 0]))
            res = distance(a, b)
            if res.signed_distance > 0:
                gap = np.linalg.norm(res.witness_a - res.witness_b)
                assert gap == pytest.approx(res.signed_distance, abs=1e-6)
                assert np.linalg.norm(res.normal) == pytest.approx(1.0, abs=1e-9)


class TestIntersects:
    def test_far_spheres(self):
        assert not intersects(Sphere([0, 0, 0], 1), Sphere([3, 0, 0], 1))

    def test_identical_spheres(self):
        assert intersects(Sphere([0, 0, 0], 1), Sphere([0, 0, 0], 1))

    def test_implicit_sum_vs_far_box(self):
        body = MinkowskiSum(Sphere([0, 0, 0], 1.0), Ellipsoid(np.eye(3), 1.0))
        assert not intersects(body, box([1, 1, 1], center=[10, 0, 0]))

    def test_implicit_sum_overlap(self):
        body = MinkowskiSum(Sphere([0, 0, 0], 1.0), Ellipsoid(np.eye(3), 4.0))
        assert intersects(body, box([1, 1, 1], center=[3.5, 0, 0]))

    def test_consistent_with_distance(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            a = Sphere(rng.normal(size=2), rng.uniform(0.1, 1))
            b = box(rng.uniform(0.2, 1, size=2), center=rng.normal(size=2))
            res = distance(a, b)
            if abs(res.signed_distance) > 1e-6:
                assert intersects(a, b) == (res.signed_distance <= 0)


class TestMahalanobisContact:
    def test_point_point(self):
        S = np.diag([4.0, 1.0])
        L = np.linalg.cholesky(S)
        c, wa, wb = mahalanobis_contact(point_body([2.0, 0.0]),
                                        point_body([0.0, 0.0]), L)
        assert c == pytest.approx(1.0, rel=1e-9)
        np.testing.assert_allclose(wa, [2, 0])

    def test_matches_sampled_minimum(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            S = rand_spd(rng, 2)
            L = np.linalg.cholesky(S)
            a = box(rng.uniform(0.2, 0.6, size=2), center=rng.normal(size=2) * 3)
            b = Sphere(rng.normal(size=2), rng.uniform(0.1, 0.5))
            c, wa, wb = mahalanobis_contact(a, b, L)
            # Brute-force sample pairs of boundary points.
            Sinv = np.linalg.inv(S)
            best = np.inf
            for _ in range(4000):
                v1, v2 = rng.normal(size=2), rng.normal(size=2)
                pa, pb = a.support(v1), b.support(v2)
                ta = rng.uniform(size=(1,))
                d = pa - pb
                best = min(best, float(d @ Sinv @ d))
            assert c <= best + 1e-6
