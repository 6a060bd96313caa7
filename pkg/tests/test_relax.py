"""Reachable-set enclosures and certified per-pair distance bounds."""

import math

import numpy as np
import pytest

from boresight.cloud import synth_generate
from boresight.relax import (
    CONTAIN_SLACK,
    PairBounds,
    PolytopeCache,
    build_polytope,
    compute_pair_set,
    pair_bounds,
    reach_box,
    transform_polytope,
)
from boresight.rotation import AngleBox, EulerAngles, rotation_from_angles, rotation_matrices

PLANTED = EulerAngles.from_degrees(1.0, -0.5, 0.25)


def sample_rotated(l: np.ndarray, box: AngleBox, n: int, seed: int = 0) -> np.ndarray:
    """Oracle: dense sampling of R(angles) @ l over the box, shape (n, 3)."""
    rng = np.random.default_rng(seed)
    samples = box.sample(rng, n)
    # include the corners: extreme rotations often attain the enclosure faces
    corners = np.array(np.meshgrid(*zip(box.lows(), box.highs()))).T.reshape(-1, 3)
    samples = np.vstack([samples, corners])
    Rs = rotation_matrices(samples[:, 0], samples[:, 1], samples[:, 2])
    return Rs @ np.asarray(l, dtype=float)


def degenerate_box(a: EulerAngles) -> AngleBox:
    return AngleBox(a.alpha, a.alpha, a.beta, a.beta, a.gamma, a.gamma)


class TestReachBox:
    def test_degenerate_box_at_zero(self):
        k = reach_box([1.0, -2.0, 0.5], degenerate_box(EulerAngles(0, 0, 0)))
        assert np.allclose(k.lo, [1, -2, 0.5]) and np.allclose(k.hi, [1, -2, 0.5])

    def test_sampling_soundness(self):
        box = AngleBox.symmetric_deg(2.0)
        for l in ([1.0, 0.0, 0.0], [10.0, -20.0, 5.0], [0.0, 0.0, -30.0]):
            k = reach_box(l, box)
            pts = sample_rotated(l, box, 10_000)
            assert k.contains(pts, tol=1e-12).all()

    def test_inclusion_monotone_when_halved(self):
        box = AngleBox.symmetric_deg(2.0)
        half = AngleBox.symmetric_deg(1.0)
        k_full = reach_box([3.0, -1.0, 2.0], box)
        k_half = reach_box([3.0, -1.0, 2.0], half)
        assert np.all(k_half.lo >= k_full.lo - 1e-15)
        assert np.all(k_half.hi <= k_full.hi + 1e-15)
        assert np.all(k_half.widths() <= k_full.widths() + 1e-15)


class TestBuildPolytope:
    def test_degenerate_angle_box_single_vertex(self):
        a = EulerAngles(0.01, -0.02, 0.005)
        l = np.array([5.0, 1.0, -2.0])
        poly = build_polytope(l, degenerate_box(a))
        assert poly.is_point
        assert np.allclose(poly.vertices[0], rotation_from_angles(a) @ l, atol=1e-9)

    def test_zero_vector_gives_origin(self):
        poly = build_polytope(np.zeros(3), AngleBox.symmetric_deg(2.0))
        assert poly.is_point and np.allclose(poly.vertices, 0.0)

    def test_vertices_satisfy_halfspaces(self):
        poly = build_polytope([10.0, -20.0, 5.0], AngleBox.symmetric_deg(2.0))
        assert poly.contains(poly.vertices, tol=1e-8).all()

    def test_contains_sampled_reachable_points(self):
        box = AngleBox.symmetric_deg(2.0)
        for l in ([1.0, 0.0, 0.0], [10.0, -20.0, 5.0], [-3.0, 7.0, 25.0]):
            poly = build_polytope(l, box)
            pts = sample_rotated(l, box, 10_000)
            assert poly.contains(pts, tol=CONTAIN_SLACK).all()

    def test_vertex_norms_bracket_point_norm(self):
        # tangent cuts bound vertices from above near ||l||; the secant keeps
        # them from collapsing far inside the sphere
        l = np.array([10.0, -20.0, 5.0])
        lnorm = float(np.linalg.norm(l))
        poly = build_polytope(l, AngleBox.symmetric_deg(2.0))
        norms = np.linalg.norm(poly.vertices, axis=1)
        assert norms.max() <= lnorm * 1.01
        assert norms.min() >= lnorm * 0.99

    def test_enclosing_ball_covers_vertices(self):
        poly = build_polytope([4.0, 4.0, -1.0], AngleBox.symmetric_deg(2.0))
        d = np.linalg.norm(poly.vertices - poly.center, axis=1)
        assert d.max() <= poly.radius + 1e-12


class TestTransformPolytope:
    def test_identity(self):
        poly = build_polytope([1.0, 2.0, 3.0], AngleBox.symmetric_deg(1.0))
        out = transform_polytope(poly, np.zeros(3), np.eye(3))
        assert np.allclose(out, poly.vertices)

    def test_pure_translation(self):
        poly = build_polytope([1.0, 2.0, 3.0], AngleBox.symmetric_deg(1.0))
        out = transform_polytope(poly, np.array([5.0, 0.0, 0.0]), np.eye(3))
        assert np.allclose(out, poly.vertices + [5, 0, 0])

    def test_isometry(self):
        poly = build_polytope([1.0, 2.0, 3.0], AngleBox.symmetric_deg(1.0))
        R = rotation_from_angles(EulerAngles(0.5, -0.3, 1.1))
        out = transform_polytope(poly, np.array([1.0, 2.0, 3.0]), R)
        din = np.linalg.norm(poly.vertices[:, None] - poly.vertices[None, :], axis=-1)
        dout = np.linalg.norm(out[:, None] - out[None, :], axis=-1)
        assert np.abs(din - dout).max() <= 1e-12


def scene_pair_samples(hat, bar, i, j, box, n=1000, seed=0):
    """Oracle: exact squared pair distance at n sampled angles in the box."""
    rng = np.random.default_rng(seed)
    angles = box.sample(rng, n)
    Rs = rotation_matrices(angles[:, 0], angles[:, 1], angles[:, 2])
    p_hat = hat.s[i] + np.einsum("ij,njk,k->ni", hat.ins_rotation[i], Rs, hat.l[i])
    p_bar = bar.s[j] + np.einsum("ij,njk,k->ni", bar.ins_rotation[j], Rs, bar.l[j])
    d = p_hat - p_bar
    return np.einsum("ni,ni->n", d, d)


class TestPairBounds:
    def test_invalid_ordering_rejected(self):
        with pytest.raises(ValueError):
            PairBounds(c_lo=2.0, c_hi=1.0)

    def test_degenerate_box_is_exact(self, tiny_scene):
        hat, bar, _ = tiny_scene
        theta = EulerAngles.from_degrees(0.5, -0.25, 0.1)
        box = degenerate_box(theta)
        exact = scene_pair_samples(hat, bar, 0, 3, box, n=1)[0]
        pb = pair_bounds(hat.point(0), bar.point(3), box)
        assert pb.c_lo <= exact + 1e-6 and exact <= pb.c_hi + 1e-6
        assert pb.c_hi - pb.c_lo <= 1e-6

    def test_sampling_soundness_random_pairs(self, tiny_scene):
        hat, bar, _ = tiny_scene
        box = AngleBox.symmetric_deg(2.0)
        cache = PolytopeCache(box)
        rng = np.random.default_rng(4)
        for _ in range(30):
            i = int(rng.integers(len(hat)))
            j = int(rng.integers(len(bar)))
            pb = pair_bounds(hat.point(i), bar.point(j), box, cache)
            d2 = scene_pair_samples(hat, bar, i, j, box, n=1000, seed=i * 100 + j)
            assert d2.min() >= pb.c_lo - 1e-6
            assert d2.max() <= pb.c_hi + 1e-6

    def test_shrinking_box_converges(self, tiny_scene):
        hat, bar, _ = tiny_scene
        theta = PLANTED
        gaps = []
        for half_deg in (2.0, 0.5, 0.1, 0.01):
            h = math.radians(half_deg)
            box = AngleBox(
                theta.alpha - h, theta.alpha + h,
                theta.beta - h, theta.beta + h,
                theta.gamma - h, theta.gamma + h,
            )
            pb = pair_bounds(hat.point(1), bar.point(5), box)
            gaps.append(pb.c_hi - pb.c_lo)
        assert gaps[-1] <= 0.01 * gaps[0] + 1e-5
        assert all(b <= a + 1e-9 for a, b in zip(gaps, gaps[1:]))


class TestComputePairSet:
    def test_matches_exact_pair_bounds(self, tiny_scene):
        hat, bar, _ = tiny_scene
        box = AngleBox.symmetric_deg(2.0)
        ps = compute_pair_set(hat, bar, box, refine="all")
        cache = PolytopeCache(box)
        rng = np.random.default_rng(0)
        for k in rng.choice(ps.size, 50, replace=False):
            i, j = int(ps.i[k]), int(ps.j[k])
            pb = pair_bounds(hat.point(i), bar.point(j), box, cache)
            assert ps.c_lo[k] <= pb.c_lo + 1e-9
            assert ps.c_hi[k] >= pb.c_hi - 1e-9

    def test_cheap_bounds_sound_without_refinement(self, tiny_scene):
        hat, bar, _ = tiny_scene
        box = AngleBox.symmetric_deg(2.0)
        ps = compute_pair_set(hat, bar, box, refine="none")
        cache = PolytopeCache(box)
        for k in range(0, ps.size, 37):
            i, j = int(ps.i[k]), int(ps.j[k])
            pb = pair_bounds(hat.point(i), bar.point(j), box, cache)
            assert ps.c_lo[k] <= pb.c_lo + 1e-9
            assert ps.c_hi[k] >= pb.c_hi - 1e-9

    def test_monotone_for_nested_boxes(self, tiny_scene):
        hat, bar, _ = tiny_scene
        parent_box = AngleBox.symmetric_deg(2.0)
        child_box = AngleBox.symmetric_deg(1.0)
        parent = compute_pair_set(hat, bar, parent_box)
        child = compute_pair_set(hat, bar, child_box, pairs=parent)
        assert np.all(child.c_lo >= parent.c_lo - 1e-15)
        assert np.all(child.c_hi <= parent.c_hi + 1e-15)

    def test_rejects_unknown_mode(self, tiny_scene):
        hat, bar, _ = tiny_scene
        with pytest.raises(ValueError):
            compute_pair_set(hat, bar, AngleBox.symmetric_deg(2.0), refine="maybe")

    def test_sampling_soundness_full_set(self, tiny_scene):
        hat, bar, _ = tiny_scene
        box = AngleBox.symmetric_deg(2.0)
        ps = compute_pair_set(hat, bar, box)
        rng = np.random.default_rng(9)
        angles = box.sample(rng, 50)
        Rs = rotation_matrices(angles[:, 0], angles[:, 1], angles[:, 2])
        lo = ps.c_lo.reshape(len(hat), len(bar))
        hi = ps.c_hi.reshape(len(hat), len(bar))
        for R in Rs:
            p_hat = hat.s + np.einsum("nij,jk,nk->ni", hat.ins_rotation, R, hat.l)
            p_bar = bar.s + np.einsum("nij,jk,nk->ni", bar.ins_rotation, R, bar.l)
            d = p_hat[:, None, :] - p_bar[None, :, :]
            d2 = np.einsum("ijk,ijk->ij", d, d)
            assert np.all(d2 >= lo - 1e-6)
            assert np.all(d2 <= hi + 1e-6)
