import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uvsplat.shell import (adjusted_w, barycentric_matrix, barycentric_to_world,
                           clamp_barycentric, clamp_barycentric_many,
                           uv_to_barycentric, uv_to_barycentric_many)

RIGHT_CORNERS = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


class TestUvToBarycentric:
    def test_interior_point(self):
        phi = uv_to_barycentric([0.25, 0.25], RIGHT_CORNERS)
        np.testing.assert_allclose(phi, [0.5, 0.25, 0.25], atol=1e-15)

    def test_vertex(self):
        phi = uv_to_barycentric([0.0, 0.0], RIGHT_CORNERS)
        np.testing.assert_allclose(phi, [1.0, 0.0, 0.0], atol=1e-15)

    def test_centroid(self):
        phi = uv_to_barycentric(RIGHT_CORNERS.mean(axis=0), RIGHT_CORNERS)
        np.testing.assert_allclose(phi, [1 / 3, 1 / 3, 1 / 3], atol=1e-15)

    def test_outside_goes_negative(self):
        phi = uv_to_barycentric([-0.5, 0.25], RIGHT_CORNERS)
        assert phi.min() < 0
        assert abs(phi.sum() - 1.0) < 1e-12

    def test_degenerate_triangle_raises(self):
        bad = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]])
        with pytest.raises(ValueError):
            uv_to_barycentric([0.1, 0.1], bad)

    def test_matrix_matches_pointwise(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            corners = rng.uniform(-2, 2, (3, 2))
            e1 = corners[1] - corners[0]
            e2 = corners[2] - corners[0]
            if abs(e1[0] * e2[1] - e1[1] * e2[0]) < 1e-3:
                continue
            m = barycentric_matrix(corners)
            p = rng.uniform(-2, 2, 2)
            np.testing.assert_allclose(m @ [p[0], p[1], 1.0],
                                       uv_to_barycentric(p, corners), atol=1e-10)

    def test_batched_matches_scalar(self):
        rng = np.random.default_rng(4)
        pts = rng.uniform(-1, 2, (20, 2))
        batched = uv_to_barycentric_many(pts, np.broadcast_to(RIGHT_CORNERS, (20, 3, 2)))
        for p, phi in zip(pts, batched):
            np.testing.assert_allclose(phi, uv_to_barycentric(p, RIGHT_CORNERS), atol=1e-12)


class TestAdjustedW:
    def test_zero_w(self):
        assert adjusted_w([0.2, 0.3, 0.5], 0.0, [1.0, 2.0, 3.0]) == 0.0

    def test_uniform_scalers(self):
        # phi (1/3,1/3,1/3), omega (2,2,2), u_w 0.1 -> 0.2
        assert adjusted_w([1 / 3, 1 / 3, 1 / 3], 0.1, [2.0, 2.0, 2.0]) == pytest.approx(0.2)

    def test_vertex_isolation(self):
        t = 0.37
        assert adjusted_w([1.0, 0.0, 0.0], t, [4.0, 9.0, 16.0]) == pytest.approx(4.0 * t)


class TestBarycentricToWorld:
    POS = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    NRM = np.array([[0.0, 0.0, 1.0]] * 3)

    def test_centroid_with_offset(self):
        v = barycentric_to_world([1 / 3, 1 / 3, 1 / 3], 0.3, self.POS, self.NRM)
        np.testing.assert_allclose(v, [1 / 3, 1 / 3, 0.3], atol=1e-15)

    def test_vertex(self):
        v = barycentric_to_world([1.0, 0.0, 0.0], 0.0, self.POS, self.NRM)
        np.testing.assert_allclose(v, self.POS[0], atol=1e-15)

    def test_zero_w_stays_in_plane(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            phi = rng.dirichlet([1, 1, 1])
            v = barycentric_to_world(phi, 0.0, self.POS, self.NRM)
            assert abs(v[2]) < 1e-15


class TestClamp:
    def test_frozen_example(self):
        # min component lands exactly at 0
        phi = clamp_barycentric([-0.1, 0.5, 0.6])
        np.testing.assert_allclose(phi, [0.0, 0.461538461538, 0.538461538462], atol=1e-9)
        assert phi.min() == pytest.approx(0.0, abs=1e-15)

    def test_inside_unchanged(self):
        phi = np.array([0.2, 0.3, 0.5])
        assert clamp_barycentric(phi) is phi

    def test_centroid_fixed_point(self):
        np.testing.assert_array_equal(clamp_barycentric([1 / 3, 1 / 3, 1 / 3]),
                                      [1 / 3, 1 / 3, 1 / 3])

    @given(st.tuples(st.floats(-10, 10), st.floats(-10, 10)))
    @settings(max_examples=200)
    def test_idempotent_and_exact(self, ab):
        a, b = ab
        phi = np.array([a, b, 1.0 - a - b])
        out = clamp_barycentric(phi)
        assert abs(out.sum() - 1.0) < 1e-9
        if phi.min() < 0:
            assert abs(out.min()) < 1e-12
        again = clamp_barycentric(out)
        np.testing.assert_allclose(again, out, atol=1e-12)

    def test_many_matches_scalar(self):
        rng = np.random.default_rng(7)
        ab = rng.uniform(-3, 3, (100, 2))
        phis = np.column_stack([ab, 1.0 - ab.sum(axis=1)])
        batched = clamp_barycentric_many(phis)
        for phi, out in zip(phis, batched):
            np.testing.assert_allclose(out, clamp_barycentric(phi), atol=1e-14)
