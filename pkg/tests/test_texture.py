import logging
import struct

import numpy as np
import pytest

from uvsplat.fixtures import icosphere, quad_mesh, subdivide_sharing_atlas
from uvsplat.mesh import build_mesh
from uvsplat.shell import uv_to_barycentric
from uvsplat.texture import (MAGIC, GaussianTexture, TexGaussian, TextureConfig,
                             densify, derive_bounding_points, frame_forward,
                             init_gaussians, load, prune, rebind, save, sigmoid)

from conftest import randomized_texture


def make_gaussian(u_r_lo, u_r_hi, theta=0.0, s_d=1.0, s_f=1.0, tri_id=0):
    return TexGaussian(tri_id=tri_id,
                       u_r_lo=np.asarray(u_r_lo, dtype=np.float64),
                       u_r_hi=np.asarray(u_r_hi, dtype=np.float64),
                       theta_d=theta, log_s_d=np.log(s_d), log_s_f=np.log(s_f),
                       opacity_logit=0.0, color=np.full(3, 0.5))


class TestBoundingPoints:
    def test_frozen_example(self):
        # right pair (0,0,0)-(2,0,0), theta 0, s_d 1, s_f 0.5
        g = make_gaussian([0, 0, 0], [2, 0, 0], theta=0.0, s_d=1.0, s_f=0.5)
        pts = derive_bounding_points(g)
        np.testing.assert_allclose(0.5 * (pts[0] + pts[1]), [1, 0, 0], atol=1e-15)
        np.testing.assert_allclose(pts[2], [1, 0, -1], atol=1e-15)   # down lo
        np.testing.assert_allclose(pts[3], [1, 0, 1], atol=1e-15)    # down hi
        np.testing.assert_allclose(pts[4], [1, -0.5, 0], atol=1e-15)  # forward lo
        np.testing.assert_allclose(pts[5], [1, 0.5, 0], atol=1e-15)   # forward hi

    def test_identity_rotation_of_orthogonal_seed(self):
        g = make_gaussian([0, 0, 0], [1, 0, 0], theta=0.0)
        ctx = frame_forward(GaussianTexture.from_single(g))
        np.testing.assert_array_equal(ctx.u_d[0], [0, 0, 1])

    def test_equal_scales_give_equal_pair_lengths(self):
        g = make_gaussian([0.1, 0.2, 0.0], [0.5, 0.4, 0.1], theta=0.7, s_d=0.3, s_f=0.3)
        pts = derive_bounding_points(g)
        assert np.linalg.norm(pts[3] - pts[2]) == pytest.approx(
            np.linalg.norm(pts[5] - pts[4]), abs=1e-12)

    def test_orthonormal_frame(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            lo = rng.normal(0, 1, 3)
            hi = lo + rng.normal(0, 1, 3)
            if np.linalg.norm(hi - lo) < 1e-6:
                continue
            g = make_gaussian(lo, hi, theta=rng.uniform(-4, 4),
                              s_d=rng.uniform(0.1, 2), s_f=rng.uniform(0.1, 2))
            ctx = frame_forward(GaussianTexture.from_single(g))
            assert abs(ctx.u_r[0] @ ctx.u_d[0]) < 1e-9
            assert abs(ctx.u_r[0] @ ctx.u_f[0]) < 1e-9
            assert abs(ctx.u_d[0] @ ctx.u_f[0]) < 1e-9
            for v in (ctx.u_r[0], ctx.u_d[0], ctx.u_f[0]):
                assert np.linalg.norm(v) == pytest.approx(1.0, abs=1e-9)

    def test_pair_midpoints_equal_center(self):
        g = make_gaussian([0.3, -0.2, 0.1], [0.9, 0.4, -0.3], theta=1.2, s_d=0.7, s_f=0.2)
        pts = derive_bounding_points(g)
        center = 0.5 * (g.u_r_lo + g.u_r_hi)
        for k in (0, 2, 4):
            np.testing.assert_allclose(0.5 * (pts[k] + pts[k + 1]), center, atol=1e-12)

    def test_fallback_seed_when_right_axis_is_w(self):
        g = make_gaussian([0, 0, 0], [0, 0, 1], theta=0.0)
        ctx = frame_forward(GaussianTexture.from_single(g))
        np.testing.assert_allclose(ctx.u_d[0], [0, 1, 0], atol=1e-12)

    def test_degenerate_right_axis_raises(self):
        g = make_gaussian([0.5, 0.5, 0], [0.5, 0.5, 0])
        with pytest.raises(ValueError, match="degenerate"):
            derive_bounding_points(g)


class TestInit:
    def test_three_per_triangle(self):
        mesh = icosphere(subdivisions=1)  # 80 triangles
        gt = init_gaussians(mesh)
        assert len(gt) == 3 * mesh.num_triangles
        np.testing.assert_array_equal(gt.tri_id, np.repeat(np.arange(80), 3))

    def test_corner_and_centroid_anchors(self, quad):
        gt = init_gaussians(quad)
        centroid = quad.uvs[0].mean(axis=0)
        for k in range(3):
            np.testing.assert_allclose(gt.u_r_lo[k, :2], quad.uvs[0, k], atol=1e-15)
            np.testing.assert_allclose(gt.u_r_hi[k, :2], centroid, atol=1e-15)
        assert np.all(gt.u_r_lo[:, 2] == 0) and np.all(gt.u_r_hi[:, 2] == 0)

    def test_centers_strictly_inside(self):
        mesh = icosphere(subdivisions=1)
        gt = init_gaussians(mesh)
        centers = 0.5 * (gt.u_r_lo[:, :2] + gt.u_r_hi[:, :2])
        for i in range(len(gt)):
            phi = uv_to_barycentric(centers[i], mesh.uvs[gt.tri_id[i]])
            assert phi.min() > 0

    def test_default_appearance(self, quad):
        gt = init_gaussians(quad)
        np.testing.assert_allclose(sigmoid(gt.opacity_logit), 0.1, atol=1e-12)
        np.testing.assert_allclose(gt.color, 0.5)


class TestDensify:
    def cfg(self):
        return TextureConfig()

    def test_all_below_threshold_is_identity(self, quad):
        gt = init_gaussians(quad)
        out, parents, n_surv = densify(gt, quad, np.zeros(len(gt)), self.cfg(),
                                       np.random.default_rng(0))
        assert out.field_equal(gt)
        assert n_surv == len(gt)
        np.testing.assert_array_equal(parents, np.arange(len(gt)))

    def test_split_large_increases_count_by_one(self, quad):
        gt = init_gaussians(quad)
        stats = np.zeros(len(gt))
        stats[2] = 1.0  # well above threshold; init scale is large vs 1% extent
        out, parents, n_surv = densify(gt, quad, stats, self.cfg(),
                                       np.random.default_rng(0))
        assert len(out) == len(gt) + 1
        assert n_surv == len(gt) - 1           # split parent replaced
        children = np.nonzero(parents == 2)[0]
        assert len(children) == 2
        assert np.all(out.tri_id[children] == gt.tri_id[2])

    def test_clone_small_keeps_parent(self, quad):
        gt = init_gaussians(quad)
        gt.log_s_d -= 5.0   # shrink so the scale measure is below the cutoff
        gt.log_s_f -= 5.0
        center = 0.5 * (gt.u_r_lo + gt.u_r_hi)
        gt.u_r_lo = center + (gt.u_r_lo - center) * 1e-3
        gt.u_r_hi = center + (gt.u_r_hi - center) * 1e-3
        stats = np.zeros(len(gt))
        stats[4] = 1.0
        out, parents, n_surv = densify(gt, quad, stats, self.cfg(),
                                       np.random.default_rng(0))
        assert len(out) == len(gt) + 1
        assert n_surv == len(gt)               # clone keeps the parent
        assert (parents == 4).sum() == 2

    def test_offspring_confined_to_triangle(self, quad):
        gt = init_gaussians(quad)
        stats = np.full(len(gt), 1.0)          # densify everything
        out, _, _ = densify(gt, quad, stats, self.cfg(), np.random.default_rng(3))
        ctx = frame_forward(out)
        worst = 0.0
        for i in range(len(out)):
            for k in range(6):
                phi = uv_to_barycentric(ctx.points[i, k, :2], quad.uvs[out.tri_id[i]])
                worst = min(worst, phi.min())
        assert worst >= -1e-6

    def test_densify_never_changes_tri_id(self, quad):
        gt = init_gaussians(quad)
        stats = np.full(len(gt), 1.0)
        out, parents, _ = densify(gt, quad, stats, self.cfg(), np.random.default_rng(1))
        np.testing.assert_array_equal(out.tri_id, gt.tri_id[parents])


class TestPrune:
    def test_identity_when_all_opaque(self, quad):
        gt = init_gaussians(quad)
        assert prune(gt, 0.005).field_equal(gt)

    def test_removes_transparent(self, quad):
        gt = init_gaussians(quad)
        from scipy.special import logit
        gt.opacity_logit[3] = logit(0.001)
        out = prune(gt, 0.005)
        assert len(out) == len(gt) - 1
        np.testing.assert_array_equal(out.tri_id,
                                      np.delete(gt.tri_id, 3))

    def test_idempotent(self, quad):
        gt = randomized_texture(quad, 7)
        once = prune(gt, 0.3)
        twice = prune(once, 0.3)
        assert twice.field_equal(once)


class TestRebind:
    def test_identity_transfer(self, quad):
        gt = init_gaussians(quad)
        out = rebind(gt, quad)
        assert out.field_equal(gt)
        assert out.mesh_fingerprint == quad.fingerprint()

    def test_half_atlas_drops_half(self, quad, caplog):
        gt = init_gaussians(quad)
        half = build_mesh(quad.positions, quad.triangles[:1], quad.uvs[:1])
        with caplog.at_level(logging.WARNING):
            out = rebind(gt, half)
        assert len(out) == 3          # the three Gaussians of triangle 0
        assert np.all(out.tri_id == 0)
        assert "dropped" in caplog.text

    def test_incompatible_atlas_raises(self, quad):
        gt = init_gaussians(quad)
        shifted = build_mesh(quad.positions, quad.triangles, quad.uvs * 0.01 + 0.97)
        with pytest.raises(ValueError, match="atlases incompatible"):
            rebind(gt, shifted)

    def test_subdivided_target_receives_all(self):
        mesh = icosphere(subdivisions=1)
        gt = init_gaussians(mesh)
        fine = subdivide_sharing_atlas(mesh, project_radius=1.5)
        out = rebind(gt, fine)
        assert len(out) == len(gt)


class TestSerialization:
    def test_round_trip_field_exact(self, quad, tmp_path):
        gt = randomized_texture(quad, 3)
        p = tmp_path / "t.3dgt"
        save(gt, p)
        loaded = load(p)
        save(loaded, tmp_path / "t2.3dgt")
        again = load(tmp_path / "t2.3dgt")
        assert again.field_equal(loaded)          # f32 fixed point reached
        assert loaded.mesh_fingerprint == gt.mesh_fingerprint
        assert np.abs(loaded.u_r_lo - gt.u_r_lo).max() < 1e-6

    def test_wrong_magic(self, tmp_path):
        p = tmp_path / "bad.3dgt"
        p.write_bytes(b"NOPE" + b"\x00" * 32)
        with pytest.raises(ValueError, match="magic"):
            load(p)

    def test_truncated(self, quad, tmp_path):
        gt = init_gaussians(quad)
        p = tmp_path / "t.3dgt"
        save(gt, p)
        data = p.read_bytes()
        p.write_bytes(data[:-9])
        with pytest.raises(ValueError, match="truncated"):
            load(p)

    def test_record_count_is_64_bit(self, tmp_path):
        big = 2 ** 33
        record_size = 56  # tri u32 + 10 f32 fields + rgb f32 for sh degree 0
        header = struct.pack("<4sIIQ", MAGIC, 1, 0, big)
        p = tmp_path / "big.3dgt"
        p.write_bytes(header + b"\x00" * 64)
        with pytest.raises(ValueError, match="truncated") as exc:
            load(p)
        # the expected byte count uses the full u64 record count
        assert str(20 + big * record_size + 8) in str(exc.value)

    def test_derive_bit_stable_through_save_load(self, quad, tmp_path):
        gt = init_gaussians(quad)
        save(gt, tmp_path / "a.3dgt")
        first = load(tmp_path / "a.3dgt")
        pts1 = frame_forward(first).points
        save(first, tmp_path / "b.3dgt")
        second = load(tmp_path / "b.3dgt")
        pts2 = frame_forward(second).points
        np.testing.assert_array_equal(pts1, pts2)
        assert (tmp_path / "a.3dgt").read_bytes() == (tmp_path / "b.3dgt").read_bytes()
