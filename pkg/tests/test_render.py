import numpy as np
import pytest

from uvsplat.fixtures import icosphere, look_at_camera
from uvsplat.mesh import transform_rigid
from uvsplat.projection import MeshBuffers, WorldGaussian, project_forward
from uvsplat.render import (Camera, RasterConfig, project_to_screen, render,
                            render_arrays, set_threads)

from conftest import randomized_texture


def front_camera(width=64, height=64, f=60.0):
    return Camera(width=width, height=height, fx=f, fy=f,
                  cx=width / 2.0, cy=height / 2.0, world_to_camera=np.eye(4))


def iso_gaussian(pos, sigma, alpha=0.9, color=(1.0, 0.0, 0.0)):
    return WorldGaussian(mean=np.asarray(pos, dtype=np.float64),
                         cov=sigma ** 2 * np.eye(3), alpha=alpha,
                         color=np.asarray(color, dtype=np.float64))


class TestCamera:
    def test_validation(self):
        with pytest.raises(ValueError):
            Camera(8, 8, -1.0, 1.0, 4, 4, np.eye(4))
        with pytest.raises(ValueError):
            Camera(8, 8, 1.0, 1.0, 4, 4, np.eye(4), near=2.0, far=1.0)

    def test_center(self):
        cam = look_at_camera([1.0, 2.0, -3.0], [0, 0, 0], 8, 8)
        np.testing.assert_allclose(cam.center, [1.0, 2.0, -3.0], atol=1e-12)


class TestProjectToScreen:
    def test_on_axis_gaussian(self):
        cam = front_camera()
        sigma, z = 0.05, 4.0
        out = project_to_screen(iso_gaussian([0, 0, z], sigma), cam)
        assert out is not None
        mean2d, cov2d, depth = out
        np.testing.assert_allclose(mean2d, [cam.cx, cam.cy], atol=1e-12)
        assert depth == pytest.approx(z)
        expected = (cam.fx * sigma / z) ** 2
        np.testing.assert_allclose(cov2d, expected * np.eye(2) + 0.3 * np.eye(2),
                                   rtol=1e-12)

    def test_behind_camera_culled(self):
        assert project_to_screen(iso_gaussian([0, 0, -2.0], 0.1), front_camera()) is None

    def test_depth_halves_projected_std(self):
        cam = front_camera()
        sigma = 0.01
        _, c1, _ = project_to_screen(iso_gaussian([0, 0, 2.0], sigma), cam)
        _, c2, _ = project_to_screen(iso_gaussian([0, 0, 4.0], sigma), cam)
        s1 = np.sqrt(c1[0, 0] - 0.3)
        s2 = np.sqrt(c2[0, 0] - 0.3)
        assert s1 / s2 == pytest.approx(2.0, rel=0.01)


class TestRender:
    def test_empty_scene(self):
        cam = front_camera(16, 16)
        img = render([], cam, background=(0.2, 0.4, 0.6))
        np.testing.assert_allclose(img[..., :3], np.broadcast_to([0.2, 0.4, 0.6],
                                                                 (16, 16, 3)))
        assert np.all(img[..., 3] == 0)

    def test_centered_gaussian_peaks_at_center(self):
        cam = front_camera(65, 65)
        img = render([iso_gaussian([0, 0, 3.0], 0.1, alpha=0.95)], cam)
        alpha = img[..., 3]
        assert alpha[32, 32] == alpha.max()
        assert alpha[32, 32] > 0.5

    def test_front_to_back_ordering(self):
        cam = front_camera(33, 33)
        red = iso_gaussian([0, 0, 1.5], 0.08, alpha=0.9, color=(1, 0, 0))
        blue = iso_gaussian([0, 0, 3.0], 0.16, alpha=0.9, color=(0, 0, 1))
        img = render([blue, red], cam)       # input order must not matter
        center = img[16, 16]
        assert center[0] > center[2] > 0     # red dominates, blue contributes

    def test_alpha_monotone_in_opacity(self):
        cam = front_camera(32, 32)
        rng = np.random.default_rng(0)
        gaussians = [iso_gaussian(rng.uniform([-0.5, -0.5, 2], [0.5, 0.5, 4]),
                                  rng.uniform(0.05, 0.2), alpha=rng.uniform(0.2, 0.8),
                                  color=rng.uniform(0, 1, 3)) for _ in range(8)]
        base = render(gaussians, cam)
        bumped = [WorldGaussian(g.mean, g.cov, min(g.alpha + 0.1, 0.999), g.color)
                  if i == 3 else g for i, g in enumerate(gaussians)]
        out = render(bumped, cam)
        assert np.all(out[..., 3] - base[..., 3] >= -1e-12)

    def test_determinism_across_thread_counts(self):
        mesh = icosphere(subdivisions=1)
        gt = randomized_texture(mesh, 42)
        gt.opacity_logit += 2.0
        ctx = project_forward(gt, MeshBuffers(mesh))
        cam = look_at_camera([0.3, -0.4, -4.5], [0, 0, 0], 96, 80)
        images = []
        for n in (1, 2, 4):
            set_threads(n)
            sctx = render_arrays(ctx.means, ctx.covs, ctx.alphas, gt.color, cam,
                                 (0.1, 0.2, 0.3))
            images.append(sctx.image.copy())
        assert np.array_equal(images[0], images[1])
        assert np.array_equal(images[0], images[2])

    def test_rigid_equivariance_end_to_end(self):
        mesh = icosphere(subdivisions=1)
        gt = randomized_texture(mesh, 43)
        gt.opacity_logit += 1.5
        cam = look_at_camera([0.2, -0.6, -4.0], [0, 0, 0], 64, 64)
        ctx = project_forward(gt, MeshBuffers(mesh))
        base = render_arrays(ctx.means, ctx.covs, ctx.alphas, gt.color, cam,
                             (0, 0, 0)).image

        angle = 0.61
        rot = np.array([[np.cos(angle), 0, np.sin(angle)],
                        [0, 1, 0],
                        [-np.sin(angle), 0, np.cos(angle)]])
        shift = np.array([0.4, -0.7, 1.3])
        moved = transform_rigid(mesh, rot, shift)
        rigid = np.eye(4)
        rigid[:3, :3] = rot
        rigid[:3, 3] = shift
        cam2 = Camera(cam.width, cam.height, cam.fx, cam.fy, cam.cx, cam.cy,
                      cam.world_to_camera @ np.linalg.inv(rigid),
                      cam.near, cam.far)
        ctx2 = project_forward(gt, MeshBuffers(moved))
        out = render_arrays(ctx2.means, ctx2.covs, ctx2.alphas, gt.color, cam2,
                            (0, 0, 0)).image
        rms = np.sqrt(np.mean((out - base) ** 2))
        assert rms <= 1e-5

    def test_transmittance_cutoff_and_background_fill(self):
        cam = front_camera(17, 17)
        # four near-opaque layers drive transmittance below the cutoff
        layers = [iso_gaussian([0, 0, z], 2.0, alpha=0.999, color=(0.5, 0.5, 0.5))
                  for z in (1.0, 1.5, 2.0, 2.5, 3.0)]
        img = render(layers, cam, background=(1.0, 0.0, 0.0))
        center = img[8, 8]
        assert center[3] > 0.999            # nearly opaque
        # a far-away gaussian past the cutoff changes nothing
        more = layers + [iso_gaussian([0, 0, 5.0], 2.0, alpha=0.9, color=(0, 1, 0))]
        img2 = render(more, cam, background=(1.0, 0.0, 0.0))
        np.testing.assert_array_equal(img, img2)
