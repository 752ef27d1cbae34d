import numpy as np
import pytest

from uvsplat.fixtures import look_at_camera, quad_mesh
from uvsplat.projection import MeshBuffers
from uvsplat.texture import init_gaussians


@pytest.fixture(scope="session")
def quad():
    return quad_mesh()


@pytest.fixture(scope="session")
def quad_buffers(quad):
    return MeshBuffers(quad)


def randomized_texture(mesh, seed, n=None, spread=0.02):
    """Initialized texture with seeded perturbations on every field."""
    rng = np.random.default_rng(seed)
    gt = init_gaussians(mesh)
    if n is not None:
        idx = np.arange(len(gt))
        reps = int(np.ceil(n / len(gt)))
        gt = gt.select(np.tile(idx, reps)[:n])
    gt.u_r_lo += rng.normal(0, spread, gt.u_r_lo.shape)
    gt.u_r_hi += rng.normal(0, spread, gt.u_r_hi.shape)
    gt.theta_d[:] = rng.uniform(-1.5, 1.5, len(gt))
    gt.log_s_d += rng.normal(0, 0.3, len(gt))
    gt.log_s_f += rng.normal(0, 0.3, len(gt))
    gt.opacity_logit[:] = rng.normal(0.5, 1.0, len(gt))
    gt.color[:] = rng.uniform(0.1, 0.9, gt.color.shape)
    return gt


def random_scene(seed, n_gaussians=10, size=32):
    """Seeded (texture, mesh, camera, truth) scene used by gradient tests."""
    rng = np.random.default_rng(seed + 1000)
    mesh = quad_mesh()
    gt = randomized_texture(mesh, seed, n=n_gaussians)
    eye = rng.uniform([-1, -1, -4.5], [1, 1, -3.0])
    cam = look_at_camera(eye, [0, 0, 0], size, size)
    truth = rng.uniform(0, 1, (size, size, 3))
    return gt, mesh, cam, truth
