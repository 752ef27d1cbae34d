import numpy as np
import pytest

from uvsplat.animation import (LatticeDeformer, MeshSequence, SineDeformer,
                               apply_deformer, load_mesh_sequence, render_animation)
from uvsplat.fixtures import icosphere, look_at_camera
from uvsplat.mesh import MeshError, save_obj, transform_rigid
from uvsplat.render import Camera
from uvsplat.texture import frame_forward

from conftest import randomized_texture


@pytest.fixture(scope="module")
def sphere():
    return icosphere(subdivisions=1)


@pytest.fixture(scope="module")
def sphere_texture(sphere):
    gt = randomized_texture(sphere, 50)
    gt.opacity_logit += 2.0
    return gt


def sine(amplitude=0.1, frequency=0.4):
    return SineDeformer(axis=[0, 1, 0], direction=[1, 0, 0],
                        amplitude=amplitude, frequency=frequency, phase_rate=0.4)


class TestDeformers:
    def test_sine_zero_amplitude_is_identity(self, sphere):
        out = apply_deformer(sphere, sine(amplitude=0.0), frame=3)
        np.testing.assert_array_equal(out.positions, sphere.positions)
        np.testing.assert_array_equal(out.omega_tri, sphere.omega_tri)

    def test_sine_displacement_bounded_by_amplitude(self, sphere):
        d = sine(amplitude=0.15)
        for frame in range(6):
            out = apply_deformer(sphere, d, frame)
            disp = np.linalg.norm(out.positions - sphere.positions, axis=1)
            assert disp.max() <= 0.15 + 1e-12

    def test_lattice_rest_is_identity(self, sphere):
        pad = 0.1
        lo = sphere.positions.min(axis=0) - pad
        hi = sphere.positions.max(axis=0) + pad
        d = LatticeDeformer.rest((3, 4, 2), lo, hi)
        out = apply_deformer(sphere, d, 0)
        np.testing.assert_allclose(out.positions, sphere.positions, atol=1e-12)

    def test_lattice_translation(self, sphere):
        pad = 0.1
        lo = sphere.positions.min(axis=0) - pad
        hi = sphere.positions.max(axis=0) + pad
        d = LatticeDeformer.rest((2, 2, 2), lo, hi)
        d.control_points[0] += np.array([0.5, -0.25, 0.0])
        out = apply_deformer(sphere, d, 0)
        np.testing.assert_allclose(out.positions,
                                   sphere.positions + [0.5, -0.25, 0.0], atol=1e-12)

    def test_lattice_clamps_outside_vertices(self, sphere, caplog):
        lo = sphere.positions.min(axis=0) + 0.5   # box smaller than the mesh
        hi = sphere.positions.max(axis=0) - 0.5
        d = LatticeDeformer.rest((2, 2, 2), lo, hi)
        import logging
        with caplog.at_level(logging.WARNING):
            apply_deformer(sphere, d, 0)
        assert "outside the rest box" in caplog.text

    def test_lattice_dims_validation(self):
        with pytest.raises(ValueError):
            LatticeDeformer(dims=(1, 2, 2), box_min=np.zeros(3), box_max=np.ones(3),
                            control_points=np.zeros((1, 1, 2, 2, 3)))

    def test_mesh_sequence_rest_frame(self, sphere, sphere_texture):
        seq = MeshSequence(frames=[sphere.positions.copy()])
        cam = look_at_camera([0, 0, -4.5], [0, 0, 0], 48, 48)
        moving = render_animation(sphere_texture, sphere, seq, cam, 1)
        static = render_animation(sphere_texture, sphere, sine(amplitude=0.0), cam, 1)
        np.testing.assert_array_equal(moving[0], static[0])

    def test_mesh_sequence_topology_mismatch(self, sphere):
        seq = MeshSequence(frames=[sphere.positions[:-1].copy()])
        with pytest.raises(MeshError):
            apply_deformer(sphere, seq, 0)

    def test_load_mesh_sequence(self, sphere, tmp_path):
        for f in range(3):
            shifted = transform_rigid(sphere, np.eye(3), [0.1 * f, 0, 0])
            save_obj(shifted, tmp_path / f"frame_{f:04d}.obj")
        seq = load_mesh_sequence(tmp_path, sphere)
        assert len(seq.frames) == 3
        np.testing.assert_allclose(seq.frames[2][:, 0],
                                   sphere.positions[:, 0] + 0.2, atol=1e-12)


class TestRenderAnimation:
    def test_constant_deformer_frames_identical(self, sphere, sphere_texture):
        cam = look_at_camera([0, 0, -4.5], [0, 0, 0], 40, 40)
        frames = render_animation(sphere_texture, sphere, sine(amplitude=0.0), cam, 3)
        assert np.array_equal(frames[0], frames[1])
        assert np.array_equal(frames[0], frames[2])

    def test_texture_params_frame_independent(self, sphere, sphere_texture):
        # the texture-space bounding points never change across frames
        before = frame_forward(sphere_texture).points.copy()
        cam = look_at_camera([0, 0, -4.5], [0, 0, 0], 32, 32)
        render_animation(sphere_texture, sphere, sine(amplitude=0.2), cam, 2)
        after = frame_forward(sphere_texture).points
        np.testing.assert_array_equal(before, after)

    def test_rigid_rotation_sequence_matches_counter_rotated_camera(
            self, sphere, sphere_texture):
        angle = 0.5
        rot = np.array([[np.cos(angle), 0, np.sin(angle)],
                        [0, 1, 0],
                        [-np.sin(angle), 0, np.cos(angle)]])
        moved = transform_rigid(sphere, rot, [0, 0, 0])
        seq = MeshSequence(frames=[moved.positions.copy()])

        cam = look_at_camera([0.3, -0.5, -4.5], [0, 0, 0], 64, 64)
        static = render_animation(sphere_texture, sphere, sine(0.0), cam, 1)[0]

        rigid = np.eye(4)
        rigid[:3, :3] = rot
        cam2 = Camera(cam.width, cam.height, cam.fx, cam.fy, cam.cx, cam.cy,
                      cam.world_to_camera @ np.linalg.inv(rigid), cam.near, cam.far)
        animated = render_animation(sphere_texture, sphere, seq, cam2, 1)[0]
        rms = np.sqrt(np.mean((animated - static) ** 2))
        assert rms <= 1e-5
