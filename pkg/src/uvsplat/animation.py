"""Mesh-driven animation: deform the proxy, re-project, re-render.

No per-Gaussian parameter changes across frames; a Gaussian's placement
is authored once in texture space and the deformed triangles carry it.
Vertex normals are recomputed per frame from the deformed positions,
while UVs, topology, and the omega scalers stay at their rest values
(the texture was authored against rest geometry; stretch shows up in the
sheared covariance instead).
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .mesh import MeshError, ProxyMesh, build_mesh, load_proxy_mesh
from .projection import MeshBuffers, project_forward
from .render import Camera, RasterConfig, render_arrays

_LOG = logging.getLogger(__name__)


@dataclass
class SineDeformer:
    """Traveling-wave displacement along a fixed direction."""

    axis: np.ndarray          # unit vector the wave travels along
    direction: np.ndarray     # unit displacement direction
    amplitude: float          # world units
    frequency: float          # cycles per world unit
    phase_rate: float = 0.3   # radians per frame

    def __post_init__(self):
        self.axis = _unit(self.axis, "axis")
        self.direction = _unit(self.direction, "direction")

    def displace(self, positions: np.ndarray, frame: int) -> np.ndarray:
        phase = 2.0 * math.pi * self.frequency * (positions @ self.axis) \
            + self.phase_rate * frame
        return positions + self.amplitude * np.sin(phase)[:, None] * self.direction


@dataclass
class LatticeDeformer:
    """Free-form deformation through a trilinear control grid."""

    dims: tuple               # (nx, ny, nz), each >= 2
    box_min: np.ndarray
    box_max: np.ndarray
    control_points: np.ndarray  # (frames, nx, ny, nz, 3)

    def __post_init__(self):
        self.box_min = np.asarray(self.box_min, dtype=np.float64)
        self.box_max = np.asarray(self.box_max, dtype=np.float64)
        self.control_points = np.asarray(self.control_points, dtype=np.float64)
        if min(self.dims) < 2:
            raise ValueError("lattice dims must be >= 2 per axis")
        if self.control_points.shape[1:] != (*self.dims, 3):
            raise ValueError("control_points shape does not match dims")

    @classmethod
    def rest(cls, dims, box_min, box_max, frames: int = 1) -> "LatticeDeformer":
        """Control points at their rest lattice positions (identity)."""
        nx, ny, nz = dims
        gx = np.linspace(box_min[0], box_max[0], nx)
        gy = np.linspace(box_min[1], box_max[1], ny)
        gz = np.linspace(box_min[2], box_max[2], nz)
        grid = np.stack(np.meshgrid(gx, gy, gz, indexing="ij"), axis=-1)
        return cls(dims=tuple(dims), box_min=box_min, box_max=box_max,
                   control_points=np.repeat(grid[None], frames, axis=0))

    def displace(self, positions: np.ndarray, frame: int) -> np.ndarray:
        ctrl = self.control_points[min(frame, self.control_points.shape[0] - 1)]
        span = self.box_max - self.box_min
        local = (positions - self.box_min) / span
        clipped = np.clip(local, 0.0, 1.0)
        n_out = int((np.abs(local - clipped) > 1e-12).any(axis=1).sum())
        if n_out:
            _LOG.warning("lattice deformer: %d vertices outside the rest box (clamped)", n_out)
        out = np.empty_like(positions)
        idx = []
        frac = []
        for a, n in enumerate(self.dims):
            scaled = clipped[:, a] * (n - 1)
            i = np.minimum(scaled.astype(np.int64), n - 2)
            idx.append(i)
            frac.append(scaled - i)
        ix, iy, iz = idx
        fx, fy, fz = frac
        out = np.zeros_like(positions)
        for dx in (0, 1):
            wx = fx if dx else 1.0 - fx
            for dy in (0, 1):
                wy = fy if dy else 1.0 - fy
                for dz in (0, 1):
                    wz = fz if dz else 1.0 - fz
                    w = (wx * wy * wz)[:, None]
                    out += w * ctrl[ix + dx, iy + dy, iz + dz]
        return out


@dataclass
class MeshSequence:
    """Baked per-frame vertex positions over a fixed topology."""

    frames: list               # list of (V, 3) arrays

    def displace(self, positions: np.ndarray, frame: int) -> np.ndarray:
        f = self.frames[min(frame, len(self.frames) - 1)]
        if f.shape != positions.shape:
            raise MeshError("mesh sequence frame does not match rest vertex count")
        return np.asarray(f, dtype=np.float64)


def load_mesh_sequence(directory, rest: ProxyMesh) -> MeshSequence:
    """Load ``frame_%04d.obj`` files sharing the rest mesh's topology."""
    directory = Path(directory)
    paths = sorted(p for p in directory.iterdir()
                   if re.fullmatch(r"frame_\d{4}\.obj", p.name))
    if not paths:
        raise MeshError(f"no frame_%04d.obj files in {directory}")
    frames = []
    for p in paths:
        m = load_proxy_mesh(p)
        if m.num_vertices != rest.num_vertices or \
                not np.array_equal(m.triangles, rest.triangles):
            raise MeshError(f"{p.name}: topology does not match the rest mesh")
        frames.append(m.positions)
    return MeshSequence(frames=frames)


def apply_deformer(mesh: ProxyMesh, deformer, frame: int) -> ProxyMesh:
    """Deformed copy of the mesh: new positions and normals, rest omegas."""
    positions = deformer.displace(mesh.positions, frame)
    return build_mesh(positions, mesh.triangles, mesh.uvs,
                      normals=None, omega_tri=mesh.omega_tri)


def render_animation(gt, mesh: ProxyMesh, deformer, cam: Camera, frames: int,
                     background=(0.0, 0.0, 0.0), raster_cfg: RasterConfig | None = None,
                     on_frame=None) -> list:
    """Render ``frames`` images of the deforming mesh with a fixed texture."""
    images = []
    for f in range(frames):
        deformed = apply_deformer(mesh, deformer, f)
        ctx = project_forward(gt, MeshBuffers(deformed))
        sctx = render_arrays(ctx.means, ctx.covs, ctx.alphas, gt.color, cam,
                             background, raster_cfg, gt.sh_degree)
        images.append(sctx.image)
        if on_frame is not None:
            on_frame(f, sctx.image)
    return images


def _unit(v, name: str) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    n = np.linalg.norm(v)
    if n < 1e-12:
        raise ValueError(f"{name} must be a nonzero vector")
    return v / n
