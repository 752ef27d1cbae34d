"""Synthetic scenes: meshes with per-face UV atlases, cameras, reference textures.

Everything here is deterministic.  The UV atlas packs each triangle into
its own cell of a square grid over [0,1]^2 with a margin, so charts never
overlap or touch; a mesh derived by subdividing another mesh's triangles
inherits the parent's atlas (each child chart tiles a sub-triangle of the
parent chart), which is what makes texture transfer between the two
meshes well-defined without any cross-surface mapping.
"""

from __future__ import annotations

import math

import numpy as np

from .mesh import ProxyMesh, build_mesh
from .render import Camera
from .texture import GaussianTexture, TextureConfig, init_gaussians, logit


def pack_face_atlas(n_tris: int, margin: float = 0.18) -> np.ndarray:
    """(T, 3, 2) per-corner UVs: one isolated chart per triangle.

    ``margin`` is the fraction of the grid cell kept clear around each
    chart, so neighboring charts stay separated by 2 * margin * cell.
    """
    res = max(1, int(math.ceil(math.sqrt(n_tris))))
    cell = 1.0 / res
    pad = margin * cell
    uvs = np.empty((n_tris, 3, 2))
    for t in range(n_tris):
        cx = (t % res) * cell
        cy = (t // res) * cell
        uvs[t, 0] = (cx + pad, cy + pad)
        uvs[t, 1] = (cx + cell - pad, cy + pad)
        uvs[t, 2] = (cx + pad, cy + cell - pad)
    return uvs


def quad_mesh(size: float = 1.0) -> ProxyMesh:
    """Two coplanar triangles in the z=0 plane, CCW as seen from +z."""
    s = size
    positions = np.array([[-s, -s, 0.0], [s, -s, 0.0], [s, s, 0.0], [-s, s, 0.0]])
    triangles = np.array([[0, 1, 2], [0, 2, 3]])
    return build_mesh(positions, triangles, pack_face_atlas(2))


def icosphere(subdivisions: int = 2, radius: float = 1.5,
              margin: float = 0.18) -> ProxyMesh:
    """Subdivided icosahedron with a per-face atlas; 20 * 4**n triangles."""
    t = (1.0 + math.sqrt(5.0)) / 2.0
    verts = np.array([
        [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
        [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
        [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
    ], dtype=np.float64)
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts, faces = _subdivide_on_sphere(verts, faces, subdivisions)
    verts = verts / np.linalg.norm(verts, axis=1, keepdims=True) * radius
    triangles = np.asarray(faces, dtype=np.int32)
    return build_mesh(verts, triangles, pack_face_atlas(len(faces), margin))


def octasphere(subdivisions: int = 1, radius: float = 1.5,
               margin: float = 0.18) -> ProxyMesh:
    """Subdivided octahedron sphere; 8 * 4**n triangles (coarse proxy)."""
    verts = np.array([
        [1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1],
    ], dtype=np.float64)
    faces = [
        (0, 2, 4), (2, 1, 4), (1, 3, 4), (3, 0, 4),
        (2, 0, 5), (1, 2, 5), (3, 1, 5), (0, 3, 5),
    ]
    verts, faces = _subdivide_on_sphere(verts, faces, subdivisions)
    verts = verts / np.linalg.norm(verts, axis=1, keepdims=True) * radius
    triangles = np.asarray(faces, dtype=np.int32)
    return build_mesh(verts, triangles, pack_face_atlas(len(faces), margin))


def subdivide_sharing_atlas(mesh: ProxyMesh, project_radius: float | None = None) -> ProxyMesh:
    """1-to-4 subdivision whose child UV charts tile the parent charts.

    Because the child charts cover exactly the parent footprints, a
    Gaussian texture trained on ``mesh`` can be rebound onto the result.
    With ``project_radius`` the new edge midpoints are pushed onto the
    sphere of that radius (a genuinely different tessellation of the same
    surface); otherwise the subdivision is planar.
    """
    verts = list(map(tuple, mesh.positions))
    midpoint_cache: dict = {}

    def midpoint(i, j):
        key = (min(i, j), max(i, j))
        if key not in midpoint_cache:
            p = 0.5 * (np.asarray(verts[i]) + np.asarray(verts[j]))
            if project_radius is not None:
                p = p / np.linalg.norm(p) * project_radius
            midpoint_cache[key] = len(verts)
            verts.append(tuple(p))
        return midpoint_cache[key]

    new_faces = []
    new_uvs = []
    for t, (a, b, c) in enumerate(mesh.triangles):
        ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
        ua, ub, uc = mesh.uvs[t]
        uab, ubc, uca = 0.5 * (ua + ub), 0.5 * (ub + uc), 0.5 * (uc + ua)
        for tri, uv in (
            ((a, ab, ca), (ua, uab, uca)),
            ((ab, b, bc), (uab, ub, ubc)),
            ((ca, bc, c), (uca, ubc, uc)),
            ((ab, bc, ca), (uab, ubc, uca)),
        ):
            new_faces.append(tri)
            new_uvs.append(uv)

    return build_mesh(np.asarray(verts), np.asarray(new_faces, dtype=np.int32),
                      np.asarray(new_uvs))


def orbit_cameras(count: int, radius: float, width: int, height: int,
                  fov_x: float = math.radians(50.0), elevations=(0.35, -0.2),
                  target=(0.0, 0.0, 0.0)) -> list:
    """Cameras on rings around the target, looking inward."""
    cams = []
    target = np.asarray(target, dtype=np.float64)
    for i in range(count):
        az = 2.0 * math.pi * i / count + 0.37
        el = elevations[i % len(elevations)]
        pos = target + radius * np.array([
            math.cos(el) * math.cos(az), math.sin(el), math.cos(el) * math.sin(az)])
        cams.append(look_at_camera(pos, target, width, height, fov_x))
    return cams


def look_at_camera(position, target, width: int, height: int,
                   fov_x: float = math.radians(50.0)) -> Camera:
    """Pinhole camera at ``position`` looking at ``target`` (x-right, y-down, z-forward)."""
    position = np.asarray(position, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    forward = target - position
    forward = forward / np.linalg.norm(forward)
    world_up = np.array([0.0, 1.0, 0.0])
    if abs(forward @ world_up) > 0.999:
        world_up = np.array([0.0, 0.0, 1.0])
    right = np.cross(forward, world_up)
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    r = np.stack([right, down, forward])          # world->camera rotation
    w2c = np.eye(4)
    w2c[:3, :3] = r
    w2c[:3, 3] = -r @ position
    fx = 0.5 * width / math.tan(0.5 * fov_x)
    return Camera(width=width, height=height, fx=fx, fy=fx,
                  cx=width / 2.0, cy=height / 2.0, world_to_camera=w2c)


def reference_texture(mesh: ProxyMesh, scale_factor: float = 0.45,
                      opacity: float = 0.95) -> GaussianTexture:
    """Hand-authored opaque texture with a smooth position-based color field.

    Serves as the generator of synthetic ground-truth images: colors vary
    smoothly over the surface so the scene is learnable to high PSNR.
    """
    gt = init_gaussians(mesh, TextureConfig(init_scale_factor=scale_factor,
                                            init_opacity=opacity))
    centers_uv = 0.5 * (gt.u_r_lo[:, :2] + gt.u_r_hi[:, :2])
    # world position of each center at w=0 via its triangle's corners
    from .shell import uv_to_barycentric_many
    corners = mesh.uvs[gt.tri_id]
    phi = uv_to_barycentric_many(centers_uv, corners)
    pos = np.einsum("na,nad->nd", phi, mesh.positions[mesh.triangles[gt.tri_id]])
    ext = max(np.abs(pos).max(), 1e-9)
    k = math.pi / ext
    gt.color[:, 0] = 0.5 + 0.35 * np.sin(k * pos[:, 0] + 0.5)
    gt.color[:, 1] = 0.5 + 0.35 * np.sin(k * pos[:, 1] + 2.2)
    gt.color[:, 2] = 0.5 + 0.35 * np.sin(k * pos[:, 2] + 4.0)
    gt.opacity_logit[:] = logit(opacity)
    return gt


def render_views(gt, mesh: ProxyMesh, cameras, background=(0.0, 0.0, 0.0)):
    """Render the texture from each camera; returns a list of RGBA images."""
    from .projection import MeshBuffers, project_forward
    from .render import render_arrays
    buffers = MeshBuffers(mesh)
    ctx = project_forward(gt, buffers)
    images = []
    for cam in cameras:
        sctx = render_arrays(ctx.means, ctx.covs, ctx.alphas, gt.color, cam,
                             background, sh_degree=gt.sh_degree)
        images.append(sctx.image)
    return images


def write_scene(directory, mesh: ProxyMesh, gt, cameras,
                fov_x: float = math.radians(50.0), background=(0.0, 0.0, 0.0)):
    """Write a complete on-disk scene: mesh OBJ, transforms JSON, GT PNGs.

    Returns (mesh_path, frames_path).  The ground-truth images are renders
    of ``gt``; alpha is preserved so evaluation can reuse the masks.
    """
    from pathlib import Path

    from .dataset import save_frameset
    from .imgio import write_png
    from .mesh import save_obj

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    mesh_path = directory / "proxy.obj"
    save_obj(mesh, mesh_path)
    images = render_views(gt, mesh, cameras, background)
    rels = []
    for i, img in enumerate(images):
        rel = f"gt_{i:04d}.png"
        write_png(directory / rel, img)
        rels.append(rel)
    frames_path = directory / "transforms.json"
    save_frameset(frames_path, cameras, fov_x, rels)
    return mesh_path, frames_path


def _subdivide_on_sphere(verts: np.ndarray, faces, levels: int):
    verts = [tuple(v) for v in verts]
    for _ in range(levels):
        cache = {}

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                p = 0.5 * (np.asarray(verts[i]) + np.asarray(verts[j]))
                cache[key] = len(verts)
                verts.append(tuple(p))
            return cache[key]

        next_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            next_faces += [(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)]
        faces = next_faces
    return np.asarray(verts, dtype=np.float64), faces
