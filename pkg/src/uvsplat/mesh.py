"""Proxy mesh loading, annotation, and UV point location.

The proxy mesh is a coarse, UV-mapped triangle mesh.  Besides geometry it
carries two derived annotations used by the texture-to-world mapping:

* per-vertex unit normals (area-weighted average of incident face normals),
* omega scalers: per-triangle ``omega_tri`` is the mean ratio of world edge
  length to UV edge length, per-vertex ``omega_vert`` the mean of
  ``omega_tri`` over the vertex's incident triangles.  They convert the
  texture w-coordinate into a world-unit offset along the surface normal.

``ProxyMesh`` is immutable after construction; every operation that
"modifies" a mesh returns a new one, so instances can be shared freely
across threads.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .shell import barycentric_matrix, uv_to_barycentric


class MeshError(ValueError):
    """Structural problem with a mesh (empty, non-manifold, degenerate)."""


class ObjParseError(MeshError):
    """Malformed OBJ input; carries the offending 1-based line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass(frozen=True, eq=False)
class ProxyMesh:
    positions: np.ndarray        # (V, 3) float64, world units
    normals: np.ndarray          # (V, 3) float64, unit length
    triangles: np.ndarray        # (T, 3) int32, vertex indices
    uvs: np.ndarray              # (T, 3, 2) float64, per-corner UVs in [0,1]^2
    omega_tri: np.ndarray        # (T,) float64, > 0
    omega_vert: np.ndarray       # (V,) float64, > 0
    vertex_tri_adjacency: tuple  # per-vertex tuple of incident triangle ids
    _uv_grid: "UvGrid" = field(repr=False, compare=False, default=None)

    @property
    def num_vertices(self) -> int:
        return self.positions.shape[0]

    @property
    def num_triangles(self) -> int:
        return self.triangles.shape[0]

    def tri_positions(self, tri_id: int) -> np.ndarray:
        return self.positions[self.triangles[tri_id]]

    def tri_normals(self, tri_id: int) -> np.ndarray:
        return self.normals[self.triangles[tri_id]]

    def tri_omega_vert(self, tri_id: int) -> np.ndarray:
        return self.omega_vert[self.triangles[tri_id]]

    def fingerprint(self) -> bytes:
        """8-byte content hash over positions, triangles, and UVs."""
        h = hashlib.blake2b(digest_size=8)
        h.update(self.positions.tobytes())
        h.update(self.triangles.tobytes())
        h.update(self.uvs.tobytes())
        return h.digest()

    def report(self) -> str:
        lines = [
            f"vertices:  {self.num_vertices}",
            f"triangles: {self.num_triangles}",
            f"omega_tri: min {self.omega_tri.min():.6g}  "
            f"mean {self.omega_tri.mean():.6g}  max {self.omega_tri.max():.6g}",
            f"omega_vert: min {self.omega_vert.min():.6g}  "
            f"mean {self.omega_vert.mean():.6g}  max {self.omega_vert.max():.6g}",
        ]
        return "\n".join(lines)


class UvGrid:
    """Uniform grid over [0,1]^2 binning triangle UV bounding boxes.

    Cell count tracks the triangle count so lookups touch O(1) candidates
    on reasonably uniform atlases; correctness never depends on the grid
    because every candidate is confirmed by a barycentric containment test.
    """

    def __init__(self, uvs: np.ndarray):
        n_tris = uvs.shape[0]
        self.res = max(1, int(math.ceil(math.sqrt(n_tris))))
        self.cells = [[] for _ in range(self.res * self.res)]
        lo = np.floor(uvs.min(axis=1) * self.res).astype(np.int64)
        hi = np.floor(uvs.max(axis=1) * self.res).astype(np.int64)
        np.clip(lo, 0, self.res - 1, out=lo)
        np.clip(hi, 0, self.res - 1, out=hi)
        for t in range(n_tris):
            for cy in range(lo[t, 1], hi[t, 1] + 1):
                for cx in range(lo[t, 0], hi[t, 0] + 1):
                    self.cells[cy * self.res + cx].append(t)

    def candidates(self, uv) -> list:
        cx = min(max(int(uv[0] * self.res), 0), self.res - 1)
        cy = min(max(int(uv[1] * self.res), 0), self.res - 1)
        return self.cells[cy * self.res + cx]


def build_mesh(positions, triangles, uvs, normals=None, omega_tri=None) -> ProxyMesh:
    """Assemble and validate a ProxyMesh from raw arrays.

    ``normals`` defaults to area-weighted vertex normals; ``omega_tri``
    defaults to the edge-length-ratio scalers.  Passing precomputed values
    is how deformation keeps rest-pose omegas while refreshing normals.
    """
    positions = np.ascontiguousarray(positions, dtype=np.float64)
    triangles = np.ascontiguousarray(triangles, dtype=np.int32)
    uvs = np.ascontiguousarray(uvs, dtype=np.float64)

    if positions.ndim != 2 or positions.shape[1] != 3:
        raise MeshError("positions must be (V, 3)")
    if triangles.size == 0:
        raise MeshError("empty mesh: no triangles")
    if triangles.ndim != 2 or triangles.shape[1] != 3:
        raise MeshError("triangles must be (T, 3)")
    if uvs.shape != (triangles.shape[0], 3, 2):
        raise MeshError("uvs must be (T, 3, 2) per-corner coordinates")
    if triangles.min() < 0 or triangles.max() >= positions.shape[0]:
        raise MeshError("triangle index out of range")

    _check_manifold(triangles)

    # Non-degenerate UV footprint per triangle.
    area2 = _uv_signed_area2(uvs)
    bad = np.nonzero(np.abs(area2) <= 1e-12)[0]
    if bad.size:
        raise MeshError(f"triangle {bad[0]}: degenerate UV corners (area ~ 0)")

    adjacency = _vertex_tri_adjacency(positions.shape[0], triangles)

    if omega_tri is None:
        omega_tri = _omega_tri(positions, triangles, uvs)
    else:
        omega_tri = np.ascontiguousarray(omega_tri, dtype=np.float64)
    if (omega_tri <= 0).any():
        raise MeshError("omega_tri must be positive")
    omega_vert = _omega_vert(omega_tri, adjacency)

    if normals is None:
        normals = _vertex_normals(positions, triangles, adjacency)
    else:
        normals = np.ascontiguousarray(normals, dtype=np.float64)
        lens = np.linalg.norm(normals, axis=1)
        if np.abs(lens - 1.0).max() > 1e-6:
            raise MeshError("supplied normals are not unit length")

    for arr in (positions, normals, triangles, uvs, omega_tri, omega_vert):
        arr.setflags(write=False)

    return ProxyMesh(
        positions=positions,
        normals=normals,
        triangles=triangles,
        uvs=uvs,
        omega_tri=omega_tri,
        omega_vert=omega_vert,
        vertex_tri_adjacency=adjacency,
        _uv_grid=UvGrid(uvs),
    )


def load_proxy_mesh(path) -> ProxyMesh:
    """Parse a UV-mapped OBJ file (v/vt/vn/f subset) into a ProxyMesh.

    Faces must reference texture coordinates (``v/vt`` or ``v/vt/vn``);
    quads are fan-triangulated from their first corner, faces with more
    than four corners are rejected.  Normals are rebuilt from geometry
    unless every face corner carries a ``vn`` reference.
    """
    verts, uvs_pool, normals_pool, faces = [], [], [], []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            tag = parts[0]
            try:
                if tag == "v":
                    verts.append([float(parts[1]), float(parts[2]), float(parts[3])])
                elif tag == "vt":
                    uvs_pool.append([float(parts[1]), float(parts[2])])
                elif tag == "vn":
                    normals_pool.append([float(parts[1]), float(parts[2]), float(parts[3])])
                elif tag == "f":
                    faces.append((line_no, [_parse_face_corner(c, line_no) for c in parts[1:]]))
                # other tags (o, g, s, usemtl, mtllib) are ignored
            except ObjParseError:
                raise
            except (ValueError, IndexError) as exc:
                raise ObjParseError(line_no, f"cannot parse '{line}'") from exc

    if not faces:
        raise MeshError("empty mesh: no faces")

    triangles, tri_uvs, tri_normal_ids = [], [], []
    have_all_vn = True
    for line_no, corners in faces:
        if len(corners) < 3:
            raise ObjParseError(line_no, "face with fewer than 3 corners")
        if len(corners) > 4:
            raise ObjParseError(line_no, f"face with {len(corners)} corners (max 4)")
        for vi, ti, ni in corners:
            if vi < 1 or vi > len(verts):
                raise ObjParseError(line_no, f"vertex index {vi} out of range")
            if ti is None:
                raise MeshError("mesh has no UV atlas")
            if ti < 1 or ti > len(uvs_pool):
                raise ObjParseError(line_no, f"uv index {ti} out of range")
            if ni is not None and (ni < 1 or ni > len(normals_pool)):
                raise ObjParseError(line_no, f"normal index {ni} out of range")
            if ni is None:
                have_all_vn = False
        # fan triangulation from the first corner
        for k in range(1, len(corners) - 1):
            tri = (corners[0], corners[k], corners[k + 1])
            triangles.append([c[0] - 1 for c in tri])
            tri_uvs.append([uvs_pool[c[1] - 1] for c in tri])
            tri_normal_ids.append([c[2] - 1 if c[2] is not None else -1 for c in tri])

    positions = np.asarray(verts, dtype=np.float64)
    triangles = np.asarray(triangles, dtype=np.int32)
    tri_uvs = np.asarray(tri_uvs, dtype=np.float64)

    normals = None
    if have_all_vn and normals_pool:
        # average the referenced corner normals onto vertices
        acc = np.zeros_like(positions)
        pool = np.asarray(normals_pool, dtype=np.float64)
        ids = np.asarray(tri_normal_ids, dtype=np.int64)
        np.add.at(acc, triangles.ravel(), pool[ids.ravel()])
        lens = np.linalg.norm(acc, axis=1)
        ok = lens > 1e-12
        acc[ok] /= lens[ok, None]
        acc[~ok] = np.array([0.0, 0.0, 1.0])
        normals = acc

    return build_mesh(positions, triangles, tri_uvs, normals=normals)


def save_obj(mesh: ProxyMesh, path) -> None:
    """Write the mesh as OBJ (v/vt/f, 1-based indices, per-corner UVs)."""
    lines = []
    for p in mesh.positions:
        lines.append(f"v {p[0]:.17g} {p[1]:.17g} {p[2]:.17g}")
    for t in range(mesh.num_triangles):
        for c in range(3):
            uv = mesh.uvs[t, c]
            lines.append(f"vt {uv[0]:.17g} {uv[1]:.17g}")
    for t, tri in enumerate(mesh.triangles):
        vt = 3 * t + 1
        lines.append(f"f {tri[0] + 1}/{vt} {tri[1] + 1}/{vt + 1} {tri[2] + 1}/{vt + 2}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def compute_vertex_normals(mesh: ProxyMesh) -> ProxyMesh:
    """Return the mesh with normals rebuilt from current positions."""
    normals = _vertex_normals(mesh.positions, mesh.triangles, mesh.vertex_tri_adjacency)
    return build_mesh(mesh.positions, mesh.triangles, mesh.uvs,
                      normals=normals, omega_tri=mesh.omega_tri)


def compute_w_scalers(mesh: ProxyMesh) -> ProxyMesh:
    """Return the mesh with omega scalers rebuilt from current geometry."""
    omega_tri = _omega_tri(mesh.positions, mesh.triangles, mesh.uvs)
    return build_mesh(mesh.positions, mesh.triangles, mesh.uvs,
                      normals=mesh.normals, omega_tri=omega_tri)


def locate_uv(mesh: ProxyMesh, point):
    """Find which triangle's UV footprint contains ``point``.

    Returns ``(tri_id, phi)`` with all components of ``phi`` >= -1e-9, or
    ``None`` when the point lies in no footprint.  Ties on shared edges or
    vertices go to the lowest triangle id.
    """
    point = np.asarray(point, dtype=np.float64)
    if not np.all(np.isfinite(point)):
        raise ValueError("UV point must be finite")
    best = None
    for tri_id in sorted(mesh._uv_grid.candidates(point)):
        phi = uv_to_barycentric(point, mesh.uvs[tri_id])
        if phi.min() >= -1e-9:
            best = (tri_id, phi)
            break
    return best


def locate_uv_many(mesh: ProxyMesh, points: np.ndarray):
    """Batched ``locate_uv``: returns (tri_ids, phis); tri_id -1 = not found."""
    points = np.asarray(points, dtype=np.float64)
    tri_ids = np.full(points.shape[0], -1, dtype=np.int64)
    phis = np.zeros((points.shape[0], 3))
    for i, p in enumerate(points):
        hit = locate_uv(mesh, p)
        if hit is not None:
            tri_ids[i], phis[i] = hit
    return tri_ids, phis


def transform_rigid(mesh: ProxyMesh, rotation, translation) -> ProxyMesh:
    """Apply a rigid motion; normals rotate, omegas are unchanged."""
    r = np.asarray(rotation, dtype=np.float64)
    t = np.asarray(translation, dtype=np.float64)
    return build_mesh(mesh.positions @ r.T + t, mesh.triangles, mesh.uvs,
                      normals=mesh.normals @ r.T, omega_tri=mesh.omega_tri)


def tri_barycentric_matrices(mesh: ProxyMesh) -> np.ndarray:
    """(T, 3, 3) stack of per-triangle uv->phi affine maps."""
    out = np.empty((mesh.num_triangles, 3, 3))
    for t in range(mesh.num_triangles):
        out[t] = barycentric_matrix(mesh.uvs[t])
    return out


# ---------------------------------------------------------------------------


def _parse_face_corner(token: str, line_no: int):
    """'v', 'v/vt', 'v/vt/vn' or 'v//vn' -> (v, vt|None, vn|None), 1-based."""
    fields = token.split("/")
    if len(fields) > 3:
        raise ObjParseError(line_no, f"bad face corner '{token}'")
    try:
        vi = int(fields[0])
        ti = int(fields[1]) if len(fields) > 1 and fields[1] else None
        ni = int(fields[2]) if len(fields) > 2 and fields[2] else None
    except ValueError as exc:
        raise ObjParseError(line_no, f"bad face corner '{token}'") from exc
    if vi < 1 or (ti is not None and ti < 1) or (ni is not None and ni < 1):
        raise ObjParseError(line_no, "negative/zero OBJ indices are not supported")
    return vi, ti, ni


def _check_manifold(triangles: np.ndarray) -> None:
    edges = {}
    for t, (a, b, c) in enumerate(triangles):
        for e in ((a, b), (b, c), (c, a)):
            if e[0] == e[1]:
                raise MeshError(f"triangle {t}: repeated vertex index")
            key = (min(e), max(e))
            edges[key] = edges.get(key, 0) + 1
            if edges[key] > 2:
                raise MeshError(f"non-manifold edge {key} shared by > 2 triangles")


def _vertex_tri_adjacency(n_verts: int, triangles: np.ndarray) -> tuple:
    adj = [[] for _ in range(n_verts)]
    for t, tri in enumerate(triangles):
        for v in tri:
            adj[v].append(t)
    return tuple(tuple(a) for a in adj)


def _face_normals_areas(positions, triangles):
    p0 = positions[triangles[:, 0]]
    e1 = positions[triangles[:, 1]] - p0
    e2 = positions[triangles[:, 2]] - p0
    cross = np.cross(e1, e2)
    areas2 = np.linalg.norm(cross, axis=1)  # 2x triangle area
    safe = np.where(areas2 > 1e-12, areas2, 1.0)
    return cross / safe[:, None], areas2 * 0.5


def _vertex_normals(positions, triangles, adjacency) -> np.ndarray:
    face_n, face_a = _face_normals_areas(positions, triangles)
    acc = np.zeros_like(positions)
    np.add.at(acc, triangles[:, 0], face_n * face_a[:, None])
    np.add.at(acc, triangles[:, 1], face_n * face_a[:, None])
    np.add.at(acc, triangles[:, 2], face_n * face_a[:, None])
    lens = np.linalg.norm(acc, axis=1)
    normals = np.empty_like(acc)
    for v in range(positions.shape[0]):
        if lens[v] > 1e-12:
            normals[v] = acc[v] / lens[v]
            continue
        incident = adjacency[v]
        if not incident:
            normals[v] = (0.0, 0.0, 1.0)  # unreferenced vertex, value unused
            continue
        best = max(incident, key=lambda t: face_a[t])
        if face_a[best] <= 1e-12:
            raise MeshError(f"degenerate vertex star at vertex {v}")
        normals[v] = face_n[best]
    return normals


def _omega_tri(positions, triangles, uvs) -> np.ndarray:
    """Mean world/UV length ratio over the three edges of each triangle."""
    out = np.empty(triangles.shape[0])
    for t, tri in enumerate(triangles):
        ratio = 0.0
        for i, j in ((0, 1), (0, 2), (1, 2)):
            world = np.linalg.norm(positions[tri[i]] - positions[tri[j]])
            uv = np.linalg.norm(uvs[t, i] - uvs[t, j])
            if uv < 1e-12:
                raise MeshError(f"triangle {t}: degenerate UV edge")
            ratio += world / uv
        out[t] = ratio / 3.0
    return out


def _omega_vert(omega_tri, adjacency) -> np.ndarray:
    out = np.empty(len(adjacency))
    for v, incident in enumerate(adjacency):
        if incident:
            s = 0.0
            for t in incident:
                s += omega_tri[t]
            out[v] = s / len(incident)
        else:
            out[v] = 1.0  # unreferenced vertex, value unused
    return out


def _uv_signed_area2(uvs):
    e1 = uvs[:, 1] - uvs[:, 0]
    e2 = uvs[:, 2] - uvs[:, 0]
    return e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
