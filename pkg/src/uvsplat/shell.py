"""Texture-to-world mapping kernels.

A texture point is (u, v, w): (u, v) addresses the UV atlas of the proxy
mesh, w is a signed offset "above" the surface measured in per-triangle
scaled units.  The pipeline is

    (u, v)  ->  signed-area barycentric triple  phi
    w       ->  adjusted offset  phi_w = w * (phi . omega)
    (phi, phi_w) -> world point  sum(phi_i * v_i) + phi_w * sum(phi_i * n_i)

The mapping is intentionally one-way (texture to world only); nothing in
this module inverts it.

All functions come in a scalar form (one point) and a batched ``*_many``
form used by the projection hot path.  Batched forms are pure numpy and
operate on float64.
"""

from __future__ import annotations

import numpy as np

# Barycentric triples may carry negative components (points outside the
# triangle are representable on purpose; the training regularizer needs
# them).  The clamp below is the only place that forces them back in.


def uv_to_barycentric(uv, corners):
    """Signed-area barycentric coordinates of ``uv`` w.r.t. a UV triangle.

    ``corners`` is a (3, 2) array.  Components sum to exactly 1 (the third
    is computed as the complement); negative components mean the point is
    outside the triangle.  Raises ``ValueError`` on a degenerate triangle.
    """
    corners = np.asarray(corners, dtype=np.float64)
    a, b, c = corners[0], corners[1], corners[2]
    denom = _cross2(b - a, c - a)
    if abs(denom) < 1e-12:
        raise ValueError("degenerate UV triangle (signed area ~ 0)")
    p = np.asarray(uv, dtype=np.float64)
    phi_a = _cross2(b - p, c - p) / denom
    phi_b = _cross2(c - p, a - p) / denom
    return np.array([phi_a, phi_b, 1.0 - phi_a - phi_b])


def barycentric_matrix(corners):
    """Affine map M with phi = M @ (u, v, 1) for a UV triangle.

    Returns a (3, 3) matrix; the first two columns are d(phi)/d(uv).
    Signed-area barycentric coordinates are affine in the query point, so
    the whole uv->phi step is captured by this constant matrix.
    """
    corners = np.asarray(corners, dtype=np.float64)
    a, b, c = corners[0], corners[1], corners[2]
    denom = _cross2(b - a, c - a)
    if abs(denom) < 1e-12:
        raise ValueError("degenerate UV triangle (signed area ~ 0)")
    # phi_a = cross(b - p, c - p) / denom, linear in p; likewise phi_b.
    m = np.empty((3, 3))
    m[0, 0] = (b[1] - c[1]) / denom
    m[0, 1] = (c[0] - b[0]) / denom
    m[0, 2] = _cross2(b, c) / denom
    m[1, 0] = (c[1] - a[1]) / denom
    m[1, 1] = (a[0] - c[0]) / denom
    m[1, 2] = _cross2(c, a) / denom
    m[2] = -m[0] - m[1]
    m[2, 2] += 1.0
    return m


def adjusted_w(phi, u_w, scalers):
    """Offset ``u_w`` converted to world units via interpolated scalers.

    ``scalers`` are the per-vertex omega values of the bound triangle.
    The interpolated scaler is what makes a unit of w mean the same
    physical thickness regardless of how large the triangle is in UV.
    """
    phi = np.asarray(phi, dtype=np.float64)
    omega = np.asarray(scalers, dtype=np.float64)
    return float(u_w) * float(phi @ omega)


def barycentric_to_world(phi, phi_w, tri_positions, tri_normals):
    """World-space point of a (phi, phi_w) pair on one triangle.

    ``tri_positions`` / ``tri_normals`` are (3, 3) arrays of the triangle's
    vertex positions and unit vertex normals.  The offset direction is the
    barycentric blend of the vertex normals, deliberately not renormalized:
    that keeps the map affine per triangle and continuous across edges.
    """
    phi = np.asarray(phi, dtype=np.float64)
    v = np.asarray(tri_positions, dtype=np.float64)
    n = np.asarray(tri_normals, dtype=np.float64)
    return phi @ v + phi_w * (phi @ n)


def clamp_barycentric(phi):
    """Pull an outside barycentric triple back onto the simplex boundary.

    If every component is already >= 0 the input is returned unchanged.
    Otherwise the triple is interpolated toward the centroid with
    t = 1 / (1 - 3 * min(phi)), which lands the minimum component exactly
    at 0 while preserving the unit sum.  Idempotent.
    """
    phi = np.asarray(phi, dtype=np.float64)
    m = phi.min()
    if m >= 0.0:
        return phi
    t = 1.0 / (1.0 - 3.0 * m)
    return (1.0 - t) / 3.0 + t * phi


def clamp_barycentric_many(phi):
    """Vectorized clamp over an (..., 3) array of triples."""
    phi = np.asarray(phi, dtype=np.float64)
    m = phi.min(axis=-1, keepdims=True)
    # the interpolation factor is only meaningful (and finite) outside;
    # inside rows keep phi and the masked division may hit m = 1/3
    with np.errstate(divide="ignore", invalid="ignore"):
        t = 1.0 / (1.0 - 3.0 * m)
        clamped = (1.0 - t) / 3.0 + t * phi
    return np.where(m >= 0.0, phi, clamped)


def uv_to_barycentric_many(uv, corners):
    """Batched uv->phi: ``uv`` (..., 2) against per-point corners (..., 3, 2)."""
    uv = np.asarray(uv, dtype=np.float64)
    corners = np.asarray(corners, dtype=np.float64)
    a = corners[..., 0, :]
    b = corners[..., 1, :]
    c = corners[..., 2, :]
    denom = _cross2(b - a, c - a)
    phi_a = _cross2(b - uv, c - uv) / denom
    phi_b = _cross2(c - uv, a - uv) / denom
    return np.stack([phi_a, phi_b, 1.0 - phi_a - phi_b], axis=-1)


def _cross2(p, q):
    """z-component of the 2D cross product; works on (..., 2) arrays."""
    p = np.asarray(p)
    q = np.asarray(q)
    return p[..., 0] * q[..., 1] - p[..., 1] * q[..., 0]
