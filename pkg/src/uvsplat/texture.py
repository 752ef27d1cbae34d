"""The Gaussian texture: splats parameterized in the mesh's UV(+w) space.

Each Gaussian is bound to one triangle and described by a pair of "right"
texture points (``u_r_lo``, ``u_r_hi``), a roll angle around the right
axis, and two scales.  Six bounding points derive from these parameters;
their world projections define the splat's sheared covariance downstream.

The collection (:class:`GaussianTexture`) is stored struct-of-arrays for
vectorized math, with :class:`TexGaussian` as a per-item view.  Scales
live in log space and opacity in logit space so the optimizer is
unconstrained.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass

import numpy as np
from scipy.special import expit as sigmoid
from scipy.special import logit

from .mesh import ProxyMesh, locate_uv
from .shell import clamp_barycentric_many, uv_to_barycentric_many

_LOG = logging.getLogger(__name__)

MAGIC = b"3DGT"
VERSION = 1

# canonical seed directions for the down axis, texture (u, v, w) order
_CANON_DOWN = np.array([0.0, 0.0, 1.0])
_CANON_FALLBACK = np.array([0.0, 1.0, 0.0])


def texture_cross(a, b):
    """Cross product under the texture component ordering (u, w, v).

    Permuting both operands into (u, w, v), crossing, and permuting back
    equals the negated right-handed cross product; implemented directly as
    the reversed-argument cross.
    """
    return np.cross(np.asarray(b, dtype=np.float64), np.asarray(a, dtype=np.float64))


@dataclass
class TexGaussian:
    """One Gaussian's texture-space parameters (a convenience view)."""

    tri_id: int
    u_r_lo: np.ndarray          # (3,) texture point (u, v, w)
    u_r_hi: np.ndarray          # (3,)
    theta_d: float              # roll around the right axis, radians
    log_s_d: float
    log_s_f: float
    opacity_logit: float
    color: np.ndarray           # (3 * (sh_degree + 1)**2,)

    @property
    def s_d(self) -> float:
        return float(np.exp(self.log_s_d))

    @property
    def s_f(self) -> float:
        return float(np.exp(self.log_s_f))

    @property
    def alpha(self) -> float:
        return float(sigmoid(self.opacity_logit))


@dataclass
class GaussianTexture:
    """Ordered struct-of-arrays collection of texture-space Gaussians."""

    tri_id: np.ndarray          # (N,) int32
    u_r_lo: np.ndarray          # (N, 3) float64
    u_r_hi: np.ndarray          # (N, 3) float64
    theta_d: np.ndarray         # (N,) float64
    log_s_d: np.ndarray         # (N,)
    log_s_f: np.ndarray         # (N,)
    opacity_logit: np.ndarray   # (N,)
    color: np.ndarray           # (N, 3 * (sh_degree + 1)**2)
    sh_degree: int = 0
    mesh_fingerprint: bytes = b"\x00" * 8

    @classmethod
    def from_single(cls, g: "TexGaussian") -> "GaussianTexture":
        return cls(
            tri_id=np.array([g.tri_id], dtype=np.int32),
            u_r_lo=np.asarray(g.u_r_lo, dtype=np.float64)[None],
            u_r_hi=np.asarray(g.u_r_hi, dtype=np.float64)[None],
            theta_d=np.array([g.theta_d], dtype=np.float64),
            log_s_d=np.array([g.log_s_d], dtype=np.float64),
            log_s_f=np.array([g.log_s_f], dtype=np.float64),
            opacity_logit=np.array([g.opacity_logit], dtype=np.float64),
            color=np.atleast_2d(np.asarray(g.color, dtype=np.float64)),
        )

    def __len__(self) -> int:
        return self.tri_id.shape[0]

    def __getitem__(self, i: int) -> TexGaussian:
        return TexGaussian(
            tri_id=int(self.tri_id[i]),
            u_r_lo=self.u_r_lo[i].copy(),
            u_r_hi=self.u_r_hi[i].copy(),
            theta_d=float(self.theta_d[i]),
            log_s_d=float(self.log_s_d[i]),
            log_s_f=float(self.log_s_f[i]),
            opacity_logit=float(self.opacity_logit[i]),
            color=self.color[i].copy(),
        )

    @property
    def alphas(self) -> np.ndarray:
        return sigmoid(self.opacity_logit)

    def copy(self) -> "GaussianTexture":
        return GaussianTexture(
            tri_id=self.tri_id.copy(), u_r_lo=self.u_r_lo.copy(),
            u_r_hi=self.u_r_hi.copy(), theta_d=self.theta_d.copy(),
            log_s_d=self.log_s_d.copy(), log_s_f=self.log_s_f.copy(),
            opacity_logit=self.opacity_logit.copy(), color=self.color.copy(),
            sh_degree=self.sh_degree, mesh_fingerprint=self.mesh_fingerprint,
        )

    def select(self, idx) -> "GaussianTexture":
        """Subset/reorder by integer or boolean index, order preserved."""
        return GaussianTexture(
            tri_id=self.tri_id[idx], u_r_lo=self.u_r_lo[idx],
            u_r_hi=self.u_r_hi[idx], theta_d=self.theta_d[idx],
            log_s_d=self.log_s_d[idx], log_s_f=self.log_s_f[idx],
            opacity_logit=self.opacity_logit[idx], color=self.color[idx],
            sh_degree=self.sh_degree, mesh_fingerprint=self.mesh_fingerprint,
        )

    def field_equal(self, other: "GaussianTexture") -> bool:
        """Exact (bitwise) equality of every per-Gaussian field."""
        return (
            len(self) == len(other)
            and self.sh_degree == other.sh_degree
            and np.array_equal(self.tri_id, other.tri_id)
            and np.array_equal(self.u_r_lo, other.u_r_lo)
            and np.array_equal(self.u_r_hi, other.u_r_hi)
            and np.array_equal(self.theta_d, other.theta_d)
            and np.array_equal(self.log_s_d, other.log_s_d)
            and np.array_equal(self.log_s_f, other.log_s_f)
            and np.array_equal(self.opacity_logit, other.opacity_logit)
            and np.array_equal(self.color, other.color)
        )

    def validate(self, mesh: ProxyMesh | None = None) -> None:
        n = len(self)
        for name in ("u_r_lo", "u_r_hi", "theta_d", "log_s_d", "log_s_f",
                     "opacity_logit", "color"):
            if getattr(self, name).shape[0] != n:
                raise ValueError(f"field {name} misaligned with tri_id")
        if self.color.shape[1] != 3 * (self.sh_degree + 1) ** 2:
            raise ValueError("color width inconsistent with sh_degree")
        if n and np.linalg.norm(self.u_r_hi - self.u_r_lo, axis=1).min() <= 1e-9:
            raise ValueError("right axis degenerate (|u_r_hi - u_r_lo| <= 1e-9)")
        if mesh is not None and n:
            if self.tri_id.min() < 0 or self.tri_id.max() >= mesh.num_triangles:
                raise ValueError("tri_id out of range for mesh")


@dataclass
class TextureConfig:
    """Initialization and densification knobs."""

    init_scale_factor: float = 0.25      # of the triangle's mean UV edge length
    init_opacity: float = 0.1
    init_color: float = 0.5
    sh_degree: int = 0
    densify_grad_threshold: float = 2e-4  # screen-space, pixels
    split_scale_factor: float = 1.6
    clone_cutoff_frac: float = 0.01       # of scene extent, world units
    prune_alpha: float = 0.005


# ---------------------------------------------------------------------------
# bounding points


@dataclass
class FrameContext:
    """Saved intermediates of the parameter->bounding-point map."""

    u_o: np.ndarray       # (N, 3)
    u_r: np.ndarray       # (N, 3) unit right axis, canonically oriented
    sgn: np.ndarray       # (N,) +-1 orientation of u_r relative to hi - lo
    length: np.ndarray    # (N,) |u_r_hi - u_r_lo|
    seed: np.ndarray      # (N, 3) canonical seed used (pre-orthogonalization)
    orth: np.ndarray      # (N, 3) seed orthogonalized against u_r
    orth_len: np.ndarray  # (N,)
    v: np.ndarray         # (N, 3) normalized orth
    u_d: np.ndarray       # (N, 3)
    u_f: np.ndarray       # (N, 3)
    s_d: np.ndarray       # (N,)
    s_f: np.ndarray       # (N,)
    cos_t: np.ndarray
    sin_t: np.ndarray
    points: np.ndarray    # (N, 6, 3) r_lo, r_hi, d_lo, d_hi, f_lo, f_hi


def _lex_flip(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """True where ``lo`` is lexicographically greater than ``hi``.

    The frame axes are built from the lexicographically ordered pair, so
    the derived covariance depends only on the unordered point pair:
    swapping u_r_lo and u_r_hi cannot change the splat.
    """
    return ((lo[:, 0] > hi[:, 0])
            | ((lo[:, 0] == hi[:, 0])
               & ((lo[:, 1] > hi[:, 1])
                  | ((lo[:, 1] == hi[:, 1]) & (lo[:, 2] > hi[:, 2])))))


def frame_forward(gt: GaussianTexture) -> FrameContext:
    """Derive all six bounding points (vectorized), keeping intermediates."""
    lo = gt.u_r_lo
    hi = gt.u_r_hi
    d = hi - lo
    length = np.linalg.norm(d, axis=1)
    if length.size and length.min() <= 1e-9:
        raise ValueError("right axis degenerate (|u_r_hi - u_r_lo| <= 1e-9)")
    sgn = np.where(_lex_flip(lo, hi), -1.0, 1.0)
    u_r = sgn[:, None] * d / length[:, None]

    seed = np.broadcast_to(_CANON_DOWN, u_r.shape).copy()
    orth = seed - (seed * u_r).sum(axis=1, keepdims=True) * u_r
    orth_len = np.linalg.norm(orth, axis=1)
    fallback = orth_len < 1e-9
    if fallback.any():
        seed[fallback] = _CANON_FALLBACK
        orth[fallback] = seed[fallback] - (
            (seed[fallback] * u_r[fallback]).sum(axis=1, keepdims=True) * u_r[fallback])
        orth_len[fallback] = np.linalg.norm(orth[fallback], axis=1)
    v = orth / orth_len[:, None]

    cos_t = np.cos(gt.theta_d)
    sin_t = np.sin(gt.theta_d)
    u_d = v * cos_t[:, None] + np.cross(u_r, v) * sin_t[:, None]
    u_f = texture_cross(u_r, u_d)

    u_o = 0.5 * (lo + hi)
    s_d = np.exp(gt.log_s_d)
    s_f = np.exp(gt.log_s_f)

    points = np.empty((len(gt), 6, 3))
    points[:, 0] = lo
    points[:, 1] = hi
    points[:, 2] = u_o - s_d[:, None] * u_d
    points[:, 3] = u_o + s_d[:, None] * u_d
    points[:, 4] = u_o - s_f[:, None] * u_f
    points[:, 5] = u_o + s_f[:, None] * u_f

    return FrameContext(u_o=u_o, u_r=u_r, sgn=sgn, length=length, seed=seed,
                        orth=orth, orth_len=orth_len, v=v, u_d=u_d, u_f=u_f,
                        s_d=s_d, s_f=s_f, cos_t=cos_t, sin_t=sin_t, points=points)


def frame_backward(ctx: FrameContext, d_points: np.ndarray):
    """Adjoint of :func:`frame_forward`.

    ``d_points`` is (N, 6, 3); returns gradients for (u_r_lo, u_r_hi,
    theta_d, log_s_d, log_s_f).
    """
    g = d_points
    d_lo = g[:, 0].copy()
    d_hi = g[:, 1].copy()
    d_uo = g[:, 2] + g[:, 3] + g[:, 4] + g[:, 5]

    gd = g[:, 3] - g[:, 2]                      # pairs are u_o -/+ s*axis
    gf = g[:, 5] - g[:, 4]
    d_ud = ctx.s_d[:, None] * gd
    d_uf = ctx.s_f[:, None] * gf
    d_log_s_d = ctx.s_d * (ctx.u_d * gd).sum(axis=1)
    d_log_s_f = ctx.s_f * (ctx.u_f * gf).sum(axis=1)

    # u_f = u_d x u_r  (texture-order cross)
    d_ud = d_ud + np.cross(ctx.u_r, d_uf)
    d_ur = np.cross(d_uf, ctx.u_d)

    # u_d = v cos + (u_r x v) sin
    cross_rv = np.cross(ctx.u_r, ctx.v)
    d_theta = (d_ud * (-ctx.v * ctx.sin_t[:, None] + cross_rv * ctx.cos_t[:, None])).sum(axis=1)
    d_v = d_ud * ctx.cos_t[:, None] + np.cross(d_ud, ctx.u_r) * ctx.sin_t[:, None]
    d_ur = d_ur + np.cross(ctx.v, d_ud) * ctx.sin_t[:, None]

    # v = orth / |orth|
    d_orth = (d_v - ctx.v * (ctx.v * d_v).sum(axis=1, keepdims=True)) / ctx.orth_len[:, None]

    # orth = seed - (seed . u_r) u_r
    su = (ctx.seed * ctx.u_r).sum(axis=1, keepdims=True)
    d_ur = d_ur - ctx.seed * (ctx.u_r * d_orth).sum(axis=1, keepdims=True) - su * d_orth

    # u_r = sgn * (hi - lo) / |hi - lo|
    d_dir = (d_ur - ctx.u_r * (ctx.u_r * d_ur).sum(axis=1, keepdims=True)) / ctx.length[:, None]
    d_dir *= ctx.sgn[:, None]

    d_lo += 0.5 * d_uo - d_dir
    d_hi += 0.5 * d_uo + d_dir
    return d_lo, d_hi, d_theta, d_log_s_d, d_log_s_f


def derive_bounding_points(g: TexGaussian) -> np.ndarray:
    """Six texture points (right, down, forward pairs) for one Gaussian."""
    return frame_forward(GaussianTexture.from_single(g)).points[0]


# ---------------------------------------------------------------------------
# initialization / maintenance


def init_gaussians(mesh: ProxyMesh, config: TextureConfig | None = None) -> GaussianTexture:
    """Three Gaussians per triangle: corner-anchored, centroid-pointing.

    For triangle corners (a, b, c) the k-th Gaussian has ``u_r_lo`` at
    corner k and ``u_r_hi`` at the UV centroid, both at w = 0, so every
    initial center sits strictly inside its triangle.
    """
    cfg = config or TextureConfig()
    n_tris = mesh.num_triangles
    n = 3 * n_tris

    corners = mesh.uvs                                 # (T, 3, 2)
    centroid = corners.mean(axis=1)                    # (T, 2)
    edge_len = (np.linalg.norm(corners[:, 0] - corners[:, 1], axis=1)
                + np.linalg.norm(corners[:, 1] - corners[:, 2], axis=1)
                + np.linalg.norm(corners[:, 2] - corners[:, 0], axis=1)) / 3.0

    lo = np.zeros((n, 3))
    hi = np.zeros((n, 3))
    lo[:, :2] = corners.reshape(n, 2)
    hi[:, :2] = np.repeat(centroid, 3, axis=0)

    scale = cfg.init_scale_factor * np.repeat(edge_len, 3)
    colors = np.zeros((n, 3 * (cfg.sh_degree + 1) ** 2))
    colors[:, :3] = cfg.init_color

    return GaussianTexture(
        tri_id=np.repeat(np.arange(n_tris, dtype=np.int32), 3),
        u_r_lo=lo,
        u_r_hi=hi,
        theta_d=np.zeros(n),
        log_s_d=np.log(scale),
        log_s_f=np.log(scale),
        opacity_logit=np.full(n, float(logit(cfg.init_opacity))),
        color=colors,
        sh_degree=cfg.sh_degree,
        mesh_fingerprint=mesh.fingerprint(),
    )


def mean_uv_edge_length(mesh: ProxyMesh) -> np.ndarray:
    """(T,) mean UV edge length per triangle (the init/LR length scale)."""
    c = mesh.uvs
    return (np.linalg.norm(c[:, 0] - c[:, 1], axis=1)
            + np.linalg.norm(c[:, 1] - c[:, 2], axis=1)
            + np.linalg.norm(c[:, 2] - c[:, 0], axis=1)) / 3.0


def scene_extent(mesh: ProxyMesh) -> float:
    """Bounding-box diagonal of the mesh, the densify size reference."""
    span = mesh.positions.max(axis=0) - mesh.positions.min(axis=0)
    return float(np.linalg.norm(span))


def world_scale_measure(gt: GaussianTexture, mesh: ProxyMesh) -> np.ndarray:
    """Approximate world-space footprint radius per Gaussian.

    The largest of the three texture half-extents, converted to world
    units by the bound triangle's omega scaler.
    """
    half_len = 0.5 * np.linalg.norm(gt.u_r_hi - gt.u_r_lo, axis=1)
    tex = np.maximum(np.maximum(np.exp(gt.log_s_d), np.exp(gt.log_s_f)), half_len)
    return tex * mesh.omega_tri[gt.tri_id]


def densify(gt: GaussianTexture, mesh: ProxyMesh, grad_stats: np.ndarray,
            config: TextureConfig, rng: np.random.Generator):
    """Clone small / split large high-gradient Gaussians.

    ``grad_stats`` is the per-Gaussian mean accumulated screen-space
    positional gradient norm.  Offspring inherit the parent's triangle;
    any offspring whose bounding points stick out of that triangle is
    pulled back inside (center clamped toward the triangle, extents
    shrunk).  Returns ``(texture, parent_rows, n_survivors)``:
    ``parent_rows[i]`` is the pre-call row the i-th output Gaussian
    descends from, and rows >= ``n_survivors`` are fresh offspring.
    """
    grad_stats = np.asarray(grad_stats, dtype=np.float64)
    if grad_stats.shape[0] != len(gt):
        raise ValueError("grad_stats misaligned with texture")

    hot = grad_stats >= config.densify_grad_threshold
    if not hot.any():
        return gt.copy(), np.arange(len(gt), dtype=np.int64), len(gt)

    size = world_scale_measure(gt, mesh)
    cutoff = config.clone_cutoff_frac * scene_extent(mesh)
    split_mask = hot & (size > cutoff)
    clone_mask = hot & ~split_mask

    keep = ~split_mask                      # split parents are replaced
    out_rows = [np.nonzero(keep)[0]]
    pieces = [gt.select(keep)]

    if clone_mask.any():
        idx = np.nonzero(clone_mask)[0]
        pieces.append(gt.select(idx))
        out_rows.append(idx)

    if split_mask.any():
        idx = np.nonzero(split_mask)[0]
        parents = gt.select(np.repeat(idx, 2))
        ctx = frame_forward(parents)
        shrink = 1.0 / config.split_scale_factor
        offsets = (rng.standard_normal((len(parents), 1)) * (0.5 * ctx.length)[:, None] * ctx.u_r
                   + rng.standard_normal((len(parents), 1)) * ctx.s_d[:, None] * ctx.u_d
                   + rng.standard_normal((len(parents), 1)) * ctx.s_f[:, None] * ctx.u_f)
        new_o = ctx.u_o + offsets
        half = 0.5 * (parents.u_r_hi - parents.u_r_lo) * shrink
        parents.u_r_lo = new_o - half
        parents.u_r_hi = new_o + half
        parents.log_s_d = parents.log_s_d + np.log(shrink)
        parents.log_s_f = parents.log_s_f + np.log(shrink)
        pieces.append(parents)
        out_rows.append(np.repeat(idx, 2))

    merged = _concat(pieces, gt)
    parent_rows = np.concatenate(out_rows)
    n_survivors = len(pieces[0])
    new_mask = np.zeros(len(merged), dtype=bool)
    new_mask[n_survivors:] = True
    _pull_back_into_triangles(merged, mesh, new_mask)
    return merged, parent_rows, n_survivors


def prune(gt: GaussianTexture, alpha_min: float = 0.005) -> GaussianTexture:
    """Drop Gaussians whose opacity fell below ``alpha_min``."""
    return gt.select(gt.alphas >= alpha_min)


def rebind(gt: GaussianTexture, target: ProxyMesh) -> GaussianTexture:
    """Re-anchor every Gaussian onto ``target`` triangles via its UV center.

    The target must be UV-mapped into the same atlas; parameters are
    copied unchanged, only ``tri_id`` is re-resolved.  Gaussians whose
    center lies outside the target atlas are dropped; more than 50%
    dropped raises.
    """
    centers = 0.5 * (gt.u_r_lo[:, :2] + gt.u_r_hi[:, :2])
    new_ids = np.full(len(gt), -1, dtype=np.int32)
    for i, uv in enumerate(centers):
        hit = locate_uv(target, uv)
        if hit is not None:
            new_ids[i] = hit[0]
    kept = new_ids >= 0
    dropped = int((~kept).sum())
    if len(gt) and dropped > 0.5 * len(gt):
        raise ValueError(
            f"atlases incompatible: {dropped}/{len(gt)} Gaussians fell outside the target atlas")
    if dropped:
        _LOG.warning("rebind dropped %d of %d Gaussians outside the target atlas",
                     dropped, len(gt))
    out = gt.select(kept)
    out.tri_id = new_ids[kept]
    out.mesh_fingerprint = target.fingerprint()
    return out


# ---------------------------------------------------------------------------
# serialization

_HEADER = struct.Struct("<4sIIQ")


def _record_dtype(sh_degree: int) -> np.dtype:
    return np.dtype([
        ("tri_id", "<u4"),
        ("u_r_lo", "<f4", 3),
        ("u_r_hi", "<f4", 3),
        ("theta_d", "<f4"),
        ("log_s_d", "<f4"),
        ("log_s_f", "<f4"),
        ("opacity_logit", "<f4"),
        ("color", "<f4", 3 * (sh_degree + 1) ** 2),
    ])


def save(gt: GaussianTexture, path) -> None:
    """Write the texture in the binary 3DGT layout (f32 records)."""
    rec = np.zeros(len(gt), dtype=_record_dtype(gt.sh_degree))
    rec["tri_id"] = gt.tri_id
    rec["u_r_lo"] = gt.u_r_lo
    rec["u_r_hi"] = gt.u_r_hi
    rec["theta_d"] = gt.theta_d
    rec["log_s_d"] = gt.log_s_d
    rec["log_s_f"] = gt.log_s_f
    rec["opacity_logit"] = gt.opacity_logit
    rec["color"] = gt.color
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, gt.sh_degree, len(gt)))
        fh.write(rec.tobytes())
        fh.write(gt.mesh_fingerprint[:8].ljust(8, b"\x00"))


def load(path) -> GaussianTexture:
    """Read a texture written by :func:`save`; validates magic and length."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEADER.size:
        raise ValueError("truncated 3DGT file (no header)")
    magic, version, sh_degree, count = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise ValueError(f"bad magic {magic!r}, not a 3DGT file")
    if version != VERSION:
        raise ValueError(f"unsupported 3DGT version {version}")
    dtype = _record_dtype(sh_degree)
    need = _HEADER.size + count * dtype.itemsize + 8
    if len(data) != need:
        raise ValueError(f"truncated 3DGT file: {len(data)} bytes, expected {need}")
    rec = np.frombuffer(data, dtype=dtype, count=count, offset=_HEADER.size)
    return GaussianTexture(
        tri_id=rec["tri_id"].astype(np.int32),
        u_r_lo=rec["u_r_lo"].astype(np.float64),
        u_r_hi=rec["u_r_hi"].astype(np.float64),
        theta_d=rec["theta_d"].astype(np.float64),
        log_s_d=rec["log_s_d"].astype(np.float64),
        log_s_f=rec["log_s_f"].astype(np.float64),
        opacity_logit=rec["opacity_logit"].astype(np.float64),
        color=rec["color"].astype(np.float64).reshape(count, -1),
        sh_degree=int(sh_degree),
        mesh_fingerprint=data[-8:],
    )


# ---------------------------------------------------------------------------


def _concat(pieces, template: GaussianTexture) -> GaussianTexture:
    return GaussianTexture(
        tri_id=np.concatenate([p.tri_id for p in pieces]),
        u_r_lo=np.concatenate([p.u_r_lo for p in pieces]),
        u_r_hi=np.concatenate([p.u_r_hi for p in pieces]),
        theta_d=np.concatenate([p.theta_d for p in pieces]),
        log_s_d=np.concatenate([p.log_s_d for p in pieces]),
        log_s_f=np.concatenate([p.log_s_f for p in pieces]),
        opacity_logit=np.concatenate([p.opacity_logit for p in pieces]),
        color=np.concatenate([p.color for p in pieces]),
        sh_degree=template.sh_degree,
        mesh_fingerprint=template.mesh_fingerprint,
    )


def _pull_back_into_triangles(gt: GaussianTexture, mesh: ProxyMesh,
                              mask: np.ndarray, eta: float = 1e-3) -> None:
    """Force the masked Gaussians' bounding points inside their triangles.

    Two deterministic moves in barycentric space: translate the center
    onto the triangle (clamp plus a small nudge toward the centroid to
    stay strictly inside), then shrink all extents about the center by
    the largest factor keeping every bounding point's barycentric
    components non-negative.  In-place on ``gt``.
    """
    idx = np.nonzero(mask)[0]
    if idx.size == 0:
        return
    corners = mesh.uvs[gt.tri_id[idx]]                    # (k, 3, 2)
    ctx = frame_forward(gt.select(idx))
    phi_pts = uv_to_barycentric_many(ctx.points[:, :, :2], corners[:, None, :, :])
    needs = phi_pts.min(axis=(1, 2)) < 0.0
    if not needs.any():
        return
    rows = idx[needs]
    corners = corners[needs]

    sub = gt.select(rows)
    center = 0.5 * (sub.u_r_lo[:, :2] + sub.u_r_hi[:, :2])
    phi_o = uv_to_barycentric_many(center, corners)
    phi_o = clamp_barycentric_many(phi_o)
    # centers on (or clamped onto) the boundary get nudged strictly inside
    # so the shrink factor below stays positive
    weak = phi_o.min(axis=1) < eta
    phi_o[weak] = (1.0 - eta) * phi_o[weak] + eta / 3.0
    new_center = np.einsum("na,nad->nd", phi_o, corners)
    shift = np.zeros((rows.size, 3))
    shift[weak, :2] = new_center[weak] - center[weak]
    sub.u_r_lo = sub.u_r_lo + shift
    sub.u_r_hi = sub.u_r_hi + shift

    ctx = frame_forward(sub)
    phi_pts = uv_to_barycentric_many(ctx.points[:, :, :2], corners[:, None, :, :])
    off = phi_pts - phi_o[:, None, :]                     # (k, 6, 3)
    with np.errstate(divide="ignore", invalid="ignore"):
        t_comp = np.where(off < 0.0, phi_o[:, None, :] / -off, np.inf)
    t = np.minimum(1.0, t_comp.min(axis=(1, 2)))

    u_o = 0.5 * (sub.u_r_lo + sub.u_r_hi)
    sub.u_r_lo = u_o + t[:, None] * (sub.u_r_lo - u_o)
    sub.u_r_hi = u_o + t[:, None] * (sub.u_r_hi - u_o)
    sub.log_s_d = sub.log_s_d + np.log(t)
    sub.log_s_f = sub.log_s_f + np.log(t)

    for name in ("u_r_lo", "u_r_hi", "log_s_d", "log_s_f"):
        getattr(gt, name)[rows] = getattr(sub, name)
