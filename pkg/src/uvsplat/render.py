"""Deterministic CPU splatting renderer.

World Gaussians are projected to screen-space 2D Gaussians through the
local affine (Jacobian) approximation of the pinhole projection, globally
depth-sorted, then composited front-to-back per pixel by tile-parallel
kernels.  Identical inputs give bit-identical images for any worker
count: compositing always follows the single global depth order and each
tile writes only its own pixels.

Conventions: camera looks down +z with x right and y down; pixel (px, py)
samples the splat field at exactly (px, py); rendered images are float64
(H, W, 4) RGBA with premultiplied-style accumulated alpha = 1 - T_final.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np

from . import _raster, sh
from .texture import sigmoid


def set_threads(n: int) -> int:
    """Set the rasterizer worker count (clamped to what numba allows)."""
    n = max(1, min(int(n), numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(n)
    return n


@dataclass
class Camera:
    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float
    world_to_camera: np.ndarray          # (4, 4) rigid
    near: float = 0.01
    far: float = 1000.0

    def __post_init__(self):
        self.world_to_camera = np.asarray(self.world_to_camera, dtype=np.float64)
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 < self.near < self.far):
            raise ValueError("require 0 < near < far")
        if self.world_to_camera.shape != (4, 4):
            raise ValueError("world_to_camera must be 4x4")

    @property
    def rotation(self) -> np.ndarray:
        return self.world_to_camera[:3, :3]

    @property
    def translation(self) -> np.ndarray:
        return self.world_to_camera[:3, 3]

    @property
    def center(self) -> np.ndarray:
        """Camera origin in world coordinates."""
        return -self.rotation.T @ self.translation


@dataclass
class RasterConfig:
    """Compositing constants (inherited splatting defaults)."""

    tile_size: int = 16
    dilation: float = 0.3          # isotropic px^2 added to screen covariance
    alpha_clip: float = 0.99
    alpha_min: float = 1.0 / 255.0
    transmittance_min: float = 1e-4
    footprint_sigma: float = 3.0


@dataclass
class ScreenContext:
    """Forward rasterization state kept for the backward pass."""

    cam: Camera
    cfg: RasterConfig
    n_total: int
    vis: np.ndarray          # (V,) original indices, depth-ascending
    t_cam: np.ndarray        # (V, 3)
    mean2d: np.ndarray       # (V, 2)
    cov2d: np.ndarray        # (V, 2, 2) with dilation
    conic: np.ndarray        # (V, 3) packed (a, b, c)
    covs_world: np.ndarray   # (V, 3, 3)
    alphas: np.ndarray       # (V,)
    colors_param: np.ndarray  # (V, C) raw color parameters
    colors_eval: np.ndarray  # (V, 3) clamped RGB fed to the kernel
    color_gate: np.ndarray   # (V, 3) bool, clamp pass-through mask
    sh_degree: int
    sh_cache: tuple | None   # (basis, dbasis, dirs, inv_len) when degree > 0
    pair_gauss: np.ndarray   # (P,) indices into the V arrays
    tile_start: np.ndarray   # (tiles + 1,)
    final_t: np.ndarray      # (H, W)
    last_pair: np.ndarray    # (H, W)
    n_contrib: np.ndarray    # (H, W) accumulated-contribution counts
    n_clipped: np.ndarray    # (H, W) alpha-clip hit counts
    image: np.ndarray        # (H, W, 4)


def render_arrays(means, covs, alphas, colors, cam: Camera, background,
                  cfg: RasterConfig | None = None, sh_degree: int = 0) -> ScreenContext:
    """Render world Gaussians given as arrays; returns the full context.

    ``colors`` is (N, 3) plain RGB for ``sh_degree`` 0, otherwise
    (N, 3 * (sh_degree + 1)**2) coefficient rows evaluated along the ray
    from the camera center to each Gaussian.
    """
    cfg = cfg or RasterConfig()
    means = np.asarray(means, dtype=np.float64)
    covs = np.asarray(covs, dtype=np.float64)
    alphas = np.asarray(alphas, dtype=np.float64)
    colors = np.asarray(colors, dtype=np.float64)
    background = np.asarray(background, dtype=np.float64)
    n = means.shape[0]

    r = cam.rotation
    t_cam = means @ r.T + cam.translation
    vis = np.nonzero((t_cam[:, 2] > cam.near) & (t_cam[:, 2] < cam.far))[0]
    # global depth sort, ties broken by original index (stable sort)
    vis = vis[np.argsort(t_cam[vis, 2], kind="stable")]

    t_vis = t_cam[vis]
    tz = t_vis[:, 2]
    mean2d = np.empty((vis.size, 2))
    mean2d[:, 0] = cam.fx * t_vis[:, 0] / tz + cam.cx
    mean2d[:, 1] = cam.fy * t_vis[:, 1] / tz + cam.cy

    jac = np.zeros((vis.size, 2, 3))
    jac[:, 0, 0] = cam.fx / tz
    jac[:, 0, 2] = -cam.fx * t_vis[:, 0] / tz ** 2
    jac[:, 1, 1] = cam.fy / tz
    jac[:, 1, 2] = -cam.fy * t_vis[:, 1] / tz ** 2
    m = jac @ r
    cov2d = m @ covs[vis] @ np.transpose(m, (0, 2, 1))
    cov2d[:, 0, 0] += cfg.dilation
    cov2d[:, 1, 1] += cfg.dilation

    det = cov2d[:, 0, 0] * cov2d[:, 1, 1] - cov2d[:, 0, 1] * cov2d[:, 1, 0]
    if vis.size and det.min() <= 0:
        raise FloatingPointError("screen covariance not positive definite after dilation")
    conic = np.empty((vis.size, 3))
    conic[:, 0] = cov2d[:, 1, 1] / det
    conic[:, 1] = -0.5 * (cov2d[:, 0, 1] + cov2d[:, 1, 0]) / det
    conic[:, 2] = cov2d[:, 0, 0] / det

    mid = 0.5 * (cov2d[:, 0, 0] + cov2d[:, 1, 1])
    lam_max = mid + np.sqrt(np.maximum(mid * mid - det, 0.0))
    radius = np.ceil(cfg.footprint_sigma * np.sqrt(lam_max))

    colors_eval, color_gate, sh_cache = _evaluate_colors(
        colors[vis], sh_degree, means[vis], cam)

    tiles_x = (cam.width + cfg.tile_size - 1) // cfg.tile_size
    tiles_y = (cam.height + cfg.tile_size - 1) // cfg.tile_size
    rects = _raster.tile_rects(mean2d, radius, cfg.tile_size, tiles_x, tiles_y)
    pair_gauss, tile_start = _raster.build_pairs(rects, tiles_x, tiles_x * tiles_y)

    image = np.zeros((cam.height, cam.width, 4))
    final_t = np.ones((cam.height, cam.width))
    last_pair = np.full((cam.height, cam.width), -1, dtype=np.int64)
    n_contrib = np.zeros((cam.height, cam.width), dtype=np.int64)
    n_clipped = np.zeros((cam.height, cam.width), dtype=np.int64)
    _raster.rasterize_forward(cam.width, cam.height, cfg.tile_size, tile_start,
                              pair_gauss, mean2d, conic, alphas[vis], colors_eval,
                              background, cfg.alpha_clip, cfg.alpha_min,
                              cfg.transmittance_min, image, final_t, last_pair,
                              n_contrib, n_clipped)

    return ScreenContext(cam=cam, cfg=cfg, n_total=n, vis=vis, t_cam=t_vis,
                         mean2d=mean2d, cov2d=cov2d, conic=conic,
                         covs_world=covs[vis], alphas=alphas[vis],
                         colors_param=colors[vis], colors_eval=colors_eval,
                         color_gate=color_gate, sh_degree=sh_degree,
                         sh_cache=sh_cache, pair_gauss=pair_gauss,
                         tile_start=tile_start, final_t=final_t,
                         last_pair=last_pair, n_contrib=n_contrib,
                         n_clipped=n_clipped, image=image)


def render_backward(ctx: ScreenContext, d_image: np.ndarray, background):
    """Chain image gradients back to world means/covs, opacity and color.

    Returns a dict with full-size (N) arrays: ``mean`` (N, 3), ``cov``
    (N, 3, 3), ``alpha`` (N,), ``color`` (N, C), plus ``mean2d_norm``
    (N,), the screen-space positional gradient norm used as the
    densification statistic.
    """
    cam, cfg = ctx.cam, ctx.cfg
    background = np.asarray(background, dtype=np.float64)
    pair_grads = np.zeros((ctx.pair_gauss.shape[0], 9))
    _raster.rasterize_backward(cam.width, cam.height, cfg.tile_size, ctx.tile_start,
                               ctx.pair_gauss, ctx.mean2d, ctx.conic, ctx.alphas,
                               ctx.colors_eval, background, cfg.alpha_clip,
                               cfg.alpha_min, np.ascontiguousarray(d_image),
                               ctx.final_t, ctx.last_pair, pair_grads)
    g = _raster.reduce_pair_grads(ctx.pair_gauss, pair_grads, ctx.vis.size)

    d_mean2d = g[:, 0:2]
    d_alpha_vis = g[:, 5]
    d_color_eval = g[:, 6:9]

    # conic (packed a, b, c) -> cov2d; the packed b appears twice in the matrix
    d_conic_full = np.empty((ctx.vis.size, 2, 2))
    d_conic_full[:, 0, 0] = g[:, 2]
    d_conic_full[:, 0, 1] = 0.5 * g[:, 3]
    d_conic_full[:, 1, 0] = 0.5 * g[:, 3]
    d_conic_full[:, 1, 1] = g[:, 4]
    conic_full = np.empty_like(d_conic_full)
    conic_full[:, 0, 0] = ctx.conic[:, 0]
    conic_full[:, 0, 1] = ctx.conic[:, 1]
    conic_full[:, 1, 0] = ctx.conic[:, 1]
    conic_full[:, 1, 1] = ctx.conic[:, 2]
    d_cov2d = -conic_full @ d_conic_full @ conic_full

    r = cam.rotation
    tz = ctx.t_cam[:, 2]
    jac = np.zeros((ctx.vis.size, 2, 3))
    jac[:, 0, 0] = cam.fx / tz
    jac[:, 0, 2] = -cam.fx * ctx.t_cam[:, 0] / tz ** 2
    jac[:, 1, 1] = cam.fy / tz
    jac[:, 1, 2] = -cam.fy * ctx.t_cam[:, 1] / tz ** 2
    m = jac @ r

    sigma = ctx.covs_world
    d_cov_world = np.transpose(m, (0, 2, 1)) @ d_cov2d @ m
    d_m = (d_cov2d + np.transpose(d_cov2d, (0, 2, 1))) @ m @ sigma
    d_jac = d_m @ r.T

    d_t = np.zeros((ctx.vis.size, 3))
    tx, ty = ctx.t_cam[:, 0], ctx.t_cam[:, 1]
    d_t[:, 0] += d_jac[:, 0, 2] * (-cam.fx / tz ** 2)
    d_t[:, 1] += d_jac[:, 1, 2] * (-cam.fy / tz ** 2)
    d_t[:, 2] += (d_jac[:, 0, 0] * (-cam.fx / tz ** 2)
                  + d_jac[:, 1, 1] * (-cam.fy / tz ** 2)
                  + d_jac[:, 0, 2] * (2.0 * cam.fx * tx / tz ** 3)
                  + d_jac[:, 1, 2] * (2.0 * cam.fy * ty / tz ** 3))
    d_t[:, 0] += d_mean2d[:, 0] * cam.fx / tz
    d_t[:, 1] += d_mean2d[:, 1] * cam.fy / tz
    d_t[:, 2] += (d_mean2d[:, 0] * (-cam.fx * tx / tz ** 2)
                  + d_mean2d[:, 1] * (-cam.fy * ty / tz ** 2))
    d_mean_world = d_t @ r

    # colors: clamp gate, then (for SH) coefficient and view-direction chains
    d_color_raw = d_color_eval * ctx.color_gate
    if ctx.sh_degree == 0:
        d_color_param_vis = d_color_raw
    else:
        basis, dbasis, dirs, inv_len = ctx.sh_cache
        d_color_param_vis, d_dirs = sh.eval_sh_backward(ctx.colors_param, basis,
                                                        dbasis, d_color_raw)
        d_vec = (d_dirs - dirs * (dirs * d_dirs).sum(axis=1, keepdims=True)) * inv_len[:, None]
        d_mean_world = d_mean_world + d_vec

    n = ctx.n_total
    out_mean = np.zeros((n, 3))
    out_cov = np.zeros((n, 3, 3))
    out_alpha = np.zeros(n)
    out_color = np.zeros((n, d_color_param_vis.shape[1]))
    out_norm = np.zeros(n)
    out_mean[ctx.vis] = d_mean_world
    out_cov[ctx.vis] = d_cov_world
    out_alpha[ctx.vis] = d_alpha_vis
    out_color[ctx.vis] = d_color_param_vis
    out_norm[ctx.vis] = np.linalg.norm(d_mean2d, axis=1)
    return {"mean": out_mean, "cov": out_cov, "alpha": out_alpha,
            "color": out_color, "mean2d_norm": out_norm}


def render(gaussians, cam: Camera, background=(0.0, 0.0, 0.0),
           cfg: RasterConfig | None = None, sh_degree: int = 0) -> np.ndarray:
    """Render a sequence of :class:`~uvsplat.projection.WorldGaussian`."""
    if len(gaussians) == 0:
        image = np.zeros((cam.height, cam.width, 4))
        image[:, :, :3] = np.asarray(background, dtype=np.float64)
        return image
    means = np.stack([g.mean for g in gaussians])
    covs = np.stack([g.cov for g in gaussians])
    alphas = np.array([g.alpha for g in gaussians])
    colors = np.stack([g.color for g in gaussians])
    ctx = render_arrays(means, covs, alphas, colors, cam, background, cfg, sh_degree)
    return ctx.image


def project_to_screen(wg, cam: Camera, cfg: RasterConfig | None = None):
    """Screen-space 2D Gaussian of one world Gaussian.

    Returns ``(mean2d, cov2d, depth)`` with the isotropic dilation already
    added, or ``None`` when the Gaussian is depth-culled.
    """
    cfg = cfg or RasterConfig()
    t = cam.rotation @ np.asarray(wg.mean, dtype=np.float64) + cam.translation
    if not (cam.near < t[2] < cam.far):
        return None
    mean2d = np.array([cam.fx * t[0] / t[2] + cam.cx, cam.fy * t[1] / t[2] + cam.cy])
    jac = np.array([
        [cam.fx / t[2], 0.0, -cam.fx * t[0] / t[2] ** 2],
        [0.0, cam.fy / t[2], -cam.fy * t[1] / t[2] ** 2],
    ])
    m = jac @ cam.rotation
    cov2d = m @ np.asarray(wg.cov, dtype=np.float64) @ m.T + cfg.dilation * np.eye(2)
    return mean2d, cov2d, float(t[2])


def _evaluate_colors(colors_vis, sh_degree, means_vis, cam: Camera):
    """Per-Gaussian RGB in [0, 1] plus the clamp gate and SH cache."""
    if sh_degree == 0:
        raw = colors_vis
        cache = None
    else:
        vec = means_vis - cam.center
        length = np.linalg.norm(vec, axis=1)
        inv_len = 1.0 / np.maximum(length, 1e-12)
        dirs = vec * inv_len[:, None]
        raw, basis, dbasis = sh.eval_sh(colors_vis, dirs, sh_degree)
        cache = (basis, dbasis, dirs, inv_len)
    gate = (raw > 0.0) & (raw < 1.0)
    return np.clip(raw, 0.0, 1.0), gate, cache
