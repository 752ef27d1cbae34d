"""Optimization loop: Adam over texture parameters with densify/prune.

The loss is the photometric L1 / D-SSIM blend plus the per-Gaussian
containment and extrusion regularizers applied inside the sum over
Gaussians.  Position parameters (texture points) step with a per-triangle
learning rate proportional to the triangle's mean UV edge length, so a
Gaussian moves comparably in world units no matter how its chart is
scaled; the same scaling applies to the w component, whose omega scaler
already matches it to world units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .gradients import LossWeights, evaluate_scene
from .losses import photometric_loss, photometric_with_grad  # noqa: F401 (re-export)
from .metrics import psnr
from .projection import MeshBuffers
from .render import RasterConfig
from .texture import (GaussianTexture, TextureConfig, densify, init_gaussians,
                      mean_uv_edge_length, prune)


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    # loss weights
    lambda_l1: float = 0.8
    lambda_phi: float = 1e5
    lambda_w: float = 1.0
    eps_phi: float = 0.01
    reg_mean_mode: bool = False

    iterations: int = 3000
    seed: int = 0
    background: tuple = (0.0, 0.0, 0.0)

    # learning rates per parameter class
    lr_position: float = 2e-4        # x mean UV edge length of the triangle
    lr_position_final_ratio: float = 0.01   # exponential decay target
    lr_theta: float = 1e-3
    lr_log_scale: float = 5e-3
    lr_opacity: float = 5e-2
    lr_color: float = 2.5e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-15

    # densification schedule
    densify_interval: int = 300
    densify_start: int = 300
    densify_stop: int = 1800
    densify_grad_threshold: float = 2e-4
    split_scale_factor: float = 1.6
    clone_cutoff_frac: float = 0.01
    prune_alpha: float = 0.005

    # initialization
    init_scale_factor: float = 0.25
    init_opacity: float = 0.1
    sh_degree: int = 0

    def __post_init__(self):
        if not 0.0 <= self.lambda_l1 <= 1.0:
            raise ValueError("lambda_l1 must be in [0, 1]")
        if self.eps_phi < 0:
            raise ValueError("eps_phi must be >= 0")
        for name in ("lr_position", "lr_theta", "lr_log_scale", "lr_opacity", "lr_color"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")

    def loss_weights(self) -> LossWeights:
        return LossWeights(lambda_l1=self.lambda_l1, lambda_phi=self.lambda_phi,
                           lambda_w=self.lambda_w, eps_phi=self.eps_phi,
                           reg_mean_mode=self.reg_mean_mode)

    def texture_config(self) -> TextureConfig:
        return TextureConfig(init_scale_factor=self.init_scale_factor,
                             init_opacity=self.init_opacity,
                             sh_degree=self.sh_degree,
                             densify_grad_threshold=self.densify_grad_threshold,
                             split_scale_factor=self.split_scale_factor,
                             clone_cutoff_frac=self.clone_cutoff_frac,
                             prune_alpha=self.prune_alpha)


def total_loss(rendered, truth, gt: GaussianTexture, mesh, cfg: TrainConfig) -> float:
    """Photometric term plus the weighted per-Gaussian regularizer sum."""
    from .losses import regularizers_forward
    from .projection import project_forward
    photo = photometric_loss(np.asarray(rendered)[..., :3],
                             np.asarray(truth)[..., :3], cfg.lambda_l1)
    reg = regularizers_forward(project_forward(gt, MeshBuffers(mesh)), cfg.eps_phi)
    scale = 1.0 / len(gt) if (cfg.reg_mean_mode and len(gt)) else 1.0
    return photo + cfg.lambda_phi * reg.l_phi.sum() * scale + cfg.lambda_w * reg.l_w.sum() * scale


class Adam:
    """Adam with per-row state that survives densify/prune reindexing."""

    def __init__(self, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-15):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: dict = {}
        self.v: dict = {}

    def step(self, params: dict, grads: dict, lrs: dict) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for key, p in params.items():
            g = grads[key]
            if key not in self.m:
                self.m[key] = np.zeros_like(p)
                self.v[key] = np.zeros_like(p)
            m = self.m[key]
            v = self.v[key]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            lr = np.asarray(lrs[key], dtype=np.float64)
            if lr.ndim and lr.ndim < p.ndim:
                lr = lr.reshape(lr.shape + (1,) * (p.ndim - lr.ndim))
            p -= lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)

    def reindex(self, rows: np.ndarray, reset: np.ndarray) -> None:
        """Gather state by ``rows`` (new -> old); zero it where ``reset``."""
        for key in self.m:
            self.m[key] = self.m[key][rows]
            self.v[key] = self.v[key][rows]
            self.m[key][reset] = 0.0
            self.v[key][reset] = 0.0


@dataclass
class FrameData:
    """A posed training view: camera plus ground-truth RGB (composited)."""

    camera: object
    rgb: np.ndarray


def prepare_frames(frames, background) -> list:
    """Composite ground-truth images over the training background."""
    bg = np.asarray(background, dtype=np.float64)
    out = []
    for cam, img in zip(frames.cameras, frames.images):
        img = np.asarray(img, dtype=np.float64)
        if img.shape[-1] == 4:
            a = img[..., 3:4]
            rgb = img[..., :3] * a + bg * (1.0 - a)
        else:
            rgb = img[..., :3]
        if img.shape[0] != cam.height or img.shape[1] != cam.width:
            raise ValueError("ground-truth image size does not match camera")
        out.append(FrameData(camera=cam, rgb=rgb))
    return out


def train(frames, mesh, cfg: TrainConfig | None = None,
          raster_cfg: RasterConfig | None = None, progress=None):
    """Optimize a fresh texture against posed frames.

    ``frames`` needs ``.cameras`` and ``.images`` (see
    :class:`uvsplat.dataset.FrameSet`).  Returns ``(texture, log)`` where
    ``log`` is a list of ``(iteration, loss, psnr, gaussian_count)``
    tuples, one per iteration.  Deterministic given the config seed.
    """
    cfg = cfg or TrainConfig()
    raster_cfg = raster_cfg or RasterConfig()
    if len(frames.cameras) < 1:
        raise ValueError("need at least one posed frame")
    data = prepare_frames(frames, cfg.background)
    weights = cfg.loss_weights()
    rng = np.random.default_rng(cfg.seed)

    gt = init_gaussians(mesh, cfg.texture_config())
    buffers = MeshBuffers(mesh)
    uv_scale = mean_uv_edge_length(mesh)
    adam = Adam(cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
    grad_accum = np.zeros(len(gt))
    grad_count = np.zeros(len(gt))
    log = []

    order = _epoch_order(rng, len(data), cfg.iterations)
    for it in range(cfg.iterations):
        frame = data[order[it]]
        try:
            ev = evaluate_scene(gt, buffers, frame.camera, frame.rgb, weights,
                                raster_cfg, cfg.background, with_grad=True)
        except FloatingPointError as exc:
            raise TrainingError(f"iteration {it}: {exc}") from exc
        if not math.isfinite(ev.loss):
            raise TrainingError(f"iteration {it}: non-finite loss")

        rec = ev.record
        params = {"u_r_lo": gt.u_r_lo, "u_r_hi": gt.u_r_hi, "theta_d": gt.theta_d,
                  "log_s_d": gt.log_s_d, "log_s_f": gt.log_s_f,
                  "opacity_logit": gt.opacity_logit, "color": gt.color}
        grads = {"u_r_lo": rec.u_r_lo, "u_r_hi": rec.u_r_hi, "theta_d": rec.theta_d,
                 "log_s_d": rec.log_s_d, "log_s_f": rec.log_s_f,
                 "opacity_logit": rec.opacity_logit, "color": rec.color}
        pos_lr = _position_lr(cfg, it) * uv_scale[gt.tri_id]
        lrs = {"u_r_lo": pos_lr, "u_r_hi": pos_lr, "theta_d": cfg.lr_theta,
               "log_s_d": cfg.lr_log_scale, "log_s_f": cfg.lr_log_scale,
               "opacity_logit": cfg.lr_opacity, "color": cfg.lr_color}
        adam.step(params, grads, lrs)

        grad_accum += rec.screen_grad_norm
        grad_count[ev.sctx.vis] += 1.0

        view_psnr = psnr(ev.image[..., :3], frame.rgb)
        log.append((it, ev.loss, view_psnr, len(gt)))
        if progress is not None:
            progress(it, ev.loss, view_psnr, len(gt))

        if (cfg.densify_start <= it < cfg.densify_stop
                and (it - cfg.densify_start) % cfg.densify_interval == 0
                and it > cfg.densify_start):
            stats = grad_accum / np.maximum(grad_count, 1.0)
            gt, parents, n_survivors = densify(gt, mesh, stats, cfg.texture_config(), rng)
            reset = np.arange(len(gt)) >= n_survivors   # offspring start fresh
            adam.reindex(parents, reset)

            alive = gt.alphas >= cfg.prune_alpha
            gt = prune(gt, cfg.prune_alpha)
            keep_rows = np.nonzero(alive)[0]
            adam.reindex(keep_rows, np.zeros(len(keep_rows), dtype=bool))

            grad_accum = np.zeros(len(gt))
            grad_count = np.zeros(len(gt))

    return gt, log


def _position_lr(cfg: TrainConfig, it: int) -> float:
    if cfg.iterations <= 1:
        return cfg.lr_position
    t = it / (cfg.iterations - 1)
    return cfg.lr_position * cfg.lr_position_final_ratio ** t


def _epoch_order(rng: np.random.Generator, n_frames: int, iterations: int) -> np.ndarray:
    """Seeded epoch-wise shuffle covering ``iterations`` draws."""
    reps = iterations // n_frames + 1
    chunks = [rng.permutation(n_frames) for _ in range(reps)]
    return np.concatenate(chunks)[:iterations]
