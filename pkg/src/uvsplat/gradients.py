"""Reverse-mode differentiation of the full pipeline, with an FD oracle.

The pipeline is static (loss -> image -> screen splats -> world Gaussians
-> bounding points -> texture parameters), so differentiation is a fixed
chain of hand-written analytic Jacobians rather than a general tape.  The
whole differentiable path runs in float64.

:func:`grad_check` validates the analytic gradients against central
finite differences.  FD is only meaningful when the perturbation does not
flip a discrete decision (compositing truncation, alpha clipping, depth
order, clamp/ReLU/sign branches, ...), so each forward pass also emits a
"decision signature"; coordinates whose +h/-h signatures disagree are
reported as kink-adjacent and excluded from the comparison.
"""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass

import numpy as np

from .losses import (RegContext, photometric_with_grad, regularizers_backward,
                     regularizers_forward)
from .projection import MeshBuffers, ProjectionContext, project_backward, project_forward
from .render import Camera, RasterConfig, ScreenContext, render_arrays, render_backward
from .texture import GaussianTexture

PARAM_FIELDS = ("u_r_lo", "u_r_hi", "theta_d", "log_s_d", "log_s_f",
                "opacity_logit", "color")


class NonFiniteError(FloatingPointError):
    """A pipeline stage produced a non-finite value; names the first node."""

    def __init__(self, node: str):
        super().__init__(f"non-finite values at node '{node}'")
        self.node = node


@dataclass
class LossWeights:
    lambda_l1: float = 0.8
    lambda_phi: float = 1e5
    lambda_w: float = 1.0
    eps_phi: float = 0.01
    reg_mean_mode: bool = False   # divide the regularizer sum by the Gaussian count


@dataclass
class GradientRecord:
    """Per-Gaussian loss gradients for every optimizable field."""

    u_r_lo: np.ndarray          # (N, 3)
    u_r_hi: np.ndarray          # (N, 3)
    theta_d: np.ndarray         # (N,)
    log_s_d: np.ndarray         # (N,)
    log_s_f: np.ndarray         # (N,)
    opacity_logit: np.ndarray   # (N,)
    color: np.ndarray           # (N, C)
    screen_grad_norm: np.ndarray  # (N,) densification statistic

    def check_finite(self) -> None:
        for name in PARAM_FIELDS:
            if not np.all(np.isfinite(getattr(self, name))):
                raise NonFiniteError(f"gradient/{name}")


@dataclass
class SceneEval:
    loss: float
    parts: dict
    image: np.ndarray
    record: GradientRecord | None
    signature: bytes
    pctx: ProjectionContext
    sctx: ScreenContext


def evaluate_scene(gt: GaussianTexture, buffers: MeshBuffers, cam: Camera,
                   truth_rgb: np.ndarray, weights: LossWeights,
                   raster_cfg: RasterConfig | None = None,
                   background=(0.0, 0.0, 0.0), with_grad: bool = True) -> SceneEval:
    """One full forward (and optionally backward) pass over a scene."""
    raster_cfg = raster_cfg or RasterConfig()
    background = np.asarray(background, dtype=np.float64)

    pctx = project_forward(gt, buffers)
    _ensure_finite(pctx.means, "projection/means")
    _ensure_finite(pctx.covs, "projection/covariances")

    sctx = render_arrays(pctx.means, pctx.covs, pctx.alphas, gt.color, cam,
                         background, raster_cfg, gt.sh_degree)
    _ensure_finite(sctx.image, "render/image")

    photo, d_rgb, parts = photometric_with_grad(sctx.image[..., :3], truth_rgb,
                                                weights.lambda_l1)
    reg = regularizers_forward(pctx, weights.eps_phi)
    scale = 1.0 / len(gt) if (weights.reg_mean_mode and len(gt)) else 1.0
    reg_phi = float(reg.l_phi.sum() * scale)
    reg_w = float(reg.l_w.sum() * scale)
    loss = photo + weights.lambda_phi * reg_phi + weights.lambda_w * reg_w
    if not np.isfinite(loss):
        raise NonFiniteError("loss/total")
    parts = dict(parts, photometric=photo, reg_phi=reg_phi, reg_w=reg_w)

    diff_sign = np.sign(sctx.image[..., :3] - truth_rgb).astype(np.int8)
    signature = _decision_signature(pctx, sctx, reg, diff_sign)

    record = None
    if with_grad:
        record = _backward(gt, pctx, sctx, reg, d_rgb, weights, scale, background)
    return SceneEval(loss=loss, parts=parts, image=sctx.image, record=record,
                     signature=signature, pctx=pctx, sctx=sctx)


def _backward(gt, pctx, sctx, reg, d_rgb, weights, scale, background) -> GradientRecord:
    d_image = np.zeros_like(sctx.image)
    d_image[..., :3] = d_rgb
    rb = render_backward(sctx, d_image, background)
    for key in ("mean", "cov", "alpha", "color"):
        _ensure_finite(rb[key], f"render_backward/{key}")

    n = len(gt)
    d_l_phi = np.full(n, weights.lambda_phi * scale)
    d_l_w = np.full(n, weights.lambda_w * scale)
    extras = regularizers_backward(pctx, reg, d_l_phi, d_l_w)

    pg = project_backward(pctx, rb["mean"], rb["cov"], *extras)
    alphas = pctx.alphas
    record = GradientRecord(
        u_r_lo=pg["u_r_lo"], u_r_hi=pg["u_r_hi"], theta_d=pg["theta_d"],
        log_s_d=pg["log_s_d"], log_s_f=pg["log_s_f"],
        opacity_logit=rb["alpha"] * alphas * (1.0 - alphas),
        color=rb["color"],
        screen_grad_norm=rb["mean2d_norm"],
    )
    record.check_finite()
    return record


def _decision_signature(pctx: ProjectionContext, sctx: ScreenContext,
                        reg: RegContext, diff_sign: np.ndarray) -> bytes:
    """Hash of every discrete decision the loss value depends on."""
    h = hashlib.blake2b(digest_size=16)
    h.update(pctx.frame.sgn.tobytes())                # right-axis orientation
    h.update(sctx.vis.tobytes())                      # depth order / culling
    h.update(sctx.last_pair.tobytes())                # compositing truncation
    h.update(sctx.n_contrib.tobytes())                # alpha_min skips
    h.update(sctx.n_clipped.tobytes())                # alpha clipping
    h.update(sctx.color_gate.tobytes())               # color clamping
    h.update(reg.inside.tobytes())                    # clamp trigger
    h.update(reg.argmin.astype(np.int8).tobytes())    # min tie selection
    h.update(reg.relu_active.tobytes())               # ReLU branch
    h.update(np.sign(reg.phi_w_raw).astype(np.int8).tobytes())  # |phi_w| kink
    h.update(diff_sign.tobytes())                     # L1 kink
    return h.digest()


def central_difference(f, x: np.ndarray, h: float = 1e-4) -> np.ndarray:
    """Plain central-difference gradient of a scalar function of an array."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.ravel()
    gflat = grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


@dataclass
class GradCheckReport:
    per_class: dict            # field -> dict(max, median, checked, excluded, passed)
    n_checked: int
    n_excluded: int
    n_passed: int
    max_rel_err: float
    elapsed: float

    @property
    def pass_fraction(self) -> float:
        return self.n_passed / self.n_checked if self.n_checked else 1.0

    def format(self) -> str:
        lines = [f"{'class':<14} {'checked':>8} {'excluded':>9} {'max rel':>12} {'median rel':>12}"]
        for name, s in self.per_class.items():
            lines.append(f"{name:<14} {s['checked']:>8} {s['excluded']:>9} "
                         f"{s['max']:>12.3e} {s['median']:>12.3e}")
        lines.append(f"total: {self.n_passed}/{self.n_checked} within tolerance, "
                     f"{self.n_excluded} kink-adjacent excluded, "
                     f"{self.elapsed:.1f}s")
        return "\n".join(lines)


def grad_check(gt: GaussianTexture, buffers: MeshBuffers, cam: Camera,
               truth_rgb: np.ndarray, weights: LossWeights | None = None,
               h: float = 1e-4, rel_tol: float = 1e-3,
               background=(0.0, 0.0, 0.0)) -> GradCheckReport:
    """Compare analytic gradients with central differences, coordinate-wise.

    Relative error is |analytic - fd| / max(|analytic|, |fd|, 1e-6).
    Coordinates whose +/-h forward passes disagree on any discrete
    decision are excluded (FD is invalid across those kinks).
    """
    weights = weights or LossWeights()
    t0 = time.perf_counter()
    base = evaluate_scene(gt, buffers, cam, truth_rgb, weights,
                          background=background, with_grad=True)

    def loss_and_sig() -> tuple:
        ev = evaluate_scene(gt, buffers, cam, truth_rgb, weights,
                            background=background, with_grad=False)
        return ev.loss, ev.signature

    per_class = {}
    n_checked = n_excluded = n_passed = 0
    max_rel = 0.0
    for name in PARAM_FIELDS:
        arr = getattr(gt, name)
        ana = getattr(base.record, name)
        errs = []
        excluded = 0
        flat = arr.reshape(-1)
        ana_flat = np.asarray(ana, dtype=np.float64).reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            lp, sig_p = loss_and_sig()
            flat[i] = orig - h
            lm, sig_m = loss_and_sig()
            flat[i] = orig
            if sig_p != sig_m:
                excluded += 1
                continue
            fd = (lp - lm) / (2.0 * h)
            rel = abs(ana_flat[i] - fd) / max(abs(ana_flat[i]), abs(fd), 1e-6)
            errs.append(rel)
        errs = np.asarray(errs) if errs else np.zeros(0)
        passed = int((errs < rel_tol).sum())
        per_class[name] = {
            "checked": errs.size,
            "excluded": excluded,
            "max": float(errs.max()) if errs.size else 0.0,
            "median": float(np.median(errs)) if errs.size else 0.0,
            "passed": passed,
        }
        n_checked += errs.size
        n_excluded += excluded
        n_passed += passed
        if errs.size:
            max_rel = max(max_rel, float(errs.max()))

    return GradCheckReport(per_class=per_class, n_checked=n_checked,
                           n_excluded=n_excluded, n_passed=n_passed,
                           max_rel_err=max_rel,
                           elapsed=time.perf_counter() - t0)


def _ensure_finite(arr: np.ndarray, node: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(node)
