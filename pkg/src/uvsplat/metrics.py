"""Image fidelity and shape-retention metrics.

PSNR and SSIM operate on RGB values in [0, 1]; IoU compares binarized
alpha masks and is what catches silhouette drift under animation.  SSIM
uses the standard 11x11 Gaussian window (sigma 1.5) applied separably
with zero padding, so borders are included; identical images score
exactly 1 regardless.
"""

from __future__ import annotations

import numpy as np
from scipy.ndimage import correlate1d

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2
PSNR_CAP = 100.0


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """10 log10(1 / MSE) over RGB, capped at 100 dB for identical inputs."""
    a, b = _check_pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse < 1e-10:
        return PSNR_CAP
    return min(10.0 * np.log10(1.0 / mse), PSNR_CAP)


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean structural similarity, channel-averaged."""
    a, b = _check_pair(a, b)
    return float(np.mean(ssim_map(a, b)))


def iou(a_alpha: np.ndarray, b_alpha: np.ndarray, threshold: float = 0.5) -> float:
    """Intersection over union of alpha masks binarized at ``threshold``."""
    a_alpha = np.asarray(a_alpha, dtype=np.float64)
    b_alpha = np.asarray(b_alpha, dtype=np.float64)
    if a_alpha.shape != b_alpha.shape:
        raise ValueError(f"shape mismatch: {a_alpha.shape} vs {b_alpha.shape}")
    ma = a_alpha >= threshold
    mb = b_alpha >= threshold
    union = np.logical_or(ma, mb).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(ma, mb).sum() / union)


def ssim_window() -> np.ndarray:
    x = np.arange(SSIM_WINDOW) - (SSIM_WINDOW - 1) / 2.0
    w = np.exp(-(x ** 2) / (2.0 * SSIM_SIGMA ** 2))
    return w / w.sum()


def blur(img: np.ndarray) -> np.ndarray:
    """Separable windowed mean over the two leading (spatial) axes."""
    w = ssim_window()
    out = correlate1d(img, w, axis=0, mode="constant")
    return correlate1d(out, w, axis=1, mode="constant")


def ssim_map(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Per-pixel, per-channel SSIM values."""
    s = _ssim_parts(a, b)
    return (s["a1"] * s["a2"]) / (s["b1"] * s["b2"])


def _ssim_parts(x: np.ndarray, y: np.ndarray) -> dict:
    mu_x = blur(x)
    mu_y = blur(y)
    sxx = blur(x * x) - mu_x ** 2
    syy = blur(y * y) - mu_y ** 2
    sxy = blur(x * y) - mu_x * mu_y
    return {
        "mu_x": mu_x, "mu_y": mu_y, "sxx": sxx, "syy": syy, "sxy": sxy,
        "a1": 2.0 * mu_x * mu_y + SSIM_C1,
        "a2": 2.0 * sxy + SSIM_C2,
        "b1": mu_x ** 2 + mu_y ** 2 + SSIM_C1,
        "b2": sxx + syy + SSIM_C2,
    }


def ssim_with_grad(x: np.ndarray, y: np.ndarray):
    """SSIM plus its gradient w.r.t. the first image.

    The windowed means are linear maps with a symmetric kernel and zero
    padding, so each adjoint is the same blur again.
    """
    x, y = _check_pair(x, y)
    s = _ssim_parts(x, y)
    val_map = (s["a1"] * s["a2"]) / (s["b1"] * s["b2"])
    n = val_map.size
    inv = 1.0 / (s["b1"] * s["b2"] * n)
    g_a1 = s["a2"] * inv
    g_a2 = s["a1"] * inv
    g_b1 = -val_map / s["b1"] / n
    g_b2 = -val_map / s["b2"] / n

    g_sxy = 2.0 * g_a2
    g_sxx = g_b2
    g_mu_x = (2.0 * s["mu_y"] * g_a1 + 2.0 * s["mu_x"] * g_b1
              - 2.0 * s["mu_x"] * g_sxx - s["mu_y"] * g_sxy)

    grad = blur(g_mu_x) + 2.0 * x * blur(g_sxx) + y * blur(g_sxy)
    return float(val_map.mean()), grad


def _check_pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b
