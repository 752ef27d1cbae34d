"""PNG image I/O with fixed, reproducible quantization.

Float images in [0, 1] are written as 8-bit RGBA with
``round(255 * clamp(v, 0, 1))``; the PNG encoder settings are fixed so
identical pixel data yields byte-identical files.
"""

from __future__ import annotations

import numpy as np
from PIL import Image


def write_png(path, image: np.ndarray) -> None:
    """Write (H, W, 3|4) float [0,1] or uint8 data as RGBA PNG."""
    image = np.asarray(image)
    if image.dtype != np.uint8:
        image = np.round(255.0 * np.clip(image, 0.0, 1.0)).astype(np.uint8)
    if image.ndim != 3 or image.shape[2] not in (3, 4):
        raise ValueError("expected (H, W, 3|4) image")
    if image.shape[2] == 3:
        image = np.concatenate([image, np.full(image.shape[:2] + (1,), 255, np.uint8)], axis=2)
    Image.fromarray(image, mode="RGBA").save(path, format="PNG", optimize=False)


def read_png(path) -> np.ndarray:
    """Read a PNG as float64 (H, W, 4) RGBA in [0, 1]."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGBA"), dtype=np.float64)
    return arr / 255.0
