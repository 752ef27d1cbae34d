"""Posed-frame datasets in the synthetic transforms-JSON convention.

The JSON layout is the one shipped with the common synthetic NVS sets:
an object with ``camera_angle_x`` (horizontal FOV, radians) and a
``frames`` list of ``{"file_path", "transform_matrix"}`` entries, where
``transform_matrix`` is a row-major camera-to-world matrix for a camera
whose axes are x-right / y-up / z-back.  Loading converts each pose into
this package's x-right / y-down / z-forward world-to-camera convention.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .imgio import read_png
from .render import Camera

# flips camera y (up -> down) and z (back -> forward)
_GL_TO_CV = np.diag([1.0, -1.0, -1.0, 1.0])


@dataclass
class FrameSet:
    """Cameras with their ground-truth images (RGBA or RGB, float [0,1])."""

    cameras: list
    images: list
    image_paths: list

    def __len__(self) -> int:
        return len(self.cameras)


def camera_from_transform(transform_c2w, camera_angle_x: float,
                          width: int, height: int, near: float = 0.01,
                          far: float = 1000.0) -> Camera:
    """Camera from a y-up/z-back camera-to-world matrix (row-major)."""
    c2w = np.asarray(transform_c2w, dtype=np.float64).reshape(4, 4)
    c2w = c2w @ _GL_TO_CV
    r = c2w[:3, :3]
    t = c2w[:3, 3]
    w2c = np.eye(4)
    w2c[:3, :3] = r.T
    w2c[:3, 3] = -r.T @ t
    fx = 0.5 * width / np.tan(0.5 * camera_angle_x)
    return Camera(width=width, height=height, fx=fx, fy=fx,
                  cx=width / 2.0, cy=height / 2.0,
                  world_to_camera=w2c, near=near, far=far)


def load_frameset(json_path) -> FrameSet:
    """Load a transforms JSON plus its ground-truth images."""
    json_path = Path(json_path)
    with open(json_path, "r", encoding="utf-8") as fh:
        spec = json.load(fh)
    if "camera_angle_x" not in spec or "frames" not in spec:
        raise ValueError(f"{json_path}: missing camera_angle_x or frames")
    angle = float(spec["camera_angle_x"])

    cameras, images, paths = [], [], []
    for entry in spec["frames"]:
        rel = entry["file_path"]
        img_path = json_path.parent / rel
        if img_path.suffix == "":
            img_path = img_path.with_suffix(".png")
        image = read_png(img_path)
        h, w = image.shape[:2]
        cameras.append(camera_from_transform(entry["transform_matrix"], angle, w, h))
        images.append(image)
        paths.append(str(img_path))
    if not cameras:
        raise ValueError(f"{json_path}: no frames")
    return FrameSet(cameras=cameras, images=images, image_paths=paths)


def save_frameset(json_path, cameras, camera_angle_x: float,
                  file_paths: list) -> None:
    """Write a transforms JSON for cameras (the loader's inverse)."""
    frames = []
    for cam, rel in zip(cameras, file_paths):
        w2c = cam.world_to_camera
        c2w = np.eye(4)
        c2w[:3, :3] = w2c[:3, :3].T
        c2w[:3, 3] = -w2c[:3, :3].T @ w2c[:3, 3]
        c2w = c2w @ _GL_TO_CV      # back to y-up/z-back
        frames.append({"file_path": rel, "transform_matrix": c2w.tolist()})
    payload = {"camera_angle_x": camera_angle_x, "frames": frames}
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1)
