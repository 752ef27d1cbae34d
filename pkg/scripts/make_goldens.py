#!/usr/bin/env python3
"""Regenerate the committed golden images used by the test suite.

The quad golden is the render of a 200-iteration seed-0 training run on
the deterministic quad scene, from the scene's first camera.  Rerun this
only when an intentional change to the pipeline shifts the output; the
test compares at 1e-3 RMS.
"""

import json
import sys
import tempfile
from pathlib import Path

import numpy as np

REPO = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "src"))

from uvsplat.cli import main  # noqa: E402
from uvsplat.fixtures import orbit_cameras, quad_mesh, reference_texture, write_scene  # noqa: E402


def run() -> None:
    golden_dir = REPO / "tests" / "golden"
    golden_dir.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        mesh = quad_mesh()
        cams = orbit_cameras(4, radius=4.0, width=64, height=64)
        mesh_path, frames_path = write_scene(tmp, mesh, reference_texture(mesh), cams)

        cam_spec = {
            "width": cams[0].width, "height": cams[0].height,
            "fx": cams[0].fx, "fy": cams[0].fy, "cx": cams[0].cx, "cy": cams[0].cy,
            "world_to_camera": np.asarray(cams[0].world_to_camera).reshape(-1).tolist(),
            "near": cams[0].near, "far": cams[0].far,
        }
        cam_path = tmp / "cam.json"
        cam_path.write_text(json.dumps(cam_spec))

        model = tmp / "model.3dgt"
        assert main(["--threads", "2", "train", str(mesh_path), str(frames_path),
                     "-o", str(model), "--iterations", "200", "--seed", "0"]) == 0
        out = golden_dir / "quad_render.png"
        assert main(["render", str(model), str(mesh_path),
                     "--camera", str(cam_path), "-o", str(out)]) == 0
        print(f"wrote {out}")


if __name__ == "__main__":
    run()
