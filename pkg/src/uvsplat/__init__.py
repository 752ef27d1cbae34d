"""Gaussian textures on UV-mapped proxy meshes.

A splat scene is authored as a volumetric texture: each 3D Gaussian lives
in the UV(+w) space of a coarse proxy mesh and is projected to world
space through an implicit shell map (barycentric interpolation of vertex
positions plus scaled normal offsets).  The projected splats render
through a deterministic differentiable CPU rasterizer; deforming the
proxy re-poses the whole texture, and rebinding the texture onto another
mesh sharing the atlas transfers its surface appearance.
"""

from .animation import (LatticeDeformer, MeshSequence, SineDeformer, apply_deformer,
                        render_animation)
from .dataset import FrameSet, load_frameset
from .gradients import GradientRecord, LossWeights, evaluate_scene, grad_check
from .losses import barycentric_reg, extrusion_reg, photometric_loss
from .mesh import (MeshError, ObjParseError, ProxyMesh, build_mesh,
                   compute_vertex_normals, compute_w_scalers, load_proxy_mesh,
                   locate_uv)
from .metrics import iou, psnr, ssim
from .projection import MeshBuffers, WorldGaussian, project_forward, world_gaussian
from .render import Camera, RasterConfig, render, render_arrays, set_threads
from .texture import (GaussianTexture, TexGaussian, TextureConfig,
                      derive_bounding_points, densify, init_gaussians, load, prune,
                      rebind, save)
from .training import TrainConfig, total_loss, train

__version__ = "0.1.0"
