"""Projection of texture-space Gaussians into renderable world Gaussians.

Pipeline per Gaussian: the six bounding points plus the center are mapped
texture -> barycentric -> world; the world covariance is assembled from
the three "upper" bounding-point offsets as shear columns,

    Sh = [v_r_hi - v_o | v_d_hi - v_o | v_f_hi - v_o],   Sigma = Sh Sh^T,

which absorbs the non-linearity of the surface map into a plain Gaussian.
Everything is vectorized over Gaussians and kept in float64; forward
functions return a context object with the intermediates the hand-written
backward needs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import ProxyMesh, tri_barycentric_matrices
from .texture import (FrameContext, GaussianTexture, TexGaussian, frame_backward,
                      frame_forward, sigmoid)

# point layout along axis 1 of the (N, 7, 3) stacks:
# 0 right_lo, 1 right_hi, 2 down_lo, 3 down_hi, 4 forward_lo, 5 forward_hi, 6 center
UPPER = (1, 3, 5)
CENTER = 6


@dataclass
class WorldGaussian:
    """A renderable world-space splat."""

    mean: np.ndarray    # (3,)
    cov: np.ndarray     # (3, 3) symmetric PSD
    alpha: float
    color: np.ndarray   # (3 * (sh_degree + 1)**2,)


class MeshBuffers:
    """Per-triangle arrays gathered once per mesh for the hot path."""

    def __init__(self, mesh: ProxyMesh):
        self.mesh = mesh
        self.tri_pos = mesh.positions[mesh.triangles]      # (T, 3, 3)
        self.tri_nrm = mesh.normals[mesh.triangles]        # (T, 3, 3)
        self.tri_omega = mesh.omega_vert[mesh.triangles]   # (T, 3)
        self.bary_mats = tri_barycentric_matrices(mesh)    # (T, 3, 3)


@dataclass
class ShellChainContext:
    """Intermediates of the texture-point -> world-point map."""

    points: np.ndarray   # (N, P, 3) texture points
    mats: np.ndarray     # (N, 3, 3) uv->phi affine maps
    verts: np.ndarray    # (N, 3, 3)
    norms: np.ndarray    # (N, 3, 3)
    omegas: np.ndarray   # (N, 3)
    phi: np.ndarray      # (N, P, 3)
    s_omega: np.ndarray  # (N, P) interpolated scaler
    phi_w: np.ndarray    # (N, P)
    n_bar: np.ndarray    # (N, P, 3) blended normal
    world: np.ndarray    # (N, P, 3)


def shell_chain_forward(points: np.ndarray, mats, verts, norms, omegas) -> ShellChainContext:
    """Map a (N, P, 3) stack of texture points to world space."""
    uv1 = np.concatenate([points[..., :2], np.ones(points.shape[:2] + (1,))], axis=-1)
    phi = np.einsum("nab,npb->npa", mats, uv1)
    s_omega = np.einsum("npa,na->np", phi, omegas)
    phi_w = points[..., 2] * s_omega
    n_bar = np.einsum("npa,nad->npd", phi, norms)
    pos = np.einsum("npa,nad->npd", phi, verts)
    world = pos + phi_w[..., None] * n_bar
    return ShellChainContext(points=points, mats=mats, verts=verts, norms=norms,
                             omegas=omegas, phi=phi, s_omega=s_omega, phi_w=phi_w,
                             n_bar=n_bar, world=world)


def shell_chain_backward(ctx: ShellChainContext, d_world: np.ndarray,
                         d_phi_extra=None, d_phi_w_extra=None) -> np.ndarray:
    """Adjoint of :func:`shell_chain_forward`; returns d(points) (N, P, 3).

    ``d_phi_extra``/``d_phi_w_extra`` inject gradients that land directly
    on the barycentric intermediates (the training regularizers do this).
    """
    d_phi_w = np.einsum("npd,npd->np", d_world, ctx.n_bar)
    if d_phi_w_extra is not None:
        d_phi_w = d_phi_w + d_phi_w_extra
    d_n_bar = ctx.phi_w[..., None] * d_world

    d_phi = np.einsum("npd,nad->npa", d_world, ctx.verts)
    d_phi += np.einsum("npd,nad->npa", d_n_bar, ctx.norms)
    d_s_omega = ctx.points[..., 2] * d_phi_w
    d_phi += np.einsum("np,na->npa", d_s_omega, ctx.omegas)
    if d_phi_extra is not None:
        d_phi = d_phi + d_phi_extra

    d_w = ctx.s_omega * d_phi_w
    d_uv1 = np.einsum("npa,nab->npb", d_phi, ctx.mats)
    d_points = np.empty_like(ctx.points)
    d_points[..., :2] = d_uv1[..., :2]
    d_points[..., 2] = d_w
    return d_points


@dataclass
class ProjectionContext:
    """Everything needed to re-project or backpropagate one snapshot."""

    frame: FrameContext
    chain: ShellChainContext
    means: np.ndarray    # (N, 3) world centers
    sh: np.ndarray       # (N, 3, 3) shear matrices (columns = axis offsets)
    covs: np.ndarray     # (N, 3, 3) symmetric
    alphas: np.ndarray   # (N,)
    colors: np.ndarray   # (N, C)


def project_forward(gt: GaussianTexture, buffers: MeshBuffers) -> ProjectionContext:
    """Project every Gaussian of ``gt`` through the shell map."""
    frame = frame_forward(gt)
    points = np.concatenate([frame.points, frame.u_o[:, None, :]], axis=1)  # (N, 7, 3)
    tri = gt.tri_id
    chain = shell_chain_forward(points, buffers.bary_mats[tri],
                                buffers.tri_pos[tri], buffers.tri_nrm[tri],
                                buffers.tri_omega[tri])
    means = chain.world[:, CENTER]
    sh = np.stack([chain.world[:, k] - means for k in UPPER], axis=-1)      # (N, 3, 3)
    covs = sh @ np.transpose(sh, (0, 2, 1))
    covs = 0.5 * (covs + np.transpose(covs, (0, 2, 1)))   # exact symmetry
    return ProjectionContext(frame=frame, chain=chain, means=means, sh=sh,
                             covs=covs, alphas=sigmoid(gt.opacity_logit),
                             colors=gt.color)


def project_backward(ctx: ProjectionContext, d_mean: np.ndarray, d_cov: np.ndarray,
                     d_phi_extra=None, d_phi_w_extra=None, d_world_extra=None,
                     d_points_extra=None):
    """Chain world-level gradients back to texture parameters.

    ``d_cov`` is (N, 3, 3); it need not be symmetric (it is symmetrized
    here, matching the symmetric forward).  The ``*_extra`` hooks inject
    regularizer gradients at the matching pipeline stage.  Returns a dict
    with gradients for u_r_lo, u_r_hi, theta_d, log_s_d, log_s_f.
    """
    d_cov_sym = d_cov + np.transpose(d_cov, (0, 2, 1))
    d_sh = d_cov_sym @ ctx.sh                                 # (N, 3, 3)

    n, p = ctx.chain.points.shape[:2]
    d_world = np.zeros((n, p, 3))
    if d_world_extra is not None:
        d_world += d_world_extra
    for col, k in enumerate(UPPER):
        d_world[:, k] += d_sh[:, :, col]
    d_world[:, CENTER] += d_mean - d_sh.sum(axis=2)

    d_points = shell_chain_backward(ctx.chain, d_world, d_phi_extra, d_phi_w_extra)
    if d_points_extra is not None:
        d_points = d_points + d_points_extra
    d_lo, d_hi, d_theta, d_lsd, d_lsf = frame_backward(ctx.frame, d_points[:, :6])
    d_lo += 0.5 * d_points[:, CENTER]
    d_hi += 0.5 * d_points[:, CENTER]
    return {
        "u_r_lo": d_lo,
        "u_r_hi": d_hi,
        "theta_d": d_theta,
        "log_s_d": d_lsd,
        "log_s_f": d_lsf,
    }


def world_gaussian(g: TexGaussian, mesh: ProxyMesh) -> WorldGaussian:
    """Project a single Gaussian (convenience wrapper over the batch path)."""
    ctx = project_forward(GaussianTexture.from_single(g), MeshBuffers(mesh))
    return WorldGaussian(mean=ctx.means[0], cov=ctx.covs[0],
                         alpha=float(ctx.alphas[0]), color=ctx.colors[0])
