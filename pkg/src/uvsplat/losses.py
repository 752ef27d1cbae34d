"""Training losses and their hand-written gradients.

The photometric term is the usual L1 / D-SSIM blend.  The two geometric
regularizers act on the six bounding points of every Gaussian:

* containment: each point's barycentric triple is clamped back onto its
  triangle and both variants are projected to world space; the squared
  world distance between them, less a small allowance ``eps_phi``, is
  penalized through a ReLU (so a point may poke slightly outside for
  free).
* extrusion: the plain sum of |phi_w| over the points, pulling Gaussians
  toward the surface.

Subgradient conventions are fixed and deterministic: ReLU'(0) = 0,
d|x|/dx = 0 at x = 0, and min() ties select the smallest index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .metrics import ssim_with_grad
from .projection import ProjectionContext
from .shell import clamp_barycentric_many


def photometric_loss(rendered_rgb, truth_rgb, lambda_l1: float) -> float:
    """lambda * L1 + (1 - lambda) * (1 - SSIM) / 2 over RGB in [0, 1]."""
    value, _, _ = photometric_with_grad(rendered_rgb, truth_rgb, lambda_l1)
    return value


def photometric_with_grad(rendered_rgb, truth_rgb, lambda_l1: float):
    """Returns (loss, d_loss/d_rendered, parts dict)."""
    x = np.asarray(rendered_rgb, dtype=np.float64)
    y = np.asarray(truth_rgb, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    diff = x - y
    l1 = float(np.abs(diff).mean())
    d_l1 = np.sign(diff) / diff.size

    ssim_val, d_ssim = ssim_with_grad(x, y)
    dssim = (1.0 - ssim_val) / 2.0

    loss = lambda_l1 * l1 + (1.0 - lambda_l1) * dssim
    grad = lambda_l1 * d_l1 + (1.0 - lambda_l1) * (-0.5) * d_ssim
    return loss, grad, {"l1": l1, "dssim": dssim, "ssim": ssim_val}


@dataclass
class RegContext:
    """Saved state of the regularizer forward pass."""

    l_phi: np.ndarray       # (N,) per-Gaussian containment values
    l_w: np.ndarray         # (N,) per-Gaussian extrusion values
    phi: np.ndarray         # (N, 6, 3)
    phi_hat: np.ndarray     # (N, 6, 3)
    argmin: np.ndarray      # (N, 6) index of the smallest component
    t: np.ndarray           # (N, 6) clamp interpolation factor (1 when inside)
    inside: np.ndarray      # (N, 6) bool
    s_omega_hat: np.ndarray  # (N, 6)
    phi_w_hat: np.ndarray   # (N, 6)
    n_bar_hat: np.ndarray   # (N, 6, 3)
    dev: np.ndarray         # (N, 6, 3) world deviation (clamped - raw)
    relu_active: np.ndarray  # (N, 6) bool
    phi_w_raw: np.ndarray   # (N, 6) main-chain phi_w (the |.| kink inputs)
    eps_phi: float


def regularizers_forward(ctx: ProjectionContext, eps_phi: float) -> RegContext:
    """Per-Gaussian containment and extrusion penalties.

    Reuses the projection context: ``ctx.chain`` already holds the raw
    barycentric triples and world positions of the six bounding points.
    """
    chain = ctx.chain
    phi = chain.phi[:, :6]
    u_w = chain.points[:, :6, 2]
    inside = phi.min(axis=2) >= 0.0
    argmin = phi.argmin(axis=2)
    m = np.take_along_axis(phi, argmin[..., None], axis=2)[..., 0]
    with np.errstate(divide="ignore"):
        t = np.where(inside, 1.0, 1.0 / (1.0 - 3.0 * m))
    phi_hat = clamp_barycentric_many(phi)

    s_omega_hat = np.einsum("npa,na->np", phi_hat, chain.omegas)
    phi_w_hat = u_w * s_omega_hat
    n_bar_hat = np.einsum("npa,nad->npd", phi_hat, chain.norms)
    world_hat = (np.einsum("npa,nad->npd", phi_hat, chain.verts)
                 + phi_w_hat[..., None] * n_bar_hat)

    dev = world_hat - chain.world[:, :6]
    dev_sq = (dev ** 2).sum(axis=2)
    overshoot = dev_sq - eps_phi
    relu_active = overshoot > 0.0
    l_phi = np.where(relu_active, overshoot, 0.0).mean(axis=1)

    phi_w = chain.phi_w[:, :6]
    l_w = np.abs(phi_w).sum(axis=1)

    return RegContext(l_phi=l_phi, l_w=l_w, phi=phi, phi_hat=phi_hat,
                      argmin=argmin, t=t, inside=inside,
                      s_omega_hat=s_omega_hat, phi_w_hat=phi_w_hat,
                      n_bar_hat=n_bar_hat, dev=dev, relu_active=relu_active,
                      phi_w_raw=phi_w, eps_phi=eps_phi)


def regularizers_backward(ctx: ProjectionContext, reg: RegContext,
                          d_l_phi: np.ndarray, d_l_w: np.ndarray):
    """Adjoint of :func:`regularizers_forward`.

    ``d_l_phi`` / ``d_l_w`` are (N,) upstream gradients.  Returns the
    extras consumed by :func:`uvsplat.projection.project_backward`:
    (d_phi_extra, d_phi_w_extra, d_world_extra, d_points_extra), all over
    the full 7-point stack.
    """
    chain = ctx.chain
    n, p = chain.points.shape[:2]
    d_phi_extra = np.zeros((n, p, 3))
    d_phi_w_extra = np.zeros((n, p))
    d_world_extra = np.zeros((n, p, 3))
    d_points_extra = np.zeros((n, p, 3))

    # extrusion: d|phi_w| with sign(0) = 0
    d_phi_w_extra[:, :6] = d_l_w[:, None] * np.sign(chain.phi_w[:, :6])

    # containment
    scale = (d_l_phi[:, None] / 6.0) * reg.relu_active
    d_dev = 2.0 * scale[..., None] * reg.dev          # (N, 6, 3)
    d_world_extra[:, :6] -= d_dev

    # clamped-branch world point: world_hat(phi_hat, u_w)
    d_phi_w_hat = np.einsum("npd,npd->np", d_dev, reg.n_bar_hat)
    d_n_bar_hat = reg.phi_w_hat[..., None] * d_dev
    d_phi_hat = np.einsum("npd,nad->npa", d_dev, chain.verts[:, :, :])
    d_phi_hat += np.einsum("npd,nad->npa", d_n_bar_hat, chain.norms)
    u_w = chain.points[:, :6, 2]
    d_s_omega_hat = u_w * d_phi_w_hat
    d_phi_hat += np.einsum("np,na->npa", d_s_omega_hat, chain.omegas)
    d_points_extra[:, :6, 2] = reg.s_omega_hat * d_phi_w_hat

    # phi_hat = (1 - t)/3 + t * phi  with  t = 1/(1 - 3 min(phi))
    # inside: identity.  outside: d_phi = t * d_phi_hat on all components,
    # plus the argmin component picks up the dt path.
    t = reg.t
    d_phi = np.where(reg.inside[..., None], d_phi_hat, t[..., None] * d_phi_hat)
    proj = np.einsum("npa,npa->np", d_phi_hat, reg.phi - 1.0 / 3.0)
    dt = 3.0 * t * t * proj
    takeover = np.zeros_like(d_phi)
    np.put_along_axis(takeover, reg.argmin[..., None],
                      np.where(reg.inside, 0.0, dt)[..., None], axis=2)
    d_phi += takeover
    d_phi_extra[:, :6] = d_phi

    return d_phi_extra, d_phi_w_extra, d_world_extra, d_points_extra


def barycentric_reg(g, mesh, eps_phi: float = 0.01) -> float:
    """Containment penalty of a single Gaussian (reference entry point)."""
    from .projection import MeshBuffers, project_forward
    from .texture import GaussianTexture
    ctx = project_forward(GaussianTexture.from_single(g), MeshBuffers(mesh))
    return float(regularizers_forward(ctx, eps_phi=eps_phi).l_phi[0])


def extrusion_reg(g, mesh) -> float:
    """Extrusion penalty of a single Gaussian (reference entry point)."""
    from .projection import MeshBuffers, project_forward
    from .texture import GaussianTexture
    ctx = project_forward(GaussianTexture.from_single(g), MeshBuffers(mesh))
    return float(regularizers_forward(ctx, eps_phi=0.01).l_w[0])
