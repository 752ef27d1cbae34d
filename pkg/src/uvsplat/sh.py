"""Real spherical harmonics basis up to degree 3, with direction gradients.

Convention matches the usual splatting stacks: view-dependent color is
``sum_k coeff_k * Y_k(dir) + 0.5`` evaluated per Gaussian along the unit
direction from the camera center to the Gaussian mean.  Degree 0 colors
bypass this module entirely (the stored triple is the color).
"""

from __future__ import annotations

import numpy as np

C0 = 0.28209479177387814
C1 = 0.4886025119029199
C2 = (1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
      -1.0925484305920792, 0.5462742152960396)
C3 = (-0.5900435899266435, 2.890611442640554, -0.4570457994644658,
      0.3731763325901154, -0.4570457994644658, 1.445305721320277,
      -0.5900435899266435)


def num_bases(degree: int) -> int:
    return (degree + 1) ** 2


def sh_basis(dirs: np.ndarray, degree: int):
    """Basis values and their x/y/z derivatives at unit ``dirs`` (N, 3).

    Returns ``(basis (N, B), dbasis (N, B, 3))``.
    """
    n = dirs.shape[0]
    b = num_bases(degree)
    basis = np.zeros((n, b))
    dbasis = np.zeros((n, b, 3))
    x, y, z = dirs[:, 0], dirs[:, 1], dirs[:, 2]

    basis[:, 0] = C0
    if degree >= 1:
        basis[:, 1] = -C1 * y
        basis[:, 2] = C1 * z
        basis[:, 3] = -C1 * x
        dbasis[:, 1, 1] = -C1
        dbasis[:, 2, 2] = C1
        dbasis[:, 3, 0] = -C1
    if degree >= 2:
        xx, yy, zz = x * x, y * y, z * z
        basis[:, 4] = C2[0] * x * y
        basis[:, 5] = C2[1] * y * z
        basis[:, 6] = C2[2] * (2.0 * zz - xx - yy)
        basis[:, 7] = C2[3] * x * z
        basis[:, 8] = C2[4] * (xx - yy)
        dbasis[:, 4, 0] = C2[0] * y
        dbasis[:, 4, 1] = C2[0] * x
        dbasis[:, 5, 1] = C2[1] * z
        dbasis[:, 5, 2] = C2[1] * y
        dbasis[:, 6, 0] = C2[2] * -2.0 * x
        dbasis[:, 6, 1] = C2[2] * -2.0 * y
        dbasis[:, 6, 2] = C2[2] * 4.0 * z
        dbasis[:, 7, 0] = C2[3] * z
        dbasis[:, 7, 2] = C2[3] * x
        dbasis[:, 8, 0] = C2[4] * 2.0 * x
        dbasis[:, 8, 1] = C2[4] * -2.0 * y
    if degree >= 3:
        xx, yy, zz = x * x, y * y, z * z
        basis[:, 9] = C3[0] * y * (3.0 * xx - yy)
        basis[:, 10] = C3[1] * x * y * z
        basis[:, 11] = C3[2] * y * (4.0 * zz - xx - yy)
        basis[:, 12] = C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy)
        basis[:, 13] = C3[4] * x * (4.0 * zz - xx - yy)
        basis[:, 14] = C3[5] * z * (xx - yy)
        basis[:, 15] = C3[6] * x * (xx - 3.0 * yy)
        dbasis[:, 9, 0] = C3[0] * 6.0 * x * y
        dbasis[:, 9, 1] = C3[0] * (3.0 * xx - 3.0 * yy)
        dbasis[:, 10, 0] = C3[1] * y * z
        dbasis[:, 10, 1] = C3[1] * x * z
        dbasis[:, 10, 2] = C3[1] * x * y
        dbasis[:, 11, 0] = C3[2] * -2.0 * x * y
        dbasis[:, 11, 1] = C3[2] * (4.0 * zz - xx - 3.0 * yy)
        dbasis[:, 11, 2] = C3[2] * 8.0 * y * z
        dbasis[:, 12, 0] = C3[3] * -6.0 * x * z
        dbasis[:, 12, 1] = C3[3] * -6.0 * y * z
        dbasis[:, 12, 2] = C3[3] * (6.0 * zz - 3.0 * xx - 3.0 * yy)
        dbasis[:, 13, 0] = C3[4] * (4.0 * zz - 3.0 * xx - yy)
        dbasis[:, 13, 1] = C3[4] * -2.0 * x * y
        dbasis[:, 13, 2] = C3[4] * 8.0 * x * z
        dbasis[:, 14, 0] = C3[5] * 2.0 * x * z
        dbasis[:, 14, 1] = C3[5] * -2.0 * y * z
        dbasis[:, 14, 2] = C3[5] * (xx - yy)
        dbasis[:, 15, 0] = C3[6] * (3.0 * xx - 3.0 * yy)
        dbasis[:, 15, 1] = C3[6] * -6.0 * x * y
    return basis, dbasis


def eval_sh(coeffs: np.ndarray, dirs: np.ndarray, degree: int):
    """Raw (unclamped, pre-offset) RGB from SH coefficients.

    ``coeffs`` is (N, 3 * B) laid out channel-major per basis:
    (r0, g0, b0, r1, g1, b1, ...).  Returns ``(rgb (N, 3), basis, dbasis)``.
    """
    basis, dbasis = sh_basis(dirs, degree)
    c = coeffs.reshape(coeffs.shape[0], -1, 3)        # (N, B, 3)
    rgb = np.einsum("nb,nbc->nc", basis, c) + 0.5
    return rgb, basis, dbasis


def eval_sh_backward(coeffs, basis, dbasis, d_rgb):
    """Gradients of :func:`eval_sh` w.r.t. coefficients and direction."""
    n = coeffs.shape[0]
    d_coeffs = np.einsum("nb,nc->nbc", basis, d_rgb).reshape(n, -1)
    c = coeffs.reshape(n, -1, 3)
    d_dirs = np.einsum("nbd,nbc,nc->nd", dbasis, c, d_rgb)
    return d_coeffs, d_dirs
