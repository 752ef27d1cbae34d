"""Numba kernels for the tile rasterizer.

Layout: the screen is cut into square tiles; each (tile, Gaussian)
overlap is a "pair".  Pairs are grouped per tile and ordered by the
single global depth sort, so every pixel composites the same front-to-
back sequence no matter how tiles are scheduled.  Parallel loops write
only per-tile state (pixels of the tile, pair slots of the tile), which
is what makes the output bit-identical for any worker count.

All arrays are float64; ``pair_grads`` rows are
(d_mean2d_x, d_mean2d_y, d_conic_a, d_conic_b, d_conic_c, d_alpha,
 d_color_r, d_color_g, d_color_b).
"""

import numpy as np
from numba import njit, prange


@njit(cache=True)
def tile_rects(mean2d, radius, tile, tiles_x, tiles_y):
    """Clipped tile index rectangles (inclusive) per Gaussian; -1 = empty."""
    n = mean2d.shape[0]
    rects = np.empty((n, 4), dtype=np.int64)
    for i in range(n):
        r = radius[i]
        tx0 = int(np.floor((mean2d[i, 0] - r) / tile))
        tx1 = int(np.floor((mean2d[i, 0] + r) / tile))
        ty0 = int(np.floor((mean2d[i, 1] - r) / tile))
        ty1 = int(np.floor((mean2d[i, 1] + r) / tile))
        tx0 = max(tx0, 0)
        ty0 = max(ty0, 0)
        tx1 = min(tx1, tiles_x - 1)
        ty1 = min(ty1, tiles_y - 1)
        if tx1 < tx0 or ty1 < ty0:
            rects[i] = (-1, -1, -1, -1)
        else:
            rects[i] = (tx0, tx1, ty0, ty1)
    return rects


@njit(cache=True)
def build_pairs(rects, tiles_x, n_tiles):
    """Per-tile pair lists; Gaussians visited in (depth-sorted) input order."""
    n = rects.shape[0]
    counts = np.zeros(n_tiles + 1, dtype=np.int64)
    for i in range(n):
        tx0, tx1, ty0, ty1 = rects[i]
        if tx0 < 0:
            continue
        for ty in range(ty0, ty1 + 1):
            for tx in range(tx0, tx1 + 1):
                counts[ty * tiles_x + tx + 1] += 1
    tile_start = np.cumsum(counts)
    cursor = tile_start[:-1].copy()
    pair_gauss = np.empty(tile_start[-1], dtype=np.int64)
    for i in range(n):
        tx0, tx1, ty0, ty1 = rects[i]
        if tx0 < 0:
            continue
        for ty in range(ty0, ty1 + 1):
            for tx in range(tx0, tx1 + 1):
                t = ty * tiles_x + tx
                pair_gauss[cursor[t]] = i
                cursor[t] += 1
    return pair_gauss, tile_start


@njit(cache=True, parallel=True)
def rasterize_forward(width, height, tile, tile_start, pair_gauss,
                      mean2d, conic, alpha, color, background,
                      alpha_clip, alpha_min, t_min,
                      image, final_t, last_pair, n_contrib, n_clipped):
    tiles_x = (width + tile - 1) // tile
    n_tiles = tile_start.shape[0] - 1
    for tid in prange(n_tiles):
        ty = tid // tiles_x
        tx = tid % tiles_x
        x0 = tx * tile
        y0 = ty * tile
        x1 = min(x0 + tile, width)
        y1 = min(y0 + tile, height)
        start = tile_start[tid]
        end = tile_start[tid + 1]
        for py in range(y0, y1):
            for px in range(x0, x1):
                t_run = 1.0
                cr = 0.0
                cg = 0.0
                cb = 0.0
                last = np.int64(-1)
                contrib = np.int64(0)
                clipped = np.int64(0)
                for p in range(start, end):
                    gi = pair_gauss[p]
                    dx = px - mean2d[gi, 0]
                    dy = py - mean2d[gi, 1]
                    power = (-0.5 * (conic[gi, 0] * dx * dx + conic[gi, 2] * dy * dy)
                             - conic[gi, 1] * dx * dy)
                    a = alpha[gi] * np.exp(power)
                    if a > alpha_clip:
                        a = alpha_clip
                        clipped += 1
                    if a < alpha_min:
                        continue
                    test_t = t_run * (1.0 - a)
                    if test_t < t_min:
                        break
                    cr += color[gi, 0] * a * t_run
                    cg += color[gi, 1] * a * t_run
                    cb += color[gi, 2] * a * t_run
                    t_run = test_t
                    last = p
                    contrib += 1
                image[py, px, 0] = cr + t_run * background[0]
                image[py, px, 1] = cg + t_run * background[1]
                image[py, px, 2] = cb + t_run * background[2]
                image[py, px, 3] = 1.0 - t_run
                final_t[py, px] = t_run
                last_pair[py, px] = last
                n_contrib[py, px] = contrib
                n_clipped[py, px] = clipped


@njit(cache=True, parallel=True)
def rasterize_backward(width, height, tile, tile_start, pair_gauss,
                       mean2d, conic, alpha, color, background,
                       alpha_clip, alpha_min,
                       d_image, final_t, last_pair, pair_grads):
    tiles_x = (width + tile - 1) // tile
    n_tiles = tile_start.shape[0] - 1
    for tid in prange(n_tiles):
        ty = tid // tiles_x
        tx = tid % tiles_x
        x0 = tx * tile
        y0 = ty * tile
        x1 = min(x0 + tile, width)
        y1 = min(y0 + tile, height)
        start = tile_start[tid]
        for py in range(y0, y1):
            for px in range(x0, x1):
                last = last_pair[py, px]
                if last < start:
                    continue
                dl_r = d_image[py, px, 0]
                dl_g = d_image[py, px, 1]
                dl_b = d_image[py, px, 2]
                dl_a = d_image[py, px, 3]
                t_fin = final_t[py, px]
                # suffix sums S_ch = sum_{j>i} c_j a_j T_j + bg_ch * T_fin
                s_r = background[0] * t_fin
                s_g = background[1] * t_fin
                s_b = background[2] * t_fin
                t_run = t_fin
                for p in range(last, start - 1, -1):
                    gi = pair_gauss[p]
                    dx = px - mean2d[gi, 0]
                    dy = py - mean2d[gi, 1]
                    power = (-0.5 * (conic[gi, 0] * dx * dx + conic[gi, 2] * dy * dy)
                             - conic[gi, 1] * dx * dy)
                    a_raw = alpha[gi] * np.exp(power)
                    clipped = a_raw > alpha_clip
                    a = alpha_clip if clipped else a_raw
                    if a < alpha_min:
                        continue
                    one_minus = 1.0 - a
                    t_run = t_run / one_minus      # T_i before this splat
                    # color gradient
                    w = a * t_run
                    pair_grads[p, 6] += w * dl_r
                    pair_grads[p, 7] += w * dl_g
                    pair_grads[p, 8] += w * dl_b
                    # alpha' gradient: direct term minus occlusion of everything behind
                    d_a = (dl_r * (color[gi, 0] * t_run - s_r / one_minus)
                           + dl_g * (color[gi, 1] * t_run - s_g / one_minus)
                           + dl_b * (color[gi, 2] * t_run - s_b / one_minus)
                           + dl_a * (t_fin / one_minus))
                    s_r += color[gi, 0] * w
                    s_g += color[gi, 1] * w
                    s_b += color[gi, 2] * w
                    if clipped:
                        continue
                    # a = alpha_g * exp(power)
                    d_power = a * d_a
                    pair_grads[p, 5] += np.exp(power) * d_a
                    # power in (mean2d, conic)
                    pair_grads[p, 0] += d_power * (conic[gi, 0] * dx + conic[gi, 1] * dy)
                    pair_grads[p, 1] += d_power * (conic[gi, 1] * dx + conic[gi, 2] * dy)
                    pair_grads[p, 2] += d_power * (-0.5 * dx * dx)
                    pair_grads[p, 3] += d_power * (-dx * dy)
                    pair_grads[p, 4] += d_power * (-0.5 * dy * dy)


@njit(cache=True)
def reduce_pair_grads(pair_gauss, pair_grads, n_gaussians):
    """Fixed-order (pair index) reduction of pair gradients per Gaussian."""
    out = np.zeros((n_gaussians, 9))
    for p in range(pair_gauss.shape[0]):
        gi = pair_gauss[p]
        for k in range(9):
            out[gi, k] += pair_grads[p, k]
    return out
