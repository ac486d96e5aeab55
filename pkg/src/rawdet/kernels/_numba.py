"""JIT-compiled kernels. Loops visit pixels in raster order and perform the
same floating-point operations, in the same order, as ``_numpy``."""

import numpy as np
from numba import njit

NAME = "numba"


@njit(cache=True, nogil=True)
def mosaic(img, grid):
    h, w, _ = img.shape
    out = np.empty((h, w), dtype=np.float64)
    for y in range(h):
        for x in range(w):
            out[y, x] = img[y, x, grid[y & 1, x & 1]]
    return out


@njit(cache=True, nogil=True)
def demosaic(x, grid):
    h, w = x.shape
    out = np.empty((h, w, 3), dtype=np.float64)
    for y in range(h):
        ym = y - 1 if y > 0 else 1
        yp = y + 1 if y < h - 1 else h - 2
        for c0 in range(w):
            xm = c0 - 1 if c0 > 0 else 1
            xp = c0 + 1 if c0 < w - 1 else w - 2
            c = grid[y & 1, c0 & 1]
            out[y, c0, c] = x[y, c0]
            if c == 1:
                out[y, c0, grid[y & 1, 1 - (c0 & 1)]] = (x[y, xm] + x[y, xp]) * 0.5
                out[y, c0, grid[1 - (y & 1), c0 & 1]] = (x[ym, c0] + x[yp, c0]) * 0.5
            else:
                out[y, c0, 1] = (x[ym, c0] + x[yp, c0] + x[y, xm] + x[y, xp]) * 0.25
                out[y, c0, 2 - c] = (x[ym, xm] + x[ym, xp] + x[yp, xm] + x[yp, xp]) * 0.25
    return out


@njit(cache=True, nogil=True)
def add_noise(x, z, lambda_shot, lambda_read):
    out = np.empty_like(x)
    xf = x.ravel()
    zf = z.ravel()
    of = out.ravel()
    for i in range(xf.size):
        v = xf[i]
        o = v + np.sqrt(lambda_read + lambda_shot * v) * zf[i]
        if o < 0.0:
            o = 0.0
        elif o > 1.0:
            o = 1.0
        of[i] = o
    return out


@njit(cache=True, nogil=True)
def quantize(x, black, white):
    out = np.empty(x.shape, dtype=np.uint16)
    xf = x.ravel()
    of = out.ravel()
    span = white - black
    for i in range(xf.size):
        v = xf[i]
        if v < 0.0:
            v = 0.0
        elif v > 1.0:
            v = 1.0
        of[i] = np.uint16(np.rint(black + v * span))
    return out


@njit(cache=True, nogil=True)
def box_downsample(img, idx_y, w_y, idx_x, w_x):
    h, w, ch = img.shape
    th, ky = idx_y.shape
    tw, kx = idx_x.shape
    tmp = np.empty((h, tw, ch), dtype=np.float64)
    for y in range(h):
        for j in range(tw):
            for c in range(ch):
                ref = img[y, idx_x[j, 0], c]
                acc = 0.0
                for k in range(kx):
                    acc += w_x[j, k] * (img[y, idx_x[j, k], c] - ref)
                tmp[y, j, c] = ref + acc / w
    out = np.empty((th, tw, ch), dtype=np.float64)
    for i in range(th):
        for j in range(tw):
            for c in range(ch):
                ref = tmp[idx_y[i, 0], j, c]
                acc = 0.0
                for k in range(ky):
                    acc += w_y[i, k] * (tmp[idx_y[i, k], j, c] - ref)
                out[i, j, c] = ref + acc / h
    return out
