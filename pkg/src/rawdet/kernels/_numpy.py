"""Vectorised reference kernels; evaluation order mirrors ``_numba``."""

import numpy as np

NAME = "numpy"


def mosaic(img, grid):
    h, w, _ = img.shape
    out = np.empty((h, w), dtype=np.float64)
    for py in range(2):
        for px in range(2):
            out[py::2, px::2] = img[py::2, px::2, grid[py, px]]
    return out


def demosaic(x, grid):
    h, w = x.shape
    p = np.pad(x, 1, mode="reflect")
    up, down = p[:-2, 1:-1], p[2:, 1:-1]
    left, right = p[1:-1, :-2], p[1:-1, 2:]
    cross = (up + down + left + right) * 0.25
    diag = (p[:-2, :-2] + p[:-2, 2:] + p[2:, :-2] + p[2:, 2:]) * 0.25
    horiz = (left + right) * 0.5
    vert = (up + down) * 0.5
    out = np.empty((h, w, 3), dtype=np.float64)
    for py in range(2):
        for px in range(2):
            sl = (slice(py, None, 2), slice(px, None, 2))
            c = grid[py, px]
            out[sl + (c,)] = x[sl]
            if c == 1:
                out[sl + (grid[py, 1 - px],)] = horiz[sl]
                out[sl + (grid[1 - py, px],)] = vert[sl]
            else:
                out[sl + (1,)] = cross[sl]
                out[sl + (2 - c,)] = diag[sl]
    return out


def add_noise(x, z, lambda_shot, lambda_read):
    sd = np.sqrt(lambda_read + lambda_shot * x)
    return np.clip(x + sd * z, 0.0, 1.0)


def quantize(x, black, white):
    v = np.clip(x, 0.0, 1.0)
    return np.rint(black + v * (white - black)).astype(np.uint16)


def _resample_axis(x, index, weight, src, axis):
    # x: (..., src, ...) along ``axis``; output takes dst = len(index)
    ref = np.take(x, index[:, 0], axis=axis)
    acc = np.zeros_like(ref)
    shape = [1] * x.ndim
    shape[axis] = index.shape[0]
    for k in range(index.shape[1]):
        wk = weight[:, k].reshape(shape)
        acc += wk * (np.take(x, index[:, k], axis=axis) - ref)
    return ref + acc / src


def box_downsample(img, idx_y, w_y, idx_x, w_x):
    h, w = img.shape[:2]
    tmp = _resample_axis(img, idx_x, w_x, w, axis=1)
    return _resample_axis(tmp, idx_y, w_y, h, axis=0)
