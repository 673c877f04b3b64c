"""Pure-Python/numpy implementations of the hot kernels.

Used when the compiled ``_ckernels`` extension is unavailable or when
``VIPLO_KERNELS=python`` is set. Signatures match ``_ckernels`` exactly.
"""
import math

import numpy as np


def overlap_masks(boxes, patch_size, grid_w, grid_h):
    """Region masks for ``(M, 4)`` pixel boxes already clipped to the image."""
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    out = np.zeros((boxes.shape[0], grid_w * grid_h + 1))
    out[:, 0] = 1.0
    for m, (x1, y1, x2, y2) in enumerate(boxes / patch_size):
        a, c, fx = _fractions(x1, x2)
        b, d, fy = _fractions(y1, y2)
        block = out[m, 1:].reshape(grid_h, grid_w)
        block[b:d, a:c] = np.outer(fy, fx)
    return out


def _fractions(lo, hi):
    a = math.floor(lo)
    c = math.ceil(hi)
    if c - a <= 1:
        return a, a + 1, np.array([hi - lo])
    f = np.ones(c - a)
    f[0] = 1.0 - (lo - a)
    f[-1] = 1.0 - (c - hi)
    return a, c, f


def roi_align(fmap, box, out_size, sampling):
    """ROIAlign of one box given in continuous map coordinates."""
    fmap = np.asarray(fmap, dtype=np.float64)
    H, W, C = fmap.shape
    x1, y1, x2, y2 = (float(v) for v in box)
    bw = (x2 - x1) / out_size
    bh = (y2 - y1) / out_size
    offs = (np.arange(sampling) + 0.5) / sampling
    xs = x1 + (np.arange(out_size)[:, None] + offs[None, :]) * bw
    ys = y1 + (np.arange(out_size)[:, None] + offs[None, :]) * bh
    # (R, s) grids -> sample every (row-bin, col-bin, sy, sx) combination
    X = np.clip(xs[None, None, :, :].repeat(out_size, 0).repeat(sampling, 1), 0, W - 1)
    Y = np.clip(ys[:, :, None, None].repeat(out_size, 2).repeat(sampling, 3), 0, H - 1)
    x0 = np.floor(X).astype(np.intp)
    y0 = np.floor(Y).astype(np.intp)
    xi = np.minimum(x0 + 1, W - 1)
    yi = np.minimum(y0 + 1, H - 1)
    fx = (X - x0)[..., None]
    fy = (Y - y0)[..., None]
    val = (fmap[y0, x0] * (1 - fx) + fmap[y0, xi] * fx) * (1 - fy) + (
        fmap[yi, x0] * (1 - fx) + fmap[yi, xi] * fx
    ) * fy
    # val: (R_y, s_y, R_x, s_x, C)
    return val.mean(axis=(1, 3))


def cls_attention(scores, masks, values):
    """Masked CLS attention for many regions sharing one set of scores.

    ``scores``: ``(heads, n)`` scaled CLS-query logits; ``masks``:
    ``(M, n)`` overlap fractions; ``values``: ``(heads, n, d)``.
    Returns ``(M, heads, d)``.
    """
    scores = np.asarray(scores, dtype=np.float64)
    masks = np.asarray(masks, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    with np.errstate(divide="ignore"):
        logm = np.log(masks)
    z = scores[None, :, :] + logm[:, None, :]
    zmax = z.max(axis=-1, keepdims=True)
    w = np.exp(z - zmax)
    w /= w.sum(axis=-1, keepdims=True)
    return np.einsum("mhn,hnd->mhd", w, values)
