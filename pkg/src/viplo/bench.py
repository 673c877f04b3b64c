"""Timing harnesses.

``bench_moa`` times the region features of the last layer two ways over a
sweep of patch counts ``L`` and region counts ``M``: the naive route reruns
the whole layer per region, the efficient route shares Q/K/V and computes
only masked CLS rows. Both produce the same ``(M, C)`` output; the shared
unmasked patch-token pass, needed equally by both pipelines, is excluded.
``bench_kernels`` compares the compiled and pure-Python kernel backends.
"""
from __future__ import annotations

import math
import statistics
import time
from dataclasses import dataclass

import numpy as np

from . import kernels
from .geometry import PatchGrid
from .moa_backbone import LayerParams, moa_final_layer, moa_final_layer_naive, region_masks


@dataclass
class MoaCell:
    L: int
    M: int
    naive_s: float
    efficient_s: float
    max_abs_diff: float
    equivalent: bool

    @property
    def ratio(self) -> float:
        return self.efficient_s / self.naive_s


def median_time(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def random_boxes(rng, grid: PatchGrid, m: int) -> list[tuple[float, float, float, float]]:
    W, H = grid.image_width, grid.image_height
    out = []
    for _ in range(m):
        x1, x2 = np.sort(rng.uniform(0, W, 2))
        y1, y2 = np.sort(rng.uniform(0, H, 2))
        out.append((x1, y1, max(x2, x1 + 1.0), max(y2, y1 + 1.0)))
    return out


def moa_case(L: int, M: int, dim: int = 32, heads: int = 2, patch: int = 16, seed: int = 0):
    side = math.isqrt(L)
    if side * side != L:
        raise ValueError(f"L={L} is not a square patch count")
    rng = np.random.default_rng(seed)
    grid = PatchGrid(patch, side, side)
    x = rng.normal(0, 1, (L + 1, dim)).astype(np.float32)
    lp = LayerParams.random(dim, 2 * dim, rng, std=0.2)
    masks = region_masks(random_boxes(rng, grid, M), grid)
    return x, lp, masks, grid


def bench_moa(L_sweep=(441, 1764), M_sweep=(1, 8, 16), repeat: int = 3, dim: int = 32, heads: int = 2,
              seed: int = 0, tol: float = 1e-5) -> list[MoaCell]:
    """Outputs are checked to agree within ``tol`` before anything is timed.

    The efficient route is cheap, so it gets ``10 * repeat`` timing runs.
    """
    cells = []
    for L in L_sweep:
        for M in M_sweep:
            x, lp, masks, grid = moa_case(L, M, dim, heads, seed=seed)
            eff, _ = moa_final_layer(x, masks, lp, heads, grid, with_patch_map=False)
            ref = moa_final_layer_naive(x, masks, lp, heads)
            diff = float(np.max(np.abs(eff.cls_per_region - ref)))
            ok = diff < tol
            if not ok:
                raise AssertionError(f"L={L} M={M}: efficient and naive differ by {diff:.3g}")
            t_naive = median_time(lambda: moa_final_layer_naive(x, masks, lp, heads), repeat)
            t_eff = median_time(lambda: moa_final_layer(x, masks, lp, heads, grid, with_patch_map=False), 10 * repeat)
            cells.append(MoaCell(L, M, t_naive, t_eff, diff, ok))
    return cells


def format_moa(cells: list[MoaCell]) -> list[str]:
    rows = [f"{'L':>6} {'M':>4} {'naive_ms':>10} {'efficient_ms':>13} {'ratio':>8} {'max_diff':>10} equiv"]
    for c in cells:
        rows.append(f"{c.L:>6} {c.M:>4} {c.naive_s * 1e3:>10.2f} {c.efficient_s * 1e3:>13.2f} "
                    f"{c.ratio:>8.4f} {c.max_abs_diff:>10.2e} {c.equivalent}")
    return rows


def bench_kernels(repeat: int = 5, seed: int = 0) -> list[str]:
    """Median time of every kernel on every available backend."""
    rng = np.random.default_rng(seed)
    grid = PatchGrid(16, 42, 42)
    boxes = np.array(random_boxes(rng, grid, 64))
    fmap = rng.normal(0, 1, (42, 42, 64))
    roi_boxes = [tuple(b / 16 - 0.5) for b in boxes[:17]]
    scores = rng.normal(0, 1, (2, 1765))
    masks = kernels.overlap_masks(boxes[:16], 16, 42, 42)
    values = rng.normal(0, 1, (2, 1765, 16))
    jobs = {
        "overlap_masks(64 boxes, 42x42)": lambda k: k.overlap_masks(boxes, 16, 42, 42),
        "roi_align(17 boxes, R=3)": lambda k: [k.roi_align(fmap, b, 3, 2) for b in roi_boxes],
        "cls_attention(M=16, L=1764)": lambda k: k.cls_attention(scores, masks, values),
    }
    rows = [f"{'kernel':<32} " + " ".join(f"{name + '_ms':>12}" for name in kernels.BACKENDS) + "  speedup"]
    for label, job in jobs.items():
        t = {name: median_time(lambda: job(mod), repeat) for name, mod in kernels.BACKENDS.items()}
        speed = f"{t['python'] / t['cython']:.1f}x" if "cython" in t else "n/a"
        rows.append(f"{label:<32} " + " ".join(f"{v * 1e3:>12.3f}" for v in t.values()) + f"  {speed}")
    return rows
