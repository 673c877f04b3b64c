"""Per-joint local appearance features pooled from the patch-token map."""
from __future__ import annotations

import logging

import numpy as np

from . import kernels
from .geometry import NUM_JOINTS, Box, JointSet, PatchGrid, joint_region_box
from .numerics import F32, DimensionError, MlpSpec, mlp_forward

log = logging.getLogger(__name__)

ROI_SIZE = 3
SAMPLING = 2


def to_map_coords(box, patch_size: int) -> tuple[float, float, float, float]:
    """Pixel box -> continuous patch-map coordinates (token centers at integers)."""
    b = Box.of(box)
    return (b.x1 / patch_size - 0.5, b.y1 / patch_size - 0.5, b.x2 / patch_size - 0.5, b.y2 / patch_size - 0.5)


def roi_align(fmap, box, out_size: int = ROI_SIZE, patch_size: int = 1, sampling: int = SAMPLING) -> np.ndarray:
    """ROIAlign a pixel-coordinate box on an ``H x W x C`` token map.

    Each of the ``out_size**2`` bins averages ``sampling x sampling``
    bilinear samples. A zero-area box yields zeros (and a warning).
    """
    fmap = np.asarray(fmap, dtype=F32)
    if fmap.ndim != 3:
        raise DimensionError(f"expected H x W x C map, got {fmap.shape}")
    if out_size < 1 or sampling < 1:
        raise ValueError("out_size and sampling must be positive")
    b = Box.of(box)
    if b.area <= 0:
        log.warning("zero-area box %s passed to roi_align", b.as_tuple())
        return np.zeros((out_size, out_size, fmap.shape[2]), F32)
    out = kernels.roi_align(fmap, to_map_coords(b, patch_size), out_size, sampling)
    return np.asarray(out).astype(F32)


def extract_joint_locals(patch_map, human_box, joints: JointSet, grid: PatchGrid,
                         projector: MlpSpec) -> np.ndarray:
    """Return ``(17, C_node)`` local features, one per keypoint."""
    image_size = (grid.image_width, grid.image_height)
    pooled = np.zeros((NUM_JOINTS, np.asarray(patch_map).shape[2]), F32)
    valid = np.zeros(NUM_JOINTS, bool)
    for k, xy in enumerate(joints.xy):
        box = joint_region_box(xy, human_box, image_size)
        if box.area <= 0:
            continue
        pooled[k] = roi_align(patch_map, box, ROI_SIZE, grid.patch_size).mean(axis=(0, 1))
        valid[k] = True
    out = mlp_forward(projector, pooled)
    out[~valid] = 0.0
    return out
