"""Box and patch-grid geometry.

The central quantity is the *region mask*: for a box and a ViT patch grid,
the fraction of every patch covered by the box. Entry 0 belongs to the CLS
token and is always 1; entries ``1..L`` follow the row-major patch order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

NUM_JOINTS = 17
JOINT_BOX_SCALE = 0.3


class DegenerateBoxError(ValueError):
    """Raised for boxes with zero area after clipping."""


@dataclass(frozen=True)
class Box:
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        if not (self.x1 <= self.x2 and self.y1 <= self.y2):
            raise ValueError(f"invalid box corners {self.as_tuple()}")

    @classmethod
    def of(cls, b) -> "Box":
        if isinstance(b, Box):
            return b
        x1, y1, x2, y2 = (float(v) for v in b)
        return cls(x1, y1, x2, y2)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return (0.5 * (self.x1 + self.x2), 0.5 * (self.y1 + self.y2))

    def clip(self, width: float, height: float) -> "Box":
        x1 = min(max(self.x1, 0.0), width)
        y1 = min(max(self.y1, 0.0), height)
        x2 = min(max(self.x2, 0.0), width)
        y2 = min(max(self.y2, 0.0), height)
        return Box(x1, y1, x2, y2)

    def scale(self, sx: float, sy: float) -> "Box":
        return Box(self.x1 * sx, self.y1 * sy, self.x2 * sx, self.y2 * sy)


@dataclass(frozen=True)
class PatchGrid:
    """``height`` rows by ``width`` columns of ``patch_size``-pixel patches."""

    patch_size: int
    width: int
    height: int

    def __post_init__(self):
        if self.patch_size <= 0 or self.width <= 0 or self.height <= 0:
            raise ValueError(f"invalid patch grid {self}")

    @classmethod
    def square(cls, image_size: int, patch_size: int) -> "PatchGrid":
        if image_size % patch_size:
            raise ValueError(f"image size {image_size} not divisible by patch size {patch_size}")
        n = image_size // patch_size
        return cls(patch_size, n, n)

    @property
    def num_patches(self) -> int:
        return self.width * self.height

    @property
    def image_width(self) -> int:
        return self.width * self.patch_size

    @property
    def image_height(self) -> int:
        return self.height * self.patch_size


@dataclass(frozen=True)
class JointSet:
    """17 keypoints as a ``(17, 3)`` array of ``(x, y, confidence)``."""

    keypoints: np.ndarray

    def __post_init__(self):
        kp = np.asarray(self.keypoints, dtype=np.float64)
        if kp.shape != (NUM_JOINTS, 3):
            raise ValueError(f"expected {NUM_JOINTS} keypoints of (x, y, conf), got shape {kp.shape}")
        object.__setattr__(self, "keypoints", kp)

    @property
    def xy(self) -> np.ndarray:
        return self.keypoints[:, :2]

    @property
    def confidence(self) -> np.ndarray:
        return self.keypoints[:, 2]

    @property
    def score(self) -> float:
        """Overall pose score: mean keypoint confidence."""
        return float(np.mean(self.confidence))

    def scale(self, sx: float, sy: float) -> "JointSet":
        kp = self.keypoints.copy()
        kp[:, 0] *= sx
        kp[:, 1] *= sy
        return JointSet(kp)


def clip_to_grid(box, grid: PatchGrid) -> Box:
    box = Box.of(box).clip(grid.image_width, grid.image_height)
    if box.width <= 0 or box.height <= 0:
        raise DegenerateBoxError(f"box {box.as_tuple()} has zero area inside the image")
    return box


def overlap_areas_oracle(box, grid: PatchGrid) -> np.ndarray:
    """Reference region mask: explicit rectangle intersection per patch."""
    box = clip_to_grid(box, grid)
    p = grid.patch_size
    px1 = np.arange(grid.width, dtype=np.float64) * p
    py1 = np.arange(grid.height, dtype=np.float64) * p
    iw = np.clip(np.minimum(box.x2, px1 + p) - np.maximum(box.x1, px1), 0.0, None)
    ih = np.clip(np.minimum(box.y2, py1 + p) - np.maximum(box.y1, py1), 0.0, None)
    out = np.empty(grid.num_patches + 1)
    out[0] = 1.0
    out[1:] = (ih[:, None] * iw[None, :]).ravel() / (p * p)
    return out


def boundary_fractions(lo: float, hi: float) -> tuple[int, int, np.ndarray]:
    """Covered fraction of each patch column (or row) spanned by ``[lo, hi]``.

    Inputs are in patch units. Returns the first index, the end index
    (exclusive) and one fraction per spanned column.
    """
    a = math.floor(lo)
    c = math.ceil(hi)
    if c - a == 1:
        return a, c, np.array([hi - lo])
    first = 1.0 - abs(a - lo)
    last = 1.0 - abs(c - hi)
    return a, c, np.concatenate(([first], np.ones(c - a - 2), [last]))


def overlap_areas_factored(box, grid: PatchGrid) -> np.ndarray:
    """Region mask as an outer product of per-row and per-column fractions.

    Only the patches inside the box's bounding index range are touched, so
    the cost is proportional to the box size rather than the whole grid.
    """
    box = clip_to_grid(box, grid)
    p = grid.patch_size
    a, c, area_row = boundary_fractions(box.x1 / p, box.x2 / p)
    b, d, area_col = boundary_fractions(box.y1 / p, box.y2 / p)
    row = np.arange(grid.width * b + a + 1, grid.width * b + c + 1)
    index = np.tile(row, d - b) + np.repeat(np.arange(d - b), c - a) * grid.width
    out = np.zeros(grid.num_patches + 1)
    out[0] = 1.0
    out[index] = np.outer(area_col, area_row).ravel()
    return out


def quantized_mask(box, grid: PatchGrid, mode: str = "attend_all") -> np.ndarray:
    """Region mask with partially covered patches snapped to 1 or 0.

    ``attend_all`` keeps every patch the box touches; ``mask_all`` drops
    every patch a box edge passes through.
    """
    exact = overlap_areas_oracle(box, grid)
    out = exact.copy()
    patches = out[1:]
    partial = (patches > 0.0) & (patches < 1.0)
    if mode == "attend_all":
        patches[partial] = 1.0
    elif mode == "mask_all":
        patches[partial] = 0.0
    else:
        raise ValueError(f"unknown quantization mode {mode!r}")
    return out


def iou(a, b) -> float:
    a, b = Box.of(a), Box.of(b)
    iw = max(0.0, min(a.x2, b.x2) - max(a.x1, b.x1))
    ih = max(0.0, min(a.y2, b.y2) - max(a.y1, b.y1))
    inter = iw * ih
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def pairwise_iou(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """IoU matrix between ``(N, 4)`` and ``(K, 4)`` box arrays."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    iw = np.clip(np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0]), 0, None)
    ih = np.clip(np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1]), 0, None)
    inter = iw * ih
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(union > 0, inter / union, 0.0)


def joint_region_box(joint, human_box, image_size: tuple[float, float] | None = None) -> Box:
    """Square box around a joint, side 0.3x the human box height.

    ``image_size`` is ``(width, height)``; when given, the joint is clamped
    into the image and the box clipped to it.
    """
    x, y = float(joint[0]), float(joint[1])
    side = JOINT_BOX_SCALE * Box.of(human_box).height
    if image_size is not None:
        w, h = image_size
        x = min(max(x, 0.0), w)
        y = min(max(y, 0.0), h)
    box = Box(x - side / 2, y - side / 2, x + side / 2, y + side / 2)
    if image_size is not None:
        box = box.clip(*image_size)
    return box
