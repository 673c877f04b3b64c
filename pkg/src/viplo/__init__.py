"""Two-stage human-object interaction detection on a ViT backbone.

Region features come from a masked-CLS attention whose mask is the exact
fractional overlap of each patch with the region box; interactions are
scored by a pose-conditioned bipartite graph.
"""
from .kernels import BACKEND as KERNEL_BACKEND
from .geometry import Box, JointSet, PatchGrid, iou, overlap_areas_factored, overlap_areas_oracle
from .model import Model, ModelConfig

__version__ = "0.1.0"

__all__ = [
    "KERNEL_BACKEND", "Box", "JointSet", "PatchGrid", "iou", "overlap_areas_factored",
    "overlap_areas_oracle", "Model", "ModelConfig",
]
