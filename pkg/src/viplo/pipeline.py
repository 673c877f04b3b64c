"""End-to-end inference for one image."""
from __future__ import annotations

import logging

import numpy as np

from .formats import DetectionFile, FormatError, PoseFile, TripletFile
from .geometry import NUM_JOINTS, Box, JointSet
from .hoi_head import LAMBDA_INFER, Detection, emit_triplets, nms, pair_scores
from .local_features import extract_joint_locals
from .model import Model
from .moa_backbone import extract_features
from .numerics import bilinear_sample_points
from .pose_graph import run_graph

log = logging.getLogger(__name__)


def resize_image(image, size: int) -> np.ndarray:
    """Bilinear resize to ``size x size`` using pixel-center alignment."""
    image = np.asarray(image, dtype=np.float32)
    h, w, _ = image.shape
    if (h, w) == (size, size):
        return image.copy()
    ys = (np.arange(size) + 0.5) * (h / size) - 0.5
    xs = (np.arange(size) + 0.5) * (w / size) - 0.5
    Y, X = np.meshgrid(ys, xs, indexing="ij")
    return bilinear_sample_points(image, X, Y)


def _placeholder_pose(box: Box) -> JointSet:
    cx, cy = box.center
    return JointSet(np.tile([cx, cy, 0.0], (NUM_JOINTS, 1)))


def infer(image, detections: DetectionFile, poses: PoseFile, model: Model, lam: float = LAMBDA_INFER,
          nms_iou: float = 0.5, score_thresh: float = 0.05, out_thresh: float = 0.0, threads: int = 1,
          compat=None) -> TripletFile:
    """Detections + poses + image -> scored HOI triplets in original pixel coordinates.

    Pose entries are keyed by the detection's index in the input file.
    Humans without a pose get a zero-confidence placeholder at the box
    center, which makes their joint attention uniform.
    """
    image = np.asarray(image, dtype=np.float32)
    if image.shape[:2] != (detections.height, detections.width):
        raise FormatError(f"image is {image.shape[1]}x{image.shape[0]} but detections declare "
                          f"{detections.width}x{detections.height}")
    result = TripletFile({detections.image_id: []})
    dets = detections.detections
    if not dets:
        return result

    cfg = model.config
    S = cfg.vit.image_size
    sx, sy = S / detections.width, S / detections.height
    keep = nms([d.box.as_tuple() for d in dets], [d.score for d in dets], [d.cls for d in dets],
               nms_iou, score_thresh)

    kept, scaled = [], []
    for k in keep:
        b = dets[k].box.scale(sx, sy).clip(S, S)
        if b.area > 0:
            kept.append(int(k))
            scaled.append(b)
    if not kept:
        return result

    resized = resize_image(image, S)
    feats = extract_features(resized, scaled, cfg.vit, model.vit, threads=threads)

    human_pos = [n for n, k in enumerate(kept) if dets[k].cls == cfg.human_class]
    if not human_pos:
        return result
    grid = cfg.vit.grid
    joints, locals_ = [], []
    for n in human_pos:
        js = poses.poses.get(kept[n])
        js = _placeholder_pose(scaled[n]) if js is None else js.scale(sx, sy)
        joints.append(js)
        locals_.append(extract_joint_locals(feats.patch_map, scaled[n], js, grid, model.graph.local_proj))

    pairs = np.array([(i, j) for i, n in enumerate(human_pos) for j in range(len(kept)) if j != n],
                     dtype=np.intp).reshape(-1, 2)
    state = run_graph(feats.cls_per_region[human_pos], feats.cls_per_region,
                      [scaled[n] for n in human_pos], scaled, joints, locals_, model.graph,
                      (S, S), pairs=pairs)
    scores = pair_scores(state, model.graph)
    humans = [Detection(dets[kept[n]].box, dets[kept[n]].cls, dets[kept[n]].score) for n in human_pos]
    objects = [dets[k] for k in kept]
    result.images[detections.image_id] = emit_triplets(state, humans, objects, scores, lam, out_thresh, compat)
    log.info("%s: %d detections kept, %d pairs", detections.image_id, len(kept), state.num_pairs)
    return result
