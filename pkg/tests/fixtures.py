"""Seeded tiny end-to-end fixture: a PPM image plus detection and pose files."""
from pathlib import Path

import numpy as np

from viplo.formats import DetectionFile, PoseFile, format_detections, format_poses, write_ppm
from viplo.geometry import Box, JointSet
from viplo.hoi_head import Detection


def tiny_scene(seed=0, width=96, height=80):
    rng = np.random.default_rng(seed)
    image = rng.uniform(size=(height, width, 3))
    dets = [
        Detection(Box(10, 8, 40, 70), 0, 0.92),
        Detection(Box(50, 12, 85, 75), 0, 0.81),
        Detection(Box(30, 40, 60, 60), 3, 0.77),
        Detection(Box(70, 50, 94, 78), 5, 0.66),
        Detection(Box(31, 41, 61, 61), 3, 0.40),  # suppressed by NMS
    ]
    poses = {}
    for i in (0, 1):
        b = dets[i].box
        kp = np.column_stack([rng.uniform(b.x1, b.x2, 17), rng.uniform(b.y1, b.y2, 17), rng.uniform(size=17)])
        poses[i] = JointSet(kp)
    return image, DetectionFile("tiny", width, height, dets), PoseFile("tiny", poses)


def write_tiny_scene(directory, seed=0):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    image, dets, poses = tiny_scene(seed)
    write_ppm(d / "image.ppm", image)
    (d / "detections.json").write_text(format_detections(dets))
    (d / "poses.json").write_text(format_poses(poses))
    return d / "image.ppm", d / "detections.json", d / "poses.json"
