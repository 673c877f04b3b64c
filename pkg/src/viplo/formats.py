"""On-disk formats: weight files, detection/pose/triplet JSON and PPM images.

Weight file layout (little-endian throughout)::

    magic      8 bytes  b"VIPLOWT\\0"
    version    u32
    nfields    u32, then nfields x u32 config values (see ModelConfig.header_fields)
    count      u32
    count x { name_len u32, name utf-8, rank u32, rank x u32 extents, float32 payload }

JSON files are written with two-space indentation, fixed key order and a
trailing newline, so parsing and rewriting a canonical file reproduces it
byte for byte.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import NUM_JOINTS, Box, JointSet
from .hoi_head import Detection, HOITriplet
from .model import HEADER_FIELD_COUNT, Model, ModelConfig

MAGIC = b"VIPLOWT\x00"
VERSION = 1


class FormatError(ValueError):
    """Raised for malformed or inconsistent input files."""


# -- weights ---------------------------------------------------------------

def dump_weights(model: Model) -> bytes:
    parts = [MAGIC, struct.pack("<I", VERSION)]
    header = model.config.header_fields()
    parts.append(struct.pack(f"<I{len(header)}I", len(header), *header))
    arrays = model.named_arrays()
    parts.append(struct.pack("<I", len(arrays)))
    for name, arr in arrays:
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)) + raw)
        parts.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        parts.append(arr.astype("<f4").tobytes(order="C"))
    return b"".join(parts)


def load_weights(data: bytes) -> Model:
    view = memoryview(data)
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(view):
            raise FormatError("weight file truncated")
        chunk = view[pos:pos + n]
        pos += n
        return chunk

    def u32(k=1):
        vals = struct.unpack(f"<{k}I", take(4 * k))
        return vals if k > 1 else vals[0]

    if bytes(take(len(MAGIC))) != MAGIC:
        raise FormatError("not a weight file (bad magic)")
    version = u32()
    if version != VERSION:
        raise FormatError(f"unsupported weight file version {version}")
    nfields = u32()
    if nfields != HEADER_FIELD_COUNT:
        raise FormatError(f"config block has {nfields} fields, expected {HEADER_FIELD_COUNT}")
    try:
        config = ModelConfig.from_header_fields(u32(nfields))
    except ValueError as exc:
        raise FormatError(f"invalid config block: {exc}") from exc
    arrays = {}
    for _ in range(u32()):
        try:
            name = bytes(take(u32())).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError("parameter name is not utf-8") from exc
        rank = u32()
        shape = tuple(u32(rank)) if rank > 1 else ((u32(),) if rank == 1 else ())
        if name in arrays:
            raise FormatError(f"duplicate parameter {name}")
        count = int(np.prod(shape)) if shape else 1
        arrays[name] = np.frombuffer(take(4 * count), dtype="<f4").reshape(shape).astype(np.float32)
    if pos != len(view):
        raise FormatError(f"{len(view) - pos} trailing bytes after last parameter")
    try:
        return Model.from_named(config, arrays)
    except ValueError as exc:
        raise FormatError(str(exc)) from exc


def save_weights(model: Model, path) -> None:
    Path(path).write_bytes(dump_weights(model))


def read_weights(path) -> Model:
    return load_weights(Path(path).read_bytes())


# -- JSON records ------------------------------------------------------------

@dataclass
class DetectionFile:
    image_id: str
    width: int
    height: int
    detections: list[Detection] = field(default_factory=list)


@dataclass
class PoseFile:
    image_id: str
    poses: dict[int, JointSet] = field(default_factory=dict)


@dataclass
class TripletFile:
    """Predictions (with scores) or ground truth (``scored=False``), per image."""

    images: dict[str, list[HOITriplet]] = field(default_factory=dict)
    scored: bool = True


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def _box(v) -> Box:
    if not isinstance(v, list) or len(v) != 4:
        raise FormatError(f"box must be a list of 4 numbers, got {v!r}")
    try:
        return Box(*(float(x) for x in v))
    except (TypeError, ValueError) as exc:
        raise FormatError(f"invalid box {v!r}: {exc}") from exc


def parse_detections(text: str) -> DetectionFile:
    try:
        d = json.loads(text)
        dets = []
        for e in d["detections"]:
            score = e["score"]
            if not 0.0 <= score <= 1.0:
                raise FormatError(f"detection score {score} outside [0, 1]")
            dets.append(Detection(_box(e["box"]), int(e["class"]), float(score)))
        return DetectionFile(str(d["image_id"]), int(d["width"]), int(d["height"]), dets)
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise FormatError(f"bad detection file: {exc}") from exc


def format_detections(f: DetectionFile) -> str:
    return _dumps({
        "image_id": f.image_id, "width": f.width, "height": f.height,
        "detections": [{"box": [float(v) for v in d.box.as_tuple()], "class": d.cls, "score": float(d.score)}
                       for d in f.detections],
    })


def parse_poses(text: str) -> PoseFile:
    try:
        d = json.loads(text)
        poses = {}
        for e in d["poses"]:
            kp = e["keypoints"]
            if len(kp) != NUM_JOINTS or any(len(k) != 3 for k in kp):
                raise FormatError(f"pose for detection {e['detection']} must have {NUM_JOINTS} (x, y, conf) keypoints")
            poses[int(e["detection"])] = JointSet(np.array(kp, dtype=np.float64))
        return PoseFile(str(d["image_id"]), poses)
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise FormatError(f"bad pose file: {exc}") from exc


def format_poses(f: PoseFile) -> str:
    return _dumps({
        "image_id": f.image_id,
        "poses": [{"detection": i, "keypoints": [[float(v) for v in k] for k in js.keypoints]}
                  for i, js in f.poses.items()],
    })


def parse_triplets(text: str, scored: bool = True) -> TripletFile:
    try:
        d = json.loads(text)
        images = {}
        for img in d["images"]:
            rows = []
            for t in img["triplets"]:
                score = float(t["score"]) if scored else 1.0
                rows.append(HOITriplet(_box(t["human_box"]), _box(t["object_box"]), int(t["object_class"]),
                                       int(t["verb"]), score))
            images[str(img["image_id"])] = rows
        return TripletFile(images, scored)
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise FormatError(f"bad triplet file: {exc}") from exc


def format_triplets(f: TripletFile) -> str:
    images = []
    for image_id, rows in f.images.items():
        out = []
        for t in rows:
            rec = {"human_box": [float(v) for v in t.human_box.as_tuple()],
                   "object_box": [float(v) for v in t.object_box.as_tuple()],
                   "object_class": t.object_class, "verb": t.verb}
            if f.scored:
                rec["score"] = float(t.score)
            out.append(rec)
        images.append({"image_id": image_id, "triplets": out})
    return _dumps({"images": images})


# -- images ----------------------------------------------------------------

def read_ppm(path) -> np.ndarray:
    """Read a binary PPM (P6, maxval < 256) as an ``H x W x 3`` float32 array in [0, 1]."""
    data = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("truncated PPM header")
        tokens.append(data[start:pos])
    if tokens[0] != b"P6":
        raise FormatError("only binary PPM (P6) images are supported")
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise FormatError(f"bad PPM header: {exc}") from exc
    if maxval <= 0 or maxval > 255:
        raise FormatError("PPM maxval must be in 1..255")
    payload = data[pos + 1:pos + 1 + w * h * 3]
    if len(payload) != w * h * 3:
        raise FormatError("PPM payload truncated")
    return np.frombuffer(payload, np.uint8).reshape(h, w, 3).astype(np.float32) / maxval


def write_ppm(path, image) -> None:
    img = np.clip(np.round(np.asarray(image, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)
    h, w, _ = img.shape
    Path(path).write_bytes(f"P6\n{w} {h}\n255\n".encode() + img.tobytes())
