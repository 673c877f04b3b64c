import numpy as np
import pytest

from viplo.formats import (
    FormatError,
    TripletFile,
    dump_weights,
    format_detections,
    format_poses,
    format_triplets,
    load_weights,
    parse_detections,
    parse_poses,
    parse_triplets,
    read_ppm,
    write_ppm,
)
from viplo.geometry import Box
from viplo.hoi_head import HOITriplet
from viplo.model import Model, ModelConfig

from fixtures import tiny_scene


@pytest.fixture(scope="module")
def model():
    return Model.random(ModelConfig.preset("tiny"), seed=3)


def test_weights_round_trip(model):
    blob = dump_weights(model)
    again = load_weights(blob)
    assert again.config == model.config
    for (n1, a1), (n2, a2) in zip(model.named_arrays(), again.named_arrays()):
        assert n1 == n2 and a1.dtype == a2.dtype and a1.tobytes() == a2.tobytes()
    assert dump_weights(again) == blob


def test_seeded_models_are_identical():
    cfg = ModelConfig.preset("tiny")
    assert dump_weights(Model.random(cfg, 5)) == dump_weights(Model.random(cfg, 5))
    assert dump_weights(Model.random(cfg, 5)) != dump_weights(Model.random(cfg, 6))


@pytest.mark.parametrize("mutate", [
    lambda b: b[:-3],
    lambda b: b + b"\x00",
    lambda b: b"NOTVIPLO" + b[8:],
    lambda b: b[:8] + (99).to_bytes(4, "little") + b[12:],
    lambda b: b[:40],
])
def test_corrupt_weights(model, mutate):
    with pytest.raises(FormatError):
        load_weights(mutate(dump_weights(model)))


def test_detection_and_pose_round_trip():
    _, dets, poses = tiny_scene(1)
    d2 = parse_detections(format_detections(dets))
    assert d2 == dets
    p2 = parse_poses(format_poses(poses))
    assert p2.poses.keys() == poses.poses.keys()
    for k in poses.poses:
        np.testing.assert_array_equal(p2.poses[k].keypoints, poses.poses[k].keypoints)


def test_triplet_round_trip():
    t = HOITriplet(Box(0, 0, 1.5, 2), Box(3, 3, 4, 4), 2, 7, 0.123456789)
    f = TripletFile({"x": [t], "y": []})
    assert parse_triplets(format_triplets(f)) == f
    gt = TripletFile({"x": [HOITriplet(t.human_box, t.object_box, 2, 7, 1.0)]}, scored=False)
    text = format_triplets(gt)
    assert "score" not in text and parse_triplets(text, scored=False) == gt


@pytest.mark.parametrize("text", [
    "not json",
    '{"image_id": "a", "width": 4, "height": 4}',
    '{"image_id": "a", "width": 4, "height": 4, "detections": [{"box": [0, 0, 1], "class": 0, "score": 0.5}]}',
    '{"image_id": "a", "width": 4, "height": 4, "detections": [{"box": [0, 0, 1, 1], "class": 0, "score": 1.5}]}',
    '{"image_id": "a", "width": 4, "height": 4, "detections": [{"box": [3, 0, 1, 1], "class": 0, "score": 0.5}]}',
])
def test_bad_detections(text):
    with pytest.raises(FormatError):
        parse_detections(text)


def test_bad_pose():
    with pytest.raises(FormatError):
        parse_poses('{"image_id": "a", "poses": [{"detection": 0, "keypoints": [[0, 0, 1]]}]}')


def test_ppm_round_trip(tmp_path, rng):
    img = rng.integers(0, 256, (5, 7, 3)) / 255.0
    write_ppm(tmp_path / "a.ppm", img)
    np.testing.assert_allclose(read_ppm(tmp_path / "a.ppm"), img, atol=1e-7)


def test_ppm_rejects_other_formats(tmp_path):
    (tmp_path / "a.ppm").write_bytes(b"P3\n1 1\n255\n0 0 0\n")
    with pytest.raises(FormatError):
        read_ppm(tmp_path / "a.ppm")
    (tmp_path / "b.ppm").write_bytes(b"P6\n2 2\n255\n\x00\x00")
    with pytest.raises(FormatError):
        read_ppm(tmp_path / "b.ppm")


def test_canonical_files_round_trip_byte_for_byte():
    _, dets, poses = tiny_scene(2)
    for text, parse, fmt in [(format_detections(dets), parse_detections, format_detections),
                             (format_poses(poses), parse_poses, format_poses)]:
        assert fmt(parse(text)) == text
    t = HOITriplet(Box(0, 0, 1.5, 2), Box(3, 3, 4, 4), 2, 7, 0.25)
    text = format_triplets(TripletFile({"x": [t]}))
    assert format_triplets(parse_triplets(text)) == text
