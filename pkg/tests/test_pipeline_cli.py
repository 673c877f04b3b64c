import json

import numpy as np
import pytest

from viplo import cli
from viplo.formats import DetectionFile, PoseFile, format_triplets, parse_triplets, save_weights
from viplo.model import Model, ModelConfig
from viplo.pipeline import infer, resize_image

from fixtures import tiny_scene, write_tiny_scene


@pytest.fixture(scope="module")
def model():
    return Model.random(ModelConfig.preset("tiny"), seed=0)


def test_resize_identity_and_constant(rng):
    img = rng.uniform(size=(8, 8, 3)).astype(np.float32)
    np.testing.assert_array_equal(resize_image(img, 8), img)
    np.testing.assert_allclose(resize_image(np.full((5, 9, 3), 0.25), 16), 0.25, atol=1e-7)


def test_infer_outputs(model):
    image, dets, poses = tiny_scene(0)
    res = infer(image, dets, poses, model)
    rows = res.images["tiny"]
    V = model.config.graph.num_verbs
    # two humans; NMS drops one of the five detections; no self pairs
    assert len(rows) == 2 * 3 * V
    assert all(0 <= t.score <= 1 for t in rows)
    boxes = {t.object_box.as_tuple() for t in rows}
    assert (31.0, 41.0, 61.0, 61.0) not in boxes and (30.0, 40.0, 60.0, 60.0) in boxes
    scores = [t.score for t in rows]
    assert scores == sorted(scores, reverse=True)


def test_infer_is_deterministic_across_threads(model):
    image, dets, poses = tiny_scene(0)
    a = format_triplets(infer(image, dets, poses, model, threads=1))
    b = format_triplets(infer(image, dets, poses, model, threads=4))
    assert a == b


def test_missing_pose_and_no_humans(model):
    image, dets, _ = tiny_scene(0)
    assert infer(image, dets, PoseFile("tiny"), model).images["tiny"]
    objs = DetectionFile("tiny", dets.width, dets.height, [d for d in dets.detections if d.cls != 0])
    assert infer(image, objs, PoseFile("tiny"), model).images["tiny"] == []


def test_empty_detections(model):
    image, dets, poses = tiny_scene(0)
    empty = DetectionFile("tiny", dets.width, dets.height, [])
    assert infer(image, empty, poses, model).images == {"tiny": []}


def test_image_size_mismatch(model):
    image, dets, poses = tiny_scene(0)
    with pytest.raises(ValueError):
        infer(image[:-1], dets, poses, model)


class TestCli:
    def test_infer_byte_identical(self, tmp_path, capsys):
        img, det, pose = write_tiny_scene(tmp_path / "scene")
        outs = []
        for threads in (1, 1, 4):
            out = tmp_path / f"pred{len(outs)}.json"
            code = cli.main(["infer", "--image", str(img), "--detections", str(det), "--poses", str(pose),
                             "--seed", "0", "--threads", str(threads), "--out", str(out)])
            assert code == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1] == outs[2]
        assert json.loads(outs[0])["images"][0]["image_id"] == "tiny"

    def test_infer_with_weight_file(self, tmp_path, model):
        img, det, pose = write_tiny_scene(tmp_path / "scene")
        save_weights(model, tmp_path / "w.bin")
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        base = ["infer", "--image", str(img), "--detections", str(det), "--poses", str(pose)]
        assert cli.main(base + ["--weights", str(tmp_path / "w.bin"), "--out", str(a)]) == 0
        assert cli.main(base + ["--seed", "0", "--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_eval(self, tmp_path, capsys):
        from viplo.selftest import crafted_map_fixture
        pred, gt = crafted_map_fixture()
        (tmp_path / "p.json").write_text(format_triplets(pred))
        (tmp_path / "g.json").write_text(format_triplets(gt))
        assert cli.main(["eval", "--predictions", str(tmp_path / "p.json"),
                         "--ground-truth", str(tmp_path / "g.json")]) == 0
        assert "mAP=0.875000" in capsys.readouterr().out
        assert parse_triplets((tmp_path / "g.json").read_text(), scored=False) == gt

    def test_usage_error(self, capsys):
        with pytest.raises(SystemExit) as exc:
            cli.main(["infer"])
        assert exc.value.code == 1
        with pytest.raises(SystemExit) as exc:
            cli.main(["frobnicate"])
        assert exc.value.code == 1

    def test_parse_error(self, tmp_path, capsys):
        img, det, _ = write_tiny_scene(tmp_path / "scene")
        det.write_text("{broken")
        assert cli.main(["infer", "--image", str(img), "--detections", str(det)]) == 2
        assert cli.main(["selftest", "--weights", str(tmp_path / "missing.bin")]) == 2
        (tmp_path / "bad.bin").write_bytes(b"garbage")
        assert cli.main(["selftest", "--weights", str(tmp_path / "bad.bin")]) == 2

    def test_init_weights(self, tmp_path):
        out = tmp_path / "w.bin"
        assert cli.main(["init-weights", "--seed", "2", "--out", str(out)]) == 0
        assert out.read_bytes()[:8] == b"VIPLOWT\x00"

    def test_selftest_fault_injection(self, capsys):
        assert cli.main(["selftest", "--inject-fault"]) == 3
        assert "[FAIL] geometry" in capsys.readouterr().out
