import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from viplo.evaluation import average_precision, evaluate_map
from viplo.formats import TripletFile
from viplo.geometry import Box
from viplo.hoi_head import HOITriplet
from viplo.selftest import brute_force_map, crafted_map_fixture


def test_perfect_predictions():
    _, gt = crafted_map_fixture()
    pred = TripletFile({k: list(v) for k, v in gt.images.items()})
    assert abs(evaluate_map(pred, gt).mean_ap - 1.0) < 1e-9


def test_crafted_fixture():
    pred, gt = crafted_map_fixture()
    rep = evaluate_map(pred, gt)
    # category (1, 0): hits at ranks 1 and 4 of 2 GT -> 0.5 * 1 + 0.5 * 0.5
    assert rep.per_category[(1, 0)] == pytest.approx(0.75)
    assert rep.per_category[(2, 1)] == pytest.approx(1.0)
    assert rep.mean_ap == pytest.approx(0.875, abs=1e-12)
    assert abs(rep.mean_ap - brute_force_map(pred, gt)) < 1e-6


def test_no_predictions_scores_zero():
    _, gt = crafted_map_fixture()
    assert evaluate_map(TripletFile({}), gt).mean_ap == 0.0


def test_empty_ground_truth_rejected():
    with pytest.raises(ValueError):
        evaluate_map(TripletFile({}), TripletFile({"a": []}, scored=False))


def test_duplicate_detection_is_false_positive():
    b = Box(0, 0, 10, 10)
    gt = TripletFile({"a": [HOITriplet(b, b, 1, 1, 1.0)]}, scored=False)
    pred = TripletFile({"a": [HOITriplet(b, b, 1, 1, 0.9), HOITriplet(b, b, 1, 1, 0.8)]})
    assert evaluate_map(pred, gt).mean_ap == pytest.approx(1.0)
    pred = TripletFile({"a": [HOITriplet(b, b, 1, 1, 0.9), HOITriplet(b, b, 1, 1, 0.95)]})
    assert evaluate_map(pred, gt).mean_ap == pytest.approx(1.0)


def test_both_boxes_must_match():
    gt = TripletFile({"a": [HOITriplet(Box(0, 0, 10, 10), Box(20, 20, 30, 30), 1, 1, 1.0)]}, scored=False)
    pred = TripletFile({"a": [HOITriplet(Box(0, 0, 10, 10), Box(25, 25, 35, 35), 1, 1, 0.9)]})
    assert evaluate_map(pred, gt).mean_ap == 0.0


def test_ap_hand_values():
    assert average_precision([1, 1], 2) == pytest.approx(1.0)
    assert average_precision([0, 1], 1) == pytest.approx(0.5)
    assert average_precision([1, 0, 1], 4) == pytest.approx(0.25 + 0.25 * 2 / 3)
    assert average_precision([], 3) == 0.0


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_random_scenes_match_oracle(seed):
    rng = np.random.default_rng(seed)

    def rand_box():
        x, y = rng.uniform(0, 40, 2)
        return Box(x, y, x + rng.uniform(5, 15), y + rng.uniform(5, 15))

    gt, pred = {}, {}
    for img in "ab":
        g = [HOITriplet(rand_box(), rand_box(), int(rng.integers(2)), int(rng.integers(2)), 1.0) for _ in range(3)]
        gt[img] = g
        p = []
        for t in g:
            if rng.uniform() < 0.7:
                jit = rng.uniform(-2, 2, 4)
                hb = Box(*(np.array(t.human_box.as_tuple()) + [jit[0], jit[1], jit[0], jit[1]]))
                p.append(HOITriplet(hb, t.object_box, t.object_class, t.verb, float(rng.uniform())))
        p += [HOITriplet(rand_box(), rand_box(), int(rng.integers(2)), int(rng.integers(2)), float(rng.uniform()))
              for _ in range(2)]
        pred[img] = p
    gt_f, pred_f = TripletFile(gt, scored=False), TripletFile(pred)
    got = evaluate_map(pred_f, gt_f).mean_ap
    assert 0.0 <= got <= 1.0
    assert abs(got - brute_force_map(pred_f, gt_f)) < 1e-6


@settings(max_examples=50, deadline=None)
@given(st.permutations(range(6)))
def test_prediction_order_does_not_matter(perm):
    pred, gt = crafted_map_fixture()
    flat = [(img, t) for img, rows in pred.images.items() for t in rows]
    shuffled = {}
    for k in perm:
        img, t = flat[k]
        shuffled.setdefault(img, []).append(t)
    assert evaluate_map(TripletFile(shuffled), gt).mean_ap == evaluate_map(pred, gt).mean_ap
