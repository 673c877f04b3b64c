"""HOI detection mAP (Default setting).

A prediction is a true positive when it has the same (object class, verb)
category as a not-yet-matched ground-truth triplet in the same image and
both its human and object boxes reach the IoU threshold. Predictions are
matched greedily in descending score order; equal scores keep file order.
AP uses all-points interpolation of the precision/recall curve.
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .formats import TripletFile
from .geometry import iou


@dataclass
class MapReport:
    per_category: dict[tuple[int, int], float]
    mean_ap: float

    def lines(self) -> list[str]:
        out = [f"category obj={o} verb={v}: AP={ap:.6f}" for (o, v), ap in sorted(self.per_category.items())]
        out.append(f"mAP={self.mean_ap:.6f} over {len(self.per_category)} categories")
        return out


def average_precision(tp, num_gt: int) -> float:
    """All-points interpolated AP from a score-ordered true-positive flag vector."""
    tp = np.asarray(tp, dtype=np.float64)
    if num_gt <= 0:
        raise ValueError("AP undefined without ground truth")
    if tp.size == 0:
        return 0.0
    ctp = np.cumsum(tp)
    recall = ctp / num_gt
    precision = ctp / np.arange(1, tp.size + 1)
    mrec = np.concatenate([[0.0], recall, [1.0]])
    mpre = np.concatenate([[0.0], precision, [0.0]])
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    idx = np.flatnonzero(mrec[1:] != mrec[:-1])
    return float(np.sum((mrec[idx + 1] - mrec[idx]) * mpre[idx + 1]))


def evaluate_map(predictions: TripletFile, ground_truth: TripletFile, iou_threshold: float = 0.5) -> MapReport:
    gt_by_cat = defaultdict(lambda: defaultdict(list))
    for image_id, rows in ground_truth.images.items():
        for t in rows:
            gt_by_cat[(t.object_class, t.verb)][image_id].append(t)
    if not gt_by_cat:
        raise ValueError("ground truth contains no triplets")

    preds_by_cat = defaultdict(list)
    for image_id, rows in predictions.images.items():
        for t in rows:
            preds_by_cat[(t.object_class, t.verb)].append((image_id, t))

    per_cat = {}
    for cat, gts in gt_by_cat.items():
        num_gt = sum(len(v) for v in gts.values())
        preds = preds_by_cat.get(cat, [])
        order = sorted(range(len(preds)), key=lambda k: -preds[k][1].score)
        used = {img: np.zeros(len(v), bool) for img, v in gts.items()}
        tp = np.zeros(len(order))
        for rank, k in enumerate(order):
            image_id, p = preds[k]
            cands = gts.get(image_id, [])
            best, best_ov = -1, -1.0
            for g, gt in enumerate(cands):
                if used[image_id][g]:
                    continue
                ov = min(iou(p.human_box, gt.human_box), iou(p.object_box, gt.object_box))
                if ov >= iou_threshold and ov > best_ov:
                    best, best_ov = g, ov
            if best >= 0:
                used[image_id][best] = True
                tp[rank] = 1.0
        per_cat[cat] = average_precision(tp, num_gt)
    return MapReport(per_cat, float(np.mean(list(per_cat.values()))))
