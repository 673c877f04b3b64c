"""Verb scoring, final HOI score composition, focal loss and NMS."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Box, pairwise_iou
from .numerics import F32, F64, matmul, sigmoid
from .pose_graph import GraphParams, GraphState, mbf_fuse

LAMBDA_TRAIN = 1.0
LAMBDA_INFER = 2.8
FOCAL_ALPHA = 0.5
FOCAL_GAMMA = 0.2
FOCAL_EPS = 1e-7


@dataclass(frozen=True)
class Detection:
    box: Box
    cls: int
    score: float


@dataclass(frozen=True)
class HOITriplet:
    human_box: Box
    object_box: Box
    object_class: int
    verb: int
    score: float


def pair_scores(state: GraphState, params: GraphParams) -> np.ndarray:
    """``(P, V)`` sigmoid verb scores for every pair in the graph."""
    V = params.cls_w.shape[1]
    if state.num_pairs == 0:
        return np.zeros((0, V), F32)
    hi, oi = state.pairs[:, 0], state.pairs[:, 1]
    rep = mbf_fuse(np.concatenate([state.humans[hi], state.objects[oi]], axis=1), state.edges, params.mbf_cls)
    return sigmoid(matmul(rep, params.cls_w).astype(F64) + params.cls_b)


def pair_logits(state: GraphState, pair: int, params: GraphParams) -> np.ndarray:
    """Verb scores of one pair (kept for symmetry with :func:`pair_scores`)."""
    sub = GraphState(state.humans, state.objects, state.pairs[pair:pair + 1], state.edges[pair:pair + 1],
                     state.alpha[pair:pair + 1], state.locals[pair:pair + 1], state.step)
    return pair_scores(sub, params)[0]


def compose_final_score(s_h, s_o, s_verb, lam: float = LAMBDA_INFER):
    """``s_h**lam * s_o**lam * s_verb``; works elementwise on arrays."""
    return np.power(s_h, lam) * np.power(s_o, lam) * s_verb


def focal_loss(y_hat, y, alpha: float = FOCAL_ALPHA, gamma: float = FOCAL_GAMMA):
    """Binary focal loss and its derivative with respect to ``y_hat``.

    Scores are clamped to ``[eps, 1 - eps]``. Scalars in, scalars out;
    arrays are handled elementwise.
    """
    p = np.clip(np.asarray(y_hat, dtype=F64), FOCAL_EPS, 1.0 - FOCAL_EPS)
    y = np.asarray(y)
    q = 1.0 - p
    pos_loss = -alpha * q**gamma * np.log(p)
    pos_grad = alpha * gamma * q ** (gamma - 1.0) * np.log(p) - alpha * q**gamma / p
    neg_loss = -(1.0 - alpha) * p**gamma * np.log(q)
    neg_grad = -(1.0 - alpha) * (gamma * p ** (gamma - 1.0) * np.log(q) - p**gamma / q)
    loss = np.where(y == 1, pos_loss, neg_loss)
    grad = np.where(y == 1, pos_grad, neg_grad)
    if loss.ndim == 0:
        return float(loss), float(grad)
    return loss, grad


def focal_loss_total(scores, labels, alpha: float = FOCAL_ALPHA, gamma: float = FOCAL_GAMMA) -> float:
    """Sum of focal losses over pairs and classes, divided by the positive count."""
    loss, _ = focal_loss(np.asarray(scores).ravel(), np.asarray(labels).ravel(), alpha, gamma)
    return float(np.sum(loss) / max(1, int(np.sum(labels))))


def nms(boxes, scores, classes, iou_threshold: float = 0.5, score_threshold: float = 0.05) -> np.ndarray:
    """Per-class greedy NMS. Returns kept indices by descending score.

    Boxes scoring below ``score_threshold`` are dropped first; ties keep
    input order.
    """
    boxes = np.asarray(boxes, dtype=F64).reshape(-1, 4)
    scores = np.asarray(scores, dtype=F64)
    classes = np.asarray(classes)
    order = np.argsort(-scores, kind="stable")
    order = order[scores[order] >= score_threshold]
    keep = []
    for c in np.unique(classes[order]) if order.size else []:
        idx = order[classes[order] == c]
        ious = pairwise_iou(boxes[idx], boxes[idx])
        alive = np.ones(len(idx), bool)
        for a in range(len(idx)):
            if not alive[a]:
                continue
            keep.append(idx[a])
            alive[a + 1:] &= ious[a, a + 1:] <= iou_threshold
    keep = np.array(keep, dtype=np.intp)
    return keep[np.argsort(-scores[keep], kind="stable")] if keep.size else keep


def emit_triplets(state: GraphState, humans: list[Detection], objects: list[Detection], verb_scores,
                  lam: float = LAMBDA_INFER, threshold: float = 0.0, compat=None) -> list[HOITriplet]:
    """Scored triplets for every pair and verb scoring at least ``threshold``.

    ``compat`` is an optional ``(num_object_classes, V)`` boolean mask of
    allowed object/verb combinations. Output is sorted by descending score,
    ties in pair-then-verb order.
    """
    verb_scores = np.asarray(verb_scores, dtype=F64)
    out = []
    for p, (i, j) in enumerate(state.pairs):
        h, o = humans[i], objects[j]
        final = compose_final_score(h.score, o.score, verb_scores[p], lam)
        for v, s in enumerate(final):
            if compat is not None and not compat[o.cls, v]:
                continue
            if s >= threshold:
                out.append(HOITriplet(h.box, o.box, o.cls, v, float(s)))
    order = sorted(range(len(out)), key=lambda k: -out[k].score)
    return [out[k] for k in order]
