"""Pose-conditioned bipartite human/object graph.

Human and object nodes start from MOA region features. Each (human, object)
edge is initialised from 18 handcrafted spatial features. A per-pair joint
attention over the 17 keypoints, scaled by the pose score, weights the
human's joint-local features into one local vector. During message passing
the human node receives ``MBF_o(local ⊕ object, edge)`` (the self-loop) and
the object node receives ``MBF_h(human, edge)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import NUM_JOINTS, Box, JointSet, iou
from .numerics import F32, F64, DimensionError, MlpSpec, gelu, layer_norm, masked_softmax, matmul, mlp_forward

SPATIAL_DIM = 18
JOINT_FEAT_DIM = 6
_EPS = 1e-8


@dataclass(frozen=True)
class GraphConfig:
    feat_dim: int = 768  # backbone width
    node_dim: int = 256
    edge_dim: int = 256
    att_dim: int = 64
    mbf_branches: int = 4
    mbf_dim: int = 64
    num_verbs: int = 117
    steps: int = 2


@dataclass
class MbfParams:
    """Multi-branch fusion weights: ``B`` parallel multiplicative branches."""

    app_w: np.ndarray  # (B, d_app, d_sub)
    app_b: np.ndarray  # (B, d_sub)
    edge_w: np.ndarray  # (B, d_edge, d_sub)
    edge_b: np.ndarray  # (B, d_sub)
    out_w: np.ndarray  # (B * d_sub, d_out)
    out_b: np.ndarray  # (d_out,)

    @classmethod
    def random(cls, d_app, d_edge, d_out, branches, d_sub, rng, std=0.1) -> "MbfParams":
        n = lambda *s: rng.normal(0.0, std, s).astype(F32)  # noqa: E731
        return cls(n(branches, d_app, d_sub), n(branches, d_sub), n(branches, d_edge, d_sub),
                   n(branches, d_sub), n(branches * d_sub, d_out), n(d_out))

    @property
    def d_app(self) -> int:
        return self.app_w.shape[1]

    @property
    def d_edge(self) -> int:
        return self.edge_w.shape[1]


def mbf_fuse(appearance, edge, params: MbfParams) -> np.ndarray:
    """Fuse appearance and edge vectors; leading dimensions broadcast."""
    appearance = np.asarray(appearance, dtype=F64)
    edge = np.asarray(edge, dtype=F64)
    if appearance.shape[-1] != params.d_app or edge.shape[-1] != params.d_edge:
        raise DimensionError(
            f"MBF expects ({params.d_app}, {params.d_edge}), got ({appearance.shape[-1]}, {edge.shape[-1]})")
    a = np.einsum("...i,bij->...bj", appearance, params.app_w.astype(F64)) + params.app_b
    e = np.einsum("...i,bij->...bj", edge, params.edge_w.astype(F64)) + params.edge_b
    branches = gelu(a * e)
    flat = branches.reshape(*branches.shape[:-2], -1)
    return (matmul(flat, params.out_w).astype(F64) + params.out_b).astype(F32)


@dataclass
class GraphParams:
    node_encoder: MlpSpec
    edge_encoder: MlpSpec
    query_mlp: MlpSpec
    key_mlp: MlpSpec
    local_proj: MlpSpec
    mbf_o: MbfParams
    mbf_h: MbfParams
    ln_h: tuple[np.ndarray, np.ndarray]
    ln_o: tuple[np.ndarray, np.ndarray]
    mbf_cls: MbfParams
    cls_w: np.ndarray  # (node_dim, V)
    cls_b: np.ndarray
    config: GraphConfig = field(default_factory=GraphConfig)

    @classmethod
    def random(cls, cfg: GraphConfig, rng: np.random.Generator, std: float = 0.1) -> "GraphParams":
        N, E, A = cfg.node_dim, cfg.edge_dim, cfg.att_dim
        mbf = lambda d_app: MbfParams.random(d_app, E, N, cfg.mbf_branches, cfg.mbf_dim, rng, std)  # noqa: E731
        return cls(
            node_encoder=MlpSpec.random([cfg.feat_dim, N, N], rng, std),
            edge_encoder=MlpSpec.random([SPATIAL_DIM, E, E, E], rng, std),
            query_mlp=MlpSpec.random([SPATIAL_DIM, A, A], rng, std),
            key_mlp=MlpSpec.random([JOINT_FEAT_DIM, A, A], rng, std),
            local_proj=MlpSpec.random([cfg.feat_dim, N], rng, std),
            mbf_o=mbf(2 * N),
            mbf_h=mbf(N),
            ln_h=(np.ones(N, F32), np.zeros(N, F32)),
            ln_o=(np.ones(N, F32), np.zeros(N, F32)),
            mbf_cls=mbf(2 * N),
            cls_w=rng.normal(0.0, std, (N, cfg.num_verbs)).astype(F32),
            cls_b=np.zeros(cfg.num_verbs, F32),
            config=cfg,
        )


@dataclass(frozen=True)
class GraphState:
    humans: np.ndarray  # (n_h, node_dim)
    objects: np.ndarray  # (n_o, node_dim)
    pairs: np.ndarray  # (P, 2) human index, object index
    edges: np.ndarray  # (P, edge_dim)
    alpha: np.ndarray  # (P, 17)
    locals: np.ndarray  # (P, node_dim)
    step: int = 0

    @property
    def num_pairs(self) -> int:
        return len(self.pairs)


def init_node_encodings(region_feats, encoder: MlpSpec, expected: int | None = None) -> np.ndarray:
    region_feats = np.asarray(region_feats, dtype=F32)
    if expected is not None and region_feats.shape[0] != expected:
        raise DimensionError(f"{region_feats.shape[0]} region features for {expected} detections")
    return mlp_forward(encoder, region_feats)


def spatial_pair_features(h, o, image_size: tuple[float, float]) -> np.ndarray:
    """18-dim pairwise spatial feature in normalised image coordinates.

    Layout: human center (2), human wh (2), object center (2), object wh (2),
    object-minus-human center offset (2), center distance, IoU, human area,
    object area, object/human area ratio, union-box wh (2), log aspect-ratio
    difference. Every entry is clipped to [-2, 2].
    """
    h, o = Box.of(h), Box.of(o)
    W, H = float(image_size[0]), float(image_size[1])
    hc = np.array(h.center) / (W, H)
    oc = np.array(o.center) / (W, H)
    hwh = np.array([h.width / W, h.height / H])
    owh = np.array([o.width / W, o.height / H])
    offset = oc - hc
    h_area = hwh[0] * hwh[1]
    o_area = owh[0] * owh[1]
    ratio = o_area / h_area if h_area > 0 else (1.0 if o_area == 0 else 2.0)
    union_wh = np.array([(max(h.x2, o.x2) - min(h.x1, o.x1)) / W, (max(h.y2, o.y2) - min(h.y1, o.y1)) / H])
    aspect = np.log((owh[0] + _EPS) / (owh[1] + _EPS)) - np.log((hwh[0] + _EPS) / (hwh[1] + _EPS))
    feat = np.concatenate([
        hc, hwh, oc, owh, offset,
        [np.hypot(*offset), iou(h, o), h_area, o_area, ratio],
        union_wh, [aspect],
    ])
    return np.clip(feat, -2.0, 2.0).astype(F32)


def joint_pair_features(joints: JointSet, object_box, image_size) -> np.ndarray:
    """``(17, 6)`` raw joint features for one human/object pair."""
    W, H = float(image_size[0]), float(image_size[1])
    oc = np.array(Box.of(object_box).center)
    xy = joints.xy
    delta = oc[None, :] - xy
    dist = np.hypot(delta[:, 0], delta[:, 1])
    unit = np.where(dist[:, None] > 0, delta / np.where(dist > 0, dist, 1.0)[:, None], 0.0)
    return np.column_stack([
        xy[:, 0] / W, xy[:, 1] / H, unit, dist / np.hypot(W, H), joints.confidence,
    ]).astype(F32)


def joint_attention(spatial, joints: JointSet, object_box, q_mlp: MlpSpec, k_mlp: MlpSpec,
                    image_size) -> np.ndarray:
    """Softmax over the 17 joints of ``(Q·K_k) * pose_score``."""
    q = mlp_forward(q_mlp, spatial).astype(F64)
    k = mlp_forward(k_mlp, joint_pair_features(joints, object_box, image_size)).astype(F64)
    logits = (k @ q) * joints.score
    return masked_softmax(logits)


def human_local_feature(alpha, locals_) -> np.ndarray:
    """Attention-weighted sum of the 17 joint-local vectors."""
    alpha = np.asarray(alpha, dtype=F64)
    locals_ = np.asarray(locals_, dtype=F64)
    if alpha.shape[-1] != NUM_JOINTS or locals_.shape[-2] != NUM_JOINTS:
        raise DimensionError(f"alpha {alpha.shape} / locals {locals_.shape} must have 17 joints")
    return np.einsum("...k,...kc->...c", alpha, locals_).astype(F32)


def _aggregate(nodes, index, messages, ln):
    """Residual mean-aggregation update; nodes without messages are left alone."""
    count = np.bincount(index, minlength=len(nodes)).astype(F64)
    total = np.zeros(nodes.shape, F64)
    np.add.at(total, index, messages.astype(F64))
    has = count > 0
    out = nodes.copy()
    if has.any():
        mean = total[has] / count[has, None]
        out[has] = layer_norm(nodes[has].astype(F64) + mean, *ln)
    return out


def message_passing_step(state: GraphState, params: GraphParams) -> GraphState:
    if state.num_pairs == 0:
        return replace(state, step=state.step + 1)
    hi, oi = state.pairs[:, 0], state.pairs[:, 1]
    m_oh = mbf_fuse(np.concatenate([state.locals, state.objects[oi]], axis=1), state.edges, params.mbf_o)
    m_ho = mbf_fuse(state.humans[hi], state.edges, params.mbf_h)
    humans = _aggregate(state.humans, hi, m_oh, params.ln_h)
    objects = _aggregate(state.objects, oi, m_ho, params.ln_o)
    return replace(state, humans=humans, objects=objects, step=state.step + 1)


def all_pairs(num_humans: int, num_objects: int) -> np.ndarray:
    hh, oo = np.meshgrid(np.arange(num_humans), np.arange(num_objects), indexing="ij")
    return np.stack([hh.ravel(), oo.ravel()], axis=1).astype(np.intp)


def build_graph(human_feats, object_feats, human_boxes, object_boxes, joints: list[JointSet],
                human_locals, params: GraphParams, image_size, pairs=None) -> GraphState:
    """Initial graph state: node/edge encodings, joint attention, local features.

    ``human_locals[i]`` is the ``(17, node_dim)`` local feature set of human i.
    """
    N = params.config.node_dim
    n_h, n_o = len(human_boxes), len(object_boxes)
    pairs = all_pairs(n_h, n_o) if pairs is None else np.asarray(pairs, dtype=np.intp).reshape(-1, 2)
    if n_h == 0 or n_o == 0:
        pairs = pairs[:0]
    humans = init_node_encodings(human_feats, params.node_encoder, n_h) if n_h else np.zeros((0, N), F32)
    objects = init_node_encodings(object_feats, params.node_encoder, n_o) if n_o else np.zeros((0, N), F32)
    P = len(pairs)
    edges = np.zeros((P, params.edge_encoder.d_out), F32)
    alpha = np.zeros((P, NUM_JOINTS), F32)
    local = np.zeros((P, N), F32)
    for p, (i, j) in enumerate(pairs):
        sp = spatial_pair_features(human_boxes[i], object_boxes[j], image_size)
        edges[p] = mlp_forward(params.edge_encoder, sp)
        alpha[p] = joint_attention(sp, joints[i], object_boxes[j], params.query_mlp, params.key_mlp, image_size)
        local[p] = human_local_feature(alpha[p], human_locals[i])
    return GraphState(humans, objects, pairs, edges, alpha, local, 0)


def run_graph(human_feats, object_feats, human_boxes, object_boxes, joints, human_locals,
              params: GraphParams, image_size, pairs=None, steps: int | None = None) -> GraphState:
    state = build_graph(human_feats, object_feats, human_boxes, object_boxes, joints, human_locals,
                        params, image_size, pairs)
    for _ in range(params.config.steps if steps is None else steps):
        state = message_passing_step(state, params)
    return state
