"""Minimal pre-norm ViT encoder with region-masked CLS attention at the last layer.

Earlier layers are plain self-attention. In the last layer the query/key/value
projections are computed once; the patch tokens go through the ordinary
unmasked layer, while every region re-runs only the CLS row of attention with
``log(mask)`` added to the logits, followed by the usual residual and MLP.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .geometry import PatchGrid, clip_to_grid
from .numerics import F32, F64, DimensionError, as_tensor, gelu, layer_norm, masked_softmax, matmul


class DegenerateMaskError(ValueError):
    """Raised when region masks cover no patch at all."""

    def __init__(self, regions):
        self.regions = list(regions)
        super().__init__(f"region masks with no patch overlap: {self.regions}")


@dataclass(frozen=True)
class ViTConfig:
    patch_size: int = 32
    embed_dim: int = 768
    num_heads: int = 12
    num_layers: int = 12
    mlp_ratio: int = 4
    image_size: int = 672

    def __post_init__(self):
        if self.patch_size <= 0 or self.image_size % self.patch_size:
            raise ValueError(f"image size {self.image_size} not divisible by patch size {self.patch_size}")
        if self.embed_dim % self.num_heads:
            raise ValueError(f"embed dim {self.embed_dim} not divisible by {self.num_heads} heads")
        if self.num_layers < 1:
            raise ValueError("need at least one layer")

    @property
    def grid(self) -> PatchGrid:
        return PatchGrid.square(self.image_size, self.patch_size)

    @property
    def seq_len(self) -> int:
        return self.grid.num_patches + 1

    @property
    def head_dim(self) -> int:
        return self.embed_dim // self.num_heads


@dataclass
class LayerParams:
    ln1_g: np.ndarray
    ln1_b: np.ndarray
    qkv_w: np.ndarray  # (C, 3C)
    qkv_b: np.ndarray
    proj_w: np.ndarray  # (C, C)
    proj_b: np.ndarray
    ln2_g: np.ndarray
    ln2_b: np.ndarray
    fc1_w: np.ndarray  # (C, ratio*C)
    fc1_b: np.ndarray
    fc2_w: np.ndarray  # (ratio*C, C)
    fc2_b: np.ndarray

    @classmethod
    def random(cls, dim: int, hidden: int, rng, std=0.02) -> "LayerParams":
        n = lambda *s: rng.normal(0.0, std, s).astype(F32)  # noqa: E731
        return cls(
            np.ones(dim, F32), np.zeros(dim, F32),
            n(dim, 3 * dim), n(3 * dim),
            n(dim, dim), n(dim),
            np.ones(dim, F32), np.zeros(dim, F32),
            n(dim, hidden), n(hidden),
            n(hidden, dim), n(dim),
        )

    @classmethod
    def zeros(cls, dim: int, hidden: int) -> "LayerParams":
        z = lambda *s: np.zeros(s, F32)  # noqa: E731
        return cls(np.ones(dim, F32), z(dim), z(dim, 3 * dim), z(3 * dim), z(dim, dim), z(dim),
                   np.ones(dim, F32), z(dim), z(dim, hidden), z(hidden), z(hidden, dim), z(dim))


@dataclass
class ViTParams:
    patch_w: np.ndarray  # (3 * p * p, C)
    patch_b: np.ndarray
    cls_token: np.ndarray  # (C,)
    pos_embed: np.ndarray  # (L + 1, C)
    layers: list[LayerParams] = field(default_factory=list)

    @classmethod
    def random(cls, cfg: ViTConfig, rng: np.random.Generator, std: float = 0.02) -> "ViTParams":
        C, p = cfg.embed_dim, cfg.patch_size
        return cls(
            patch_w=rng.normal(0, std, (3 * p * p, C)).astype(F32),
            patch_b=np.zeros(C, F32),
            cls_token=rng.normal(0, std, C).astype(F32),
            pos_embed=rng.normal(0, std, (cfg.seq_len, C)).astype(F32),
            layers=[LayerParams.random(C, cfg.mlp_ratio * C, rng, std) for _ in range(cfg.num_layers)],
        )


@dataclass
class BackboneOutput:
    cls_per_region: np.ndarray  # (M, C)
    patch_map: np.ndarray | None  # (H, W, C)
    penultimate_cls: np.ndarray  # (C,)


def patch_embed(image, cfg: ViTConfig, params: ViTParams) -> np.ndarray:
    """Project non-overlapping patches, prepend CLS, add position embeddings."""
    image = np.asarray(image, dtype=F32)
    s, p = cfg.image_size, cfg.patch_size
    if image.shape != (s, s, 3):
        raise DimensionError(f"expected {s}x{s}x3 image, got {image.shape}")
    g = s // p
    patches = image.reshape(g, p, g, p, 3).transpose(0, 2, 1, 3, 4).reshape(g * g, p * p * 3)
    tokens = (matmul(patches, params.patch_w).astype(F64) + params.patch_b).astype(F32)
    seq = np.concatenate([params.cls_token[None, :], tokens], axis=0)
    if params.pos_embed.shape != seq.shape:
        raise DimensionError(f"position embedding {params.pos_embed.shape} vs sequence {seq.shape}")
    return (seq.astype(F64) + params.pos_embed).astype(F32)


def interpolate_pos_embed(pos, from_grid: int, to_grid: int) -> np.ndarray:
    """Bilinearly resize the patch rows of a position embedding to a new square grid.

    Corner rows are preserved exactly (align-corners sampling); the CLS row
    is copied unchanged.
    """
    pos = np.asarray(pos, dtype=F32)
    if pos.ndim != 2 or pos.shape[0] != from_grid * from_grid + 1:
        raise DimensionError(f"position table {pos.shape} is not a {from_grid}x{from_grid} grid plus CLS")
    if from_grid == to_grid:
        return pos.copy()
    from .numerics import bilinear_sample_points

    C = pos.shape[1]
    grid = pos[1:].reshape(from_grid, from_grid, C)
    step = (from_grid - 1) / (to_grid - 1) if to_grid > 1 else 0.0
    coords = np.arange(to_grid) * step
    ys, xs = np.meshgrid(coords, coords, indexing="ij")
    resized = bilinear_sample_points(grid, xs, ys).reshape(to_grid * to_grid, C)
    return np.concatenate([pos[:1], resized], axis=0)


def _split_heads(x: np.ndarray, heads: int) -> np.ndarray:
    n, c = x.shape
    return x.reshape(n, heads, c // heads).transpose(1, 0, 2)


def _qkv(x: np.ndarray, lp: LayerParams, heads: int):
    h = layer_norm(x, lp.ln1_g, lp.ln1_b)
    qkv = (matmul(h, lp.qkv_w).astype(F64) + lp.qkv_b)
    C = x.shape[1]
    q, k, v = (_split_heads(qkv[:, i * C:(i + 1) * C], heads) for i in range(3))
    return q, k, v


def _mlp_block(x: np.ndarray, lp: LayerParams) -> np.ndarray:
    h = layer_norm(x, lp.ln2_g, lp.ln2_b)
    h = gelu(matmul(h, lp.fc1_w).astype(F64) + lp.fc1_b)
    h = matmul(h, lp.fc2_w).astype(F64) + lp.fc2_b
    return (x.astype(F64) + h).astype(F32)


def _attn_out(x: np.ndarray, heads_out: np.ndarray, lp: LayerParams) -> np.ndarray:
    # heads_out: (..., heads, d) -> (..., C)
    merged = heads_out.reshape(*heads_out.shape[:-2], -1)
    return (x.astype(F64) + matmul(merged, lp.proj_w).astype(F64) + lp.proj_b).astype(F32)


def encoder_layer(x, lp: LayerParams, num_heads: int, bias=None) -> np.ndarray:
    """Pre-norm transformer block; ``bias`` is added to every head's logits."""
    x = as_tensor(x)
    n, C = x.shape
    if lp.qkv_w.shape != (C, 3 * C):
        raise DimensionError(f"layer expects width {lp.qkv_w.shape[0]}, got {C}")
    q, k, v = _qkv(x, lp, num_heads)
    d = C // num_heads
    logits = (q @ k.transpose(0, 2, 1)) / np.sqrt(d)
    attn = masked_softmax(logits, None if bias is None else np.broadcast_to(bias, logits.shape))
    out = (attn.astype(F64) @ v).transpose(1, 0, 2)
    return _mlp_block(_attn_out(x, out, lp), lp)


def run_encoder(seq, params: ViTParams, num_heads: int, layers: int | None = None) -> np.ndarray:
    x = as_tensor(seq)
    for lp in params.layers[: layers if layers is not None else len(params.layers)]:
        x = encoder_layer(x, lp, num_heads)
    return x


def unflatten(tokens, grid: PatchGrid) -> np.ndarray:
    tokens = np.asarray(tokens)
    if tokens.ndim != 2 or tokens.shape[0] != grid.num_patches + 1:
        raise DimensionError(f"{tokens.shape[0]} tokens do not match a {grid.height}x{grid.width} grid plus CLS")
    return tokens[1:].reshape(grid.height, grid.width, tokens.shape[1])


def region_masks(boxes, grid: PatchGrid, mode: str = "moa") -> np.ndarray:
    """``(M, L + 1)`` masks for pixel boxes; ``mode`` is moa, attend_all or mask_all."""
    clipped = np.array([clip_to_grid(b, grid).as_tuple() for b in boxes], dtype=F64).reshape(-1, 4)
    masks = kernels.overlap_masks(clipped, grid.patch_size, grid.width, grid.height)
    if mode == "moa":
        return masks
    body = masks[:, 1:]
    partial = (body > 0.0) & (body < 1.0)
    if mode == "attend_all":
        body[partial] = 1.0
    elif mode == "mask_all":
        body[partial] = 0.0
    else:
        raise ValueError(f"unknown mask mode {mode!r}")
    return masks


def _check_masks(masks: np.ndarray, n: int) -> None:
    if masks.ndim != 2 or masks.shape[1] != n or masks.shape[0] < 1:
        raise DimensionError(f"masks {masks.shape} do not match sequence length {n}")
    if (masks < 0).any() or (masks > 1).any():
        raise ValueError("mask entries must lie in [0, 1]")


def moa_final_layer(penultimate, masks, lp: LayerParams, num_heads: int, grid: PatchGrid,
                    threads: int = 1, strict: bool = True, with_patch_map: bool = True):
    """Final layer with one masked CLS attention row per region.

    Returns ``(BackboneOutput, degenerate)`` where ``degenerate`` lists the
    regions whose mask covers no patch. With ``strict`` such regions raise
    :class:`DegenerateMaskError`; otherwise their features are zero.
    ``with_patch_map=False`` skips the shared unmasked patch-token pass
    (``patch_map`` is then ``None``); region features are unaffected.
    """
    x = as_tensor(penultimate)
    n, C = x.shape
    masks = np.asarray(masks, dtype=F64)
    _check_masks(masks, n)
    degenerate = [int(i) for i in np.flatnonzero(~(masks[:, 1:] > 0).any(axis=1))]
    if degenerate and strict:
        raise DegenerateMaskError(degenerate)

    q, k, v = _qkv(x, lp, num_heads)
    d = C // num_heads
    kt = k.transpose(0, 2, 1)
    full = None
    if with_patch_map:
        attn = masked_softmax((q @ kt) / np.sqrt(d))
        full = _mlp_block(_attn_out(x, (attn.astype(F64) @ v).transpose(1, 0, 2), lp), lp)

    cls_scores = (q[:, :1, :] @ kt)[:, 0, :] / np.sqrt(d)
    ok = np.setdiff1d(np.arange(masks.shape[0]), degenerate)
    feats = np.zeros((masks.shape[0], C), F32)
    if ok.size:
        chunks = np.array_split(ok, max(1, min(threads, ok.size)))

        def work(idx):
            heads_out = kernels.cls_attention(cls_scores, masks[idx], v)
            cls_rows = _attn_out(np.broadcast_to(x[0], (len(idx), C)), heads_out, lp)
            return idx, _mlp_block(cls_rows, lp)

        if len(chunks) == 1:
            results = [work(chunks[0])]
        else:
            with ThreadPoolExecutor(len(chunks)) as pool:
                results = list(pool.map(work, chunks))
        for idx, out in results:
            feats[idx] = out

    patch_map = unflatten(full, grid) if full is not None else None
    out = BackboneOutput(cls_per_region=feats, patch_map=patch_map, penultimate_cls=x[0].copy())
    return out, degenerate


def moa_final_layer_naive(penultimate, masks, lp: LayerParams, num_heads: int) -> np.ndarray:
    """Reference: rerun the whole last layer per region with a full bias matrix."""
    x = as_tensor(penultimate)
    n = x.shape[0]
    masks = np.asarray(masks, dtype=F64)
    _check_masks(masks, n)
    feats = []
    for m in masks:
        bias = np.zeros((n, n))
        with np.errstate(divide="ignore"):
            bias[0] = np.log(m)
        feats.append(encoder_layer(x, lp, num_heads, bias)[0])
    return np.stack(feats)


def extract_features(image, boxes, cfg: ViTConfig, params: ViTParams, mask_mode: str = "moa",
                     threads: int = 1) -> BackboneOutput:
    """Full backbone pass: one MOA CLS feature per box plus the final patch map."""
    seq = patch_embed(image, cfg, params)
    penult = run_encoder(seq, params, cfg.num_heads, cfg.num_layers - 1)
    grid = cfg.grid
    if len(boxes) == 0:
        masks = np.ones((1, cfg.seq_len))
        out, _ = moa_final_layer(penult, masks, params.layers[-1], cfg.num_heads, grid, threads)
        out.cls_per_region = out.cls_per_region[:0]
        return out
    masks = region_masks(boxes, grid, mask_mode)
    out, _ = moa_final_layer(penult, masks, params.layers[-1], cfg.num_heads, grid, threads)
    return out
