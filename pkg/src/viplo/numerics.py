"""Dense float32 tensor helpers used throughout the package.

Tensors are plain row-major ``numpy.ndarray`` objects stored as float32.
Reductions accumulate in float64 and round back to float32 on return.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

F32 = np.float32
F64 = np.float64


class DimensionError(ValueError):
    """Raised when tensor extents do not line up."""


class DegenerateRowError(ValueError):
    """Raised when a softmax row has no finite entry after masking."""


def as_tensor(x) -> np.ndarray:
    return np.ascontiguousarray(x, dtype=F32)


def matmul(a, b) -> np.ndarray:
    """Matrix product ``a @ b`` with float64 accumulation.

    ``a`` may carry leading batch dimensions; ``b`` must be 2-D.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if b.ndim != 2 or a.ndim < 1 or a.shape[-1] != b.shape[0]:
        raise DimensionError(f"cannot multiply {a.shape} by {b.shape}")
    return (a.astype(F64) @ b.astype(F64)).astype(F32)


def masked_softmax(logits, bias=None, axis: int = -1) -> np.ndarray:
    """Softmax of ``logits + bias`` along ``axis``.

    ``bias`` entries equal to ``-inf`` yield exact zeros. A row whose every
    entry is ``-inf`` raises :class:`DegenerateRowError` instead of producing
    NaNs.
    """
    z = np.asarray(logits, dtype=F64)
    if bias is not None:
        bias = np.asarray(bias, dtype=F64)
        if np.isnan(bias).any() or np.isposinf(bias).any():
            raise ValueError("bias must be finite or -inf")
        z = z + bias
    zmax = np.max(z, axis=axis, keepdims=True)
    if np.isneginf(zmax).any():
        raise DegenerateRowError("softmax row is fully masked")
    e = np.exp(z - zmax)
    return (e / np.sum(e, axis=axis, keepdims=True)).astype(F32)


def layer_norm(x, gain, shift, eps: float = 1e-5) -> np.ndarray:
    x = np.asarray(x, dtype=F64)
    if x.shape[-1] < 1:
        raise DimensionError("layer_norm needs a non-empty last axis")
    mean = x.mean(axis=-1, keepdims=True)
    var = ((x - mean) ** 2).mean(axis=-1, keepdims=True)
    y = (x - mean) / np.sqrt(var + eps)
    return (y * np.asarray(gain, F64) + np.asarray(shift, F64)).astype(F32)


def gelu(x) -> np.ndarray:
    # tanh approximation, as in the original GPT/BERT code
    x = np.asarray(x, dtype=F64)
    y = 0.5 * x * (1.0 + np.tanh(np.sqrt(2.0 / np.pi) * (x + 0.044715 * x**3)))
    return y.astype(F32)


def sigmoid(x) -> np.ndarray:
    x = np.asarray(x, dtype=F64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out.astype(F32)


def bilinear_sample_points(fmap, xs, ys) -> np.ndarray:
    """Bilinearly sample an ``H x W x C`` map at many ``(x, y)`` points.

    ``x`` indexes columns and ``y`` rows; coordinates outside the map are
    clamped to the border. Returns an array of shape ``xs.shape + (C,)``.
    """
    fmap = np.asarray(fmap)
    if fmap.ndim != 3:
        raise DimensionError(f"expected H x W x C map, got {fmap.shape}")
    H, W, _ = fmap.shape
    xs = np.clip(np.asarray(xs, dtype=F64), 0.0, W - 1)
    ys = np.clip(np.asarray(ys, dtype=F64), 0.0, H - 1)
    x0 = np.floor(xs).astype(np.intp)
    y0 = np.floor(ys).astype(np.intp)
    x1 = np.minimum(x0 + 1, W - 1)
    y1 = np.minimum(y0 + 1, H - 1)
    fx = (xs - x0)[..., None]
    fy = (ys - y0)[..., None]
    m = fmap.astype(F64)
    top = m[y0, x0] * (1 - fx) + m[y0, x1] * fx
    bot = m[y1, x0] * (1 - fx) + m[y1, x1] * fx
    return (top * (1 - fy) + bot * fy).astype(F32)


def bilinear_sample(fmap, x: float, y: float) -> np.ndarray:
    return bilinear_sample_points(fmap, np.float64(x), np.float64(y))


@dataclass
class MlpSpec:
    """Fully-connected stack: GELU between hidden layers, identity on output.

    ``weights[i]`` has shape ``(widths[i], widths[i + 1])``.
    """

    widths: list[int]
    weights: list[np.ndarray] = field(default_factory=list)
    biases: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if len(self.widths) < 2 or any(w <= 0 for w in self.widths):
            raise DimensionError(f"bad MLP widths {self.widths}")
        if not self.weights:
            self.weights = [np.zeros((a, b), F32) for a, b in zip(self.widths, self.widths[1:])]
            self.biases = [np.zeros(b, F32) for b in self.widths[1:]]
        self.weights = [as_tensor(w) for w in self.weights]
        self.biases = [as_tensor(b) for b in self.biases]
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.widths[i], self.widths[i + 1]) or b.shape != (self.widths[i + 1],):
                raise DimensionError(f"layer {i}: weight {w.shape} / bias {b.shape} vs widths {self.widths}")
        if len(self.weights) != len(self.widths) - 1:
            raise DimensionError("weight count does not match widths")

    @classmethod
    def random(cls, widths, rng: np.random.Generator, std: float = 0.02) -> "MlpSpec":
        ws = [rng.normal(0.0, std, (a, b)) for a, b in zip(widths, widths[1:])]
        bs = [rng.normal(0.0, std, b) for b in widths[1:]]
        return cls(list(widths), ws, bs)

    @property
    def d_in(self) -> int:
        return self.widths[0]

    @property
    def d_out(self) -> int:
        return self.widths[-1]


def mlp_forward(spec: MlpSpec, x) -> np.ndarray:
    x = np.asarray(x, dtype=F32)
    if x.shape[-1] != spec.d_in:
        raise DimensionError(f"input width {x.shape[-1]} != MLP input width {spec.d_in}")
    n = len(spec.weights)
    for i, (w, b) in enumerate(zip(spec.weights, spec.biases)):
        x = (matmul(x, w).astype(F64) + b).astype(F32)
        if i < n - 1:
            x = gelu(x)
    return x
