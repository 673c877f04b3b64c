"""Slow, obviously-correct reference implementations used only by tests."""
import math

import numpy as np


def matmul_loops(a, b):
    a = np.asarray(a, np.float64)
    b = np.asarray(b, np.float64)
    m, k = a.shape
    n = b.shape[1]
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            s = 0.0
            for t in range(k):
                s += a[i, t] * b[t, j]
            out[i, j] = s
    return out


def softmax_direct(z):
    e = [math.exp(v) if v != -math.inf else 0.0 for v in z]
    tot = sum(e)
    return [v / tot for v in e]


def layer_norm_two_pass(row, gain, shift, eps=1e-5):
    n = len(row)
    mean = sum(row) / n
    var = sum((v - mean) ** 2 for v in row) / n
    return [(v - mean) / math.sqrt(var + eps) * g + s for v, g, s in zip(row, gain, shift)]


def bilinear_four_term(fmap, x, y):
    """Explicit four-neighbour weighted sum for in-range coordinates."""
    H, W, _ = fmap.shape
    x = min(max(x, 0.0), W - 1)
    y = min(max(y, 0.0), H - 1)
    x0, y0 = int(math.floor(x)), int(math.floor(y))
    x1, y1 = min(x0 + 1, W - 1), min(y0 + 1, H - 1)
    ax, ay = x - x0, y - y0
    return ((1 - ax) * (1 - ay) * fmap[y0, x0] + ax * (1 - ay) * fmap[y0, x1]
            + (1 - ax) * ay * fmap[y1, x0] + ax * ay * fmap[y1, x1])


def roi_align_points(fmap, box_map, R, s):
    """ROIAlign by listing every sample point explicitly (map coordinates)."""
    x1, y1, x2, y2 = box_map
    bw, bh = (x2 - x1) / R, (y2 - y1) / R
    out = np.zeros((R, R, fmap.shape[2]))
    for i in range(R):
        for j in range(R):
            acc = 0.0
            for a in range(s):
                for b in range(s):
                    acc = acc + bilinear_four_term(fmap, x1 + (j + (b + 0.5) / s) * bw, y1 + (i + (a + 0.5) / s) * bh)
            out[i, j] = acc / (s * s)
    return out


def roi_align_dense(fmap, box_map, R, factor=8):
    """Bin averages of the bilinear surface using factor x factor samples per bin."""
    return roi_align_points(fmap, box_map, R, factor)


def gelu(x):
    return 0.5 * x * (1.0 + math.tanh(math.sqrt(2.0 / math.pi) * (x + 0.044715 * x**3)))


def mlp_loops(spec, x):
    h = list(map(float, x))
    for li, (w, b) in enumerate(zip(spec.weights, spec.biases)):
        out = []
        for j in range(w.shape[1]):
            out.append(sum(h[i] * float(w[i, j]) for i in range(w.shape[0])) + float(b[j]))
        if li < len(spec.weights) - 1:
            out = [gelu(v) for v in out]
        h = out
    return np.array(h)


def encoder_layer_loops(x, lp, heads, bias=None):
    """Pre-norm block with explicit per-head attention loops."""
    x = np.asarray(x, np.float64)
    n, C = x.shape
    d = C // heads

    def ln(v, g, b):
        return np.array([layer_norm_two_pass(r, g, b) for r in v])

    h = ln(x, lp.ln1_g, lp.ln1_b)
    qkv = h @ lp.qkv_w.astype(np.float64) + lp.qkv_b
    q, k, v = qkv[:, :C], qkv[:, C:2 * C], qkv[:, 2 * C:]
    att = np.zeros((n, C))
    for hd in range(heads):
        sl = slice(hd * d, (hd + 1) * d)
        for i in range(n):
            logits = [float(q[i, sl] @ k[j, sl]) / math.sqrt(d) + (0.0 if bias is None else bias[i, j])
                      for j in range(n)]
            w = softmax_direct(logits)
            att[i, sl] = sum(w[j] * v[j, sl] for j in range(n))
    x = x + att @ lp.proj_w.astype(np.float64) + lp.proj_b
    h = ln(x, lp.ln2_g, lp.ln2_b)
    h = h @ lp.fc1_w.astype(np.float64) + lp.fc1_b
    h = np.vectorize(gelu)(h)
    return x + h @ lp.fc2_w.astype(np.float64) + lp.fc2_b
