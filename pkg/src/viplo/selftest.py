"""Built-in property checks run by ``viplo selftest``.

Every check compares the library against an independent brute-force route
and reports pass/fail. ``inject_fault`` swaps in a deliberately wrong
factored-area variant so the geometry sweep can be shown to catch it.
"""
from __future__ import annotations

import numpy as np

from . import kernels
from .evaluation import evaluate_map
from .formats import TripletFile
from .geometry import Box, JointSet, PatchGrid, boundary_fractions, clip_to_grid, iou, overlap_areas_factored
from .hoi_head import HOITriplet, focal_loss
from .moa_backbone import LayerParams, moa_final_layer, moa_final_layer_naive, region_masks
from .numerics import MlpSpec
from .pose_graph import JOINT_FEAT_DIM, SPATIAL_DIM, joint_attention, spatial_pair_features


def random_grid_and_box(rng):
    grid = PatchGrid(int(rng.choice([1, 3, 14, 16, 32])), int(rng.integers(1, 12)), int(rng.integers(1, 12)))
    W, H = grid.image_width, grid.image_height
    while True:
        # allow boxes hanging off the image; they get clipped
        x1, x2 = np.sort(rng.uniform(-0.2 * W, 1.2 * W, 2))
        y1, y2 = np.sort(rng.uniform(-0.2 * H, 1.2 * H, 2))
        box = Box(x1, y1, x2, y2)
        clipped = box.clip(W, H)
        if clipped.width > 1e-6 and clipped.height > 1e-6:
            return box, grid


def brute_force_mask(box, grid):
    b = clip_to_grid(box, grid)
    p = grid.patch_size
    out = [1.0]
    for r in range(grid.height):
        for c in range(grid.width):
            w = max(0.0, min(b.x2, (c + 1) * p) - max(b.x1, c * p))
            h = max(0.0, min(b.y2, (r + 1) * p) - max(b.y1, r * p))
            out.append(w * h / (p * p))
    return np.array(out)


def faulty_factored(box, grid):
    """Literal transcription that takes the right-hand column fraction from
    the bottom edge instead of the right edge."""
    b = clip_to_grid(box, grid)
    p = grid.patch_size
    a, c, fx = boundary_fractions(b.x1 / p, b.x2 / p)
    r, d, fy = boundary_fractions(b.y1 / p, b.y2 / p)
    if len(fx) > 1:
        fx = fx.copy()
        fx[-1] = fy[-1]
    out = np.zeros(grid.num_patches + 1)
    out[0] = 1.0
    out[1:].reshape(grid.height, grid.width)[r:d, a:c] = np.outer(fy, fx)
    return out


def check_geometry(n=10_000, seed=0, inject_fault=False):
    rng = np.random.default_rng(seed)
    factored = faulty_factored if inject_fault else overlap_areas_factored
    worst = worst_kernel = worst_area = 0.0
    for _ in range(n):
        box, grid = random_grid_and_box(rng)
        ref = brute_force_mask(box, grid)
        got = factored(box, grid)
        c = clip_to_grid(box, grid)
        k = kernels.overlap_masks(np.array([c.as_tuple()]), grid.patch_size, grid.width, grid.height)[0]
        worst = max(worst, float(np.max(np.abs(got - ref))))
        worst_kernel = max(worst_kernel, float(np.max(np.abs(k - ref))))
        worst_area = max(worst_area, abs(float(np.sum(got[1:])) * grid.patch_size**2 - c.area))
    ok = worst < 1e-6 and worst_kernel < 1e-6 and worst_area < 1e-3
    return ok, f"{n} boxes: max|factored-oracle|={worst:.2e}, kernel={worst_kernel:.2e}, area err={worst_area:.2e}px^2"


def check_moa(n=30, seed=1):
    rng = np.random.default_rng(seed)
    grid = PatchGrid(16, 4, 4)
    worst = 0.0
    for _ in range(n):
        x = rng.normal(0, 1, (17, 32)).astype(np.float32)
        lp = LayerParams.random(32, 64, rng, std=0.2)
        boxes = [random_grid_box(rng, grid) for _ in range(int(rng.integers(1, 17)))]
        masks = region_masks(boxes, grid)
        eff, _ = moa_final_layer(x, masks, lp, 2, grid)
        worst = max(worst, float(np.max(np.abs(eff.cls_per_region - moa_final_layer_naive(x, masks, lp, 2)))))
    return worst < 1e-5, f"{n} cases: max|efficient-naive|={worst:.2e}"


def random_grid_box(rng, grid):
    W, H = grid.image_width, grid.image_height
    x1, x2 = np.sort(rng.uniform(0, W, 2))
    y1, y2 = np.sort(rng.uniform(0, H, 2))
    return (x1, y1, max(x2, x1 + 0.5), max(y2, y1 + 0.5))


def random_pose(rng, box: Box, score_zero=False):
    kp = np.column_stack([rng.uniform(box.x1, box.x2, 17), rng.uniform(box.y1, box.y2, 17),
                          np.zeros(17) if score_zero else rng.uniform(0, 1, 17)])
    return JointSet(kp)


def check_alpha(n=1000, seed=2):
    rng = np.random.default_rng(seed)
    q = MlpSpec.random([SPATIAL_DIM, 8, 8], rng, 1.0)
    k = MlpSpec.random([JOINT_FEAT_DIM, 8, 8], rng, 1.0)
    worst = worst_uniform = 0.0
    size = (640.0, 480.0)
    for _ in range(n):
        h = Box(*random_grid_box(rng, PatchGrid(1, 640, 480)))
        o = Box(*random_grid_box(rng, PatchGrid(1, 640, 480)))
        sp = spatial_pair_features(h, o, size)
        a = joint_attention(sp, random_pose(rng, h), o, q, k, size)
        worst = max(worst, abs(float(np.sum(a, dtype=np.float64)) - 1.0))
        a0 = joint_attention(sp, random_pose(rng, h, score_zero=True), o, q, k, size)
        worst_uniform = max(worst_uniform, float(np.max(np.abs(a0 - np.float32(1 / 17)))))
    ok = worst <= 1e-6 and worst_uniform == 0.0
    return ok, f"{n} pairs: max|sum-1|={worst:.2e}, s=0 max|a-f32(1/17)|={worst_uniform:.2e}"


def check_focal(seed=3):
    rng = np.random.default_rng(seed)
    y_hat = rng.uniform(0.01, 0.99, 1000)
    y = rng.integers(0, 2, 1000)
    alpha = rng.uniform(0.05, 0.95, 1000)
    gamma = rng.uniform(0, 3, 1000)
    alpha[:100], gamma[:100] = 0.5, 0.2
    h = 1e-5
    worst = 0.0
    for p, t, a, g in zip(y_hat, y, alpha, gamma):
        _, grad = focal_loss(p, t, a, g)
        fd = (focal_loss(p + h, t, a, g)[0] - focal_loss(p - h, t, a, g)[0]) / (2 * h)
        worst = max(worst, abs(grad - fd) / max(abs(fd), 1e-12))
    return worst < 1e-5, f"1000 points: max rel err={worst:.2e}"


def crafted_map_fixture():
    """Three ground-truth triplets and six predictions with a hand-checkable AP."""
    B = lambda *v: Box(*map(float, v))  # noqa: E731
    gt = TripletFile({
        "a": [HOITriplet(B(0, 0, 10, 10), B(20, 20, 30, 30), 1, 0, 1.0),
              HOITriplet(B(50, 50, 60, 60), B(70, 70, 80, 80), 1, 0, 1.0)],
        "b": [HOITriplet(B(0, 0, 10, 10), B(10, 0, 20, 10), 2, 1, 1.0)],
    }, scored=False)
    pred = TripletFile({
        "a": [HOITriplet(B(0, 0, 10, 10), B(20, 20, 30, 30), 1, 0, 0.9),
              HOITriplet(B(1, 0, 11, 10), B(20, 21, 30, 31), 1, 0, 0.8),
              HOITriplet(B(50, 50, 60, 60), B(74, 74, 84, 84), 1, 0, 0.7),
              HOITriplet(B(50, 51, 60, 61), B(70, 70, 80, 80), 1, 0, 0.6)],
        "b": [HOITriplet(B(0, 0, 10, 10), B(10, 0, 20, 10), 2, 0, 0.95),
              HOITriplet(B(0, 0, 10, 10), B(10, 0, 20, 10), 2, 1, 0.5)],
    })
    return pred, gt


def brute_force_map(pred: TripletFile, gt: TripletFile, thr=0.5):
    cats = sorted({(t.object_class, t.verb) for rows in gt.images.values() for t in rows})
    aps = []
    for cat in cats:
        gts = [(img, t) for img, rows in gt.images.items() for t in rows if (t.object_class, t.verb) == cat]
        ps = [(img, t) for img, rows in pred.images.items() for t in rows if (t.object_class, t.verb) == cat]
        ps = sorted(ps, key=lambda e: -e[1].score)
        taken = set()
        flags = []
        for img, p in ps:
            options = [(min(iou(p.human_box, g.human_box), iou(p.object_box, g.object_box)), gi)
                       for gi, (gimg, g) in enumerate(gts) if gimg == img and gi not in taken]
            options = [o for o in options if o[0] >= thr]
            if options:
                taken.add(max(options)[1])
            flags.append(bool(options))
        # AP = mean over ground truths of the best precision at or beyond its recall level
        precisions = [sum(flags[:k + 1]) / (k + 1) for k in range(len(flags))]
        ap = 0.0
        for k, f in enumerate(flags):
            if f:
                ap += max(precisions[k:]) / len(gts)
        aps.append(ap)
    return sum(aps) / len(aps)


def check_map():
    pred, gt = crafted_map_fixture()
    got = evaluate_map(pred, gt).mean_ap
    ref = brute_force_map(pred, gt)
    perfect = evaluate_map(TripletFile({k: list(v) for k, v in gt.images.items()}), gt).mean_ap
    ok = abs(got - ref) < 1e-6 and abs(perfect - 1.0) < 1e-9
    return ok, f"crafted mAP={got:.6f} (oracle {ref:.6f}), perfect={perfect:.9f}"


def run_selftest(inject_fault: bool = False, out=print) -> bool:
    checks = [
        ("geometry oracle sweep", lambda: check_geometry(inject_fault=inject_fault)),
        ("MOA efficient == naive", check_moa),
        ("joint attention normalisation", check_alpha),
        ("focal loss gradient", check_focal),
        ("mAP oracle", check_map),
    ]
    all_ok = True
    out(f"kernel backend: {kernels.BACKEND}")
    for name, fn in checks:
        ok, detail = fn()
        all_ok &= ok
        out(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    return all_ok

