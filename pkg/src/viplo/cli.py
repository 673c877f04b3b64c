"""Command-line entry point: ``viplo {infer,eval,bench-moa,bench-kernels,selftest,init-weights}``.

Exit codes: 0 success, 1 usage error, 2 parse/config error, 3 selftest failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import bench, formats, kernels
from .evaluation import evaluate_map
from .hoi_head import LAMBDA_INFER
from .model import Model, ModelConfig
from .pipeline import infer
from .selftest import run_selftest

EXIT_OK, EXIT_USAGE, EXIT_PARSE, EXIT_SELFTEST = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _read(path) -> str:
    return Path(path).read_text(encoding="utf-8")


def _write(text: str, out) -> None:
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def cmd_infer(args) -> int:
    if args.weights:
        model = formats.read_weights(args.weights)
    else:
        model = Model.random(ModelConfig.preset(args.preset), args.seed)
    dets = formats.parse_detections(_read(args.detections))
    poses = formats.parse_poses(_read(args.poses)) if args.poses else formats.PoseFile(dets.image_id)
    image = formats.read_ppm(args.image)
    compat = np.load(args.compat).astype(bool) if args.compat else None
    result = infer(image, dets, poses, model, lam=args.lam, nms_iou=args.nms_iou, score_thresh=args.score_thresh,
                   out_thresh=args.out_thresh, threads=args.threads, compat=compat)
    _write(formats.format_triplets(result), args.out)
    return EXIT_OK


def cmd_eval(args) -> int:
    pred = formats.parse_triplets(_read(args.predictions), scored=True)
    gt = formats.parse_triplets(_read(args.ground_truth), scored=False)
    report = evaluate_map(pred, gt, args.iou)
    _write("\n".join(report.lines()) + "\n", args.out)
    return EXIT_OK


def cmd_bench_moa(args) -> int:
    cells = bench.bench_moa(tuple(args.L), tuple(args.M), args.repeat, args.dim, args.heads, args.seed)
    _write("\n".join(bench.format_moa(cells)) + "\n", args.out)
    return EXIT_OK


def cmd_bench_kernels(args) -> int:
    _write("\n".join(bench.bench_kernels(args.repeat, args.seed)) + "\n", args.out)
    return EXIT_OK


def cmd_selftest(args) -> int:
    if args.weights:
        formats.read_weights(args.weights)
        print(f"weights: {args.weights} parsed")
    return EXIT_OK if run_selftest(inject_fault=args.inject_fault) else EXIT_SELFTEST


def cmd_init_weights(args) -> int:
    formats.save_weights(Model.random(ModelConfig.preset(args.preset), args.seed), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="viplo", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("infer", help="detect HOI triplets in one image")
    s.add_argument("--image", required=True, help="binary PPM (P6) image")
    s.add_argument("--detections", required=True)
    s.add_argument("--poses")
    s.add_argument("--weights", help="weight file; without it a seeded random model is used")
    s.add_argument("--preset", default="tiny", choices=["tiny", "vit-b32", "vit-b16"])
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--lambda", dest="lam", type=float, default=LAMBDA_INFER)
    s.add_argument("--nms-iou", type=float, default=0.5)
    s.add_argument("--score-thresh", type=float, default=0.05)
    s.add_argument("--out-thresh", type=float, default=0.0)
    s.add_argument("--compat", help=".npy boolean (num_object_classes, V) object/verb mask")
    s.add_argument("--threads", type=int, default=1)
    s.add_argument("--out")
    s.set_defaults(func=cmd_infer)

    s = sub.add_parser("eval", help="mAP of predictions against ground truth")
    s.add_argument("--predictions", required=True)
    s.add_argument("--ground-truth", required=True)
    s.add_argument("--iou", type=float, default=0.5)
    s.add_argument("--out")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("bench-moa", help="efficient vs naive MOA timing sweep")
    s.add_argument("--L", type=int, nargs="+", default=[441, 1764])
    s.add_argument("--M", type=int, nargs="+", default=[1, 8, 16])
    s.add_argument("--repeat", type=int, default=3)
    s.add_argument("--dim", type=int, default=32)
    s.add_argument("--heads", type=int, default=2)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_bench_moa)

    s = sub.add_parser("bench-kernels", help="compiled vs pure-Python kernel timing")
    s.add_argument("--repeat", type=int, default=5)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_bench_kernels)

    s = sub.add_parser("selftest", help="run the built-in property checks")
    s.add_argument("--weights", help="also parse this weight file")
    s.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    s.set_defaults(func=cmd_selftest)

    s = sub.add_parser("init-weights", help="write a seeded random weight file")
    s.add_argument("--preset", default="tiny", choices=["tiny", "vit-b32", "vit-b16"])
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_init_weights)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    logging.getLogger(__name__).debug("kernel backend %s", kernels.BACKEND)
    try:
        return args.func(args)
    except (formats.FormatError, OSError, ValueError) as exc:
        print(f"viplo: error: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
