"""Compare the compiled and pure-Python kernels, then run the MOA sweep.

    python benchmarks/bench_kernels.py [--quick]
"""
import argparse

from viplo import kernels
from viplo.bench import bench_kernels, bench_moa, format_moa


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--quick", action="store_true", help="small MOA sweep only")
    args = ap.parse_args()
    print(f"backends: {', '.join(kernels.BACKENDS)} (active: {kernels.BACKEND})")
    print("\n".join(bench_kernels(repeat=5)))
    print()
    sweep = dict(L_sweep=(64, 256), M_sweep=(1, 8)) if args.quick else {}
    print("\n".join(format_moa(bench_moa(**sweep))))


if __name__ == "__main__":
    main()
