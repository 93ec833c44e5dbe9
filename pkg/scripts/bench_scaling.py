"""Measure NC-SSD vs quadratic-form runtime over sequence length and fit log-log slopes.

    python scripts/bench_scaling.py --lengths 256,512,1024,2048,4096 --csv scaling.csv
"""

import argparse
from pathlib import Path

import numpy as np

from ncssd.bench import bench_kernels


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--lengths", default="256,512,1024,2048,4096")
    ap.add_argument("--dim", type=int, default=64)
    ap.add_argument("--state", type=int, default=16)
    ap.add_argument("--trials", type=int, default=5)
    ap.add_argument("--float64", action="store_true")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--csv")
    args = ap.parse_args()

    rep = bench_kernels([int(v) for v in args.lengths.split(",")], D=args.dim, N=args.state,
                        trials=args.trials, dtype=np.float64 if args.float64 else np.float32, seed=args.seed)
    print(rep.to_table())
    ok = 0.8 <= rep.slope_ncssd <= 1.3 and 1.7 <= rep.slope_quadratic <= 2.3
    print("slopes within [0.8, 1.3] / [1.7, 2.3]:", "yes" if ok else "no")
    if args.csv:
        Path(args.csv).write_text(rep.to_csv())


if __name__ == "__main__":
    main()
