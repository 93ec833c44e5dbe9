"""Run the pipeline on a synthetic pair and print per-iteration statistics of the estimate.

With untrained weights the numbers only show that refinement is stable and
deterministic, not that it converges to a true field.

    python scripts/refinement_trace.py --task flow --size 128x128 --iters 12
"""

import argparse
import time

import numpy as np

from ncssd.bench import limited_threads
from ncssd.blocks import ImagePair
from ncssd.config import ModelConfig
from ncssd.pipeline import TaskRequest, estimate
from ncssd.weights import init_weights, load_weights


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--task", choices=("flow", "disparity"), default="flow")
    ap.add_argument("--size", default="128x128")
    ap.add_argument("--iters", type=int, default=12)
    ap.add_argument("--weights")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--shift", type=int, default=3, help="horizontal shift of the second image in pixels")
    args = ap.parse_args()

    h, w = (int(v) for v in args.size.split("x"))
    weights = load_weights(args.weights) if args.weights else init_weights(ModelConfig(), seed=args.seed)
    rng = np.random.default_rng(args.seed)
    left = rng.uniform(-1, 1, (3, h, w)).astype(np.float32)
    right = np.roll(left, -args.shift if args.task == "disparity" else args.shift, axis=2)
    t0 = time.perf_counter()
    with limited_threads():
        _, outs = estimate(TaskRequest(args.task, ImagePair(left, right), iterations=args.iters), weights)
    print(f"{len(outs)} iterations in {time.perf_counter() - t0:.2f} s")
    prev = np.zeros_like(outs[0].values)
    for t, o in enumerate(outs, 1):
        v = o.values
        step = float(np.sqrt(((v - prev) ** 2).sum(0)).mean())
        print(f"iter {t:>2}: mean {v.mean(axis=(1, 2)).round(4)}  |update| {step:.4f}")
        prev = v


if __name__ == "__main__":
    main()
