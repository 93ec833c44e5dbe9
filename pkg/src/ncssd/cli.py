"""Command-line entry point.

Exit codes: 0 ok, 1 metric or selftest failure, 2 I/O error, 3 config error.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from .bench import bench_kernels, limited_threads, median_time, peak_memory_mb
from .blocks import ImagePair
from .codecs import (
    read_disparity_pfm,
    read_flow_flo,
    read_image,
    read_mask,
    write_disparity_pfm,
    write_disparity_visualization,
    write_flow_flo,
    write_flow_visualization,
)
from .config import ModelConfig
from .errors import CodecError, ConfigError, DomainError, MetricError, StageError, WeightFileError
from .metrics import MetricReport, evaluate, somer
from .pipeline import TaskRequest, estimate
from .selftest import run_selftest
from .weights import init_weights, load_weights, save_weights

EXIT_OK, EXIT_FAIL, EXIT_IO, EXIT_CONFIG = 0, 1, 2, 3


def _run(args) -> tuple[np.ndarray, float]:
    """Run the pipeline once; returns the final field and wall-clock seconds."""
    w = load_weights(args.weights)
    pair = ImagePair(read_image(args.left), read_image(args.right))
    req = TaskRequest(args.task, pair, iterations=args.iters, radius=args.radius)
    t0 = time.perf_counter()
    with limited_threads():
        final, _ = estimate(req, w)
    return final.values, time.perf_counter() - t0


def cmd_selftest(args) -> int:
    results = run_selftest(args.seed)
    for r in results:
        print(r.line())
    failed = sum(not r.ok for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return EXIT_FAIL if failed else EXIT_OK


def cmd_estimate(args) -> int:
    field, secs = _run(args)
    print(f"{args.task}: {field.shape[1]}x{field.shape[2]} in {secs:.2f} s, "
          f"range [{field.min():.3f}, {field.max():.3f}]")
    if args.out:
        (write_flow_flo if args.task == "flow" else write_disparity_pfm)(args.out, field)
    if args.viz:
        (write_flow_visualization if args.task == "flow" else write_disparity_visualization)(args.viz, field)
    return EXIT_OK


def _read_field(path, task) -> np.ndarray:
    return read_flow_flo(path) if task == "flow" else read_disparity_pfm(path)


def cmd_eval(args) -> int:
    gt = _read_field(args.gt, args.task)
    mask = read_mask(args.mask) if args.mask else None
    fps = None
    if args.pred:
        pred = _read_field(args.pred, args.task)
    else:
        if not (args.left and args.right and args.weights):
            raise ConfigError("eval needs --pred or all of --left, --right, --weights")
        pred, secs = _run(args)
        fps = 1.0 / secs
    rep = evaluate(args.task, pred, gt, mask, fps=fps)
    print(rep.to_json())
    print(rep.to_table())
    return EXIT_OK


def _parse_size(text: str) -> tuple[int, int]:
    try:
        h, w = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise ConfigError(f"--size must look like HxW, got {text!r}") from None
    return h, w


def cmd_bench(args) -> int:
    if args.kernels == args.pipeline:
        raise ConfigError("choose exactly one of --kernels or --pipeline")
    if args.kernels:
        lengths = [int(v) for v in args.lengths.split(",")]
        rep = bench_kernels(lengths, D=args.dim, N=args.state, trials=args.repeat)
        print(rep.to_table())
        if args.csv:
            Path(args.csv).write_text(rep.to_csv())
        return EXIT_OK

    if args.repeat < 5:
        raise ConfigError("--repeat must be >= 5 for pipeline timing")
    h, w = _parse_size(args.size)
    weights = load_weights(args.weights) if args.weights else init_weights(
        ModelConfig.load(args.config) if args.config else ModelConfig(), seed=args.seed)
    rng = np.random.default_rng(args.seed)
    pair = ImagePair(*rng.uniform(-1, 1, (2, 3, h, w)).astype(np.float32))
    req = TaskRequest(args.task, pair, iterations=args.iters)
    with limited_threads():
        t, _ = median_time(lambda: estimate(req, weights), args.repeat)
        mem = peak_memory_mb(lambda: estimate(req, weights))
    fps = 1.0 / t
    score = somer(fps, args.epe, mem) if args.epe is not None and mem > 1 else None
    rep = MetricReport(epe=args.epe, fps=fps, memory_mb=mem, somer=score)
    print(rep.to_table())
    if args.csv:
        Path(args.csv).write_text(
            "task,height,width,iters,fps,memory_mb,epe,somer\n"
            f"{args.task},{h},{w},{args.iters or ''},{fps:.6g},{mem:.6g},"
            f"{'' if args.epe is None else args.epe},{'' if score is None else f'{score:.6g}'}\n")
    return EXIT_OK


def cmd_init_weights(args) -> int:
    cfg = ModelConfig.load(args.config) if args.config else ModelConfig()
    dtype = np.float64 if args.dtype == "float64" else np.float32
    w = init_weights(cfg, seed=args.seed, dtype=dtype)
    save_weights(w, args.out)
    print(f"wrote {len(w)} tensors ({sum(v.size for v in w.values())} values) to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ncssd", description="Dense flow / disparity with non-causal SSD features.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("selftest", help="run the invariant and oracle checks")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(fn=cmd_selftest)

    def add_run_args(sp, required):
        sp.add_argument("--left", required=required)
        sp.add_argument("--right", required=required)
        sp.add_argument("--weights", required=required)
        sp.add_argument("--iters", type=int)
        sp.add_argument("--radius", type=int)

    s = sub.add_parser("estimate", help="estimate flow or disparity for an image pair")
    s.add_argument("--task", choices=("flow", "disparity"), required=True)
    add_run_args(s, True)
    s.add_argument("--out", help=".flo for flow, .pfm for disparity")
    s.add_argument("--viz", help="PNG visualization")
    s.set_defaults(fn=cmd_estimate)

    s = sub.add_parser("eval", help="score a prediction against ground truth")
    s.add_argument("--task", choices=("flow", "disparity"), required=True)
    s.add_argument("--gt", required=True)
    s.add_argument("--mask")
    s.add_argument("--pred")
    add_run_args(s, False)
    s.set_defaults(fn=cmd_eval)

    s = sub.add_parser("bench", help="kernel scaling or pipeline throughput")
    s.add_argument("--kernels", action="store_true")
    s.add_argument("--pipeline", action="store_true")
    s.add_argument("--lengths", default="256,512,1024,2048,4096")
    s.add_argument("--dim", type=int, default=64)
    s.add_argument("--state", type=int, default=16)
    s.add_argument("--task", choices=("flow", "disparity"), default="flow")
    s.add_argument("--size", default="128x128")
    s.add_argument("--iters", type=int)
    s.add_argument("--repeat", type=int, default=5)
    s.add_argument("--weights")
    s.add_argument("--config")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--epe", type=float, help="EPE to combine with the measured speed and memory into SOMER")
    s.add_argument("--csv")
    s.set_defaults(fn=cmd_bench)

    s = sub.add_parser("init-weights", help="write deterministic random weights")
    s.add_argument("--config")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--dtype", choices=("float32", "float64"), default="float32")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_init_weights)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:  # argparse usage errors are configuration errors here
        return EXIT_CONFIG if e.code else EXIT_OK
    try:
        return args.fn(args)
    except (ConfigError, DomainError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG if isinstance(e.cause, ConfigError) else EXIT_IO
    except MetricError as e:
        print(f"metric error: {e}", file=sys.stderr)
        return EXIT_FAIL
    except (OSError, CodecError, WeightFileError) as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
