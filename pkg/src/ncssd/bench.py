"""Timing, memory and complexity-scaling measurement."""

from __future__ import annotations

import csv
import io
import os
import statistics
import time
import tracemalloc
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from .ssd import ScanInputs, causal_ssd_linear, causal_ssd_quadratic, ncssd_forward, ncssd_noncausal_matrix


def thread_cap() -> int:
    try:
        return max(1, int(os.environ.get("NCSSD_THREADS", "1")))
    except ValueError:
        return 1


@contextmanager
def limited_threads(n: int | None = None):
    with threadpool_limits(limits=n or thread_cap()):
        yield


def median_time(fn: Callable[[], object], repeat: int = 5, warmup: int = 1, timer=time.perf_counter):
    """Median wall-clock of ``repeat`` calls after ``warmup`` untimed calls."""
    if repeat < 1:
        raise ValueError("repeat must be >= 1")
    for _ in range(warmup):
        fn()
    times = []
    for _ in range(repeat):
        t0 = timer()
        fn()
        times.append(timer() - t0)
    return statistics.median(times), times


def peak_memory_mb(fn: Callable[[], object]) -> float:
    """Peak traced allocation (numpy buffers included) during one call, in MB."""
    tracemalloc.start()
    try:
        tracemalloc.reset_peak()
        fn()
        _, peak = tracemalloc.get_traced_memory()
    finally:
        tracemalloc.stop()
    return peak / 2**20


def loglog_slope(xs: Sequence[float], ts: Sequence[float]) -> float:
    return float(np.polyfit(np.log(xs), np.log(ts), 1)[0])


def random_scan(L: int, D: int, N: int, rng: np.random.Generator, dtype=np.float64,
                a_range=(0.5, 1.0)) -> ScanInputs:
    return ScanInputs(
        rng.standard_normal((L, D)).astype(dtype),
        rng.uniform(*a_range, size=L).astype(dtype),
        rng.standard_normal((L, N)).astype(dtype),
        rng.standard_normal((L, N)).astype(dtype),
    )


def _rel(a, b) -> float:
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-30))


@dataclass
class ScalingReport:
    lengths: list[int]
    t_ncssd: list[float] = field(default_factory=list)
    t_quadratic: list[float] = field(default_factory=list)
    dual_rel_err: list[float] = field(default_factory=list)  # causal recurrence vs materialized form
    noncausal_rel_err: list[float] = field(default_factory=list)  # contraction vs materialized form

    @property
    def slope_ncssd(self) -> float:
        return loglog_slope(self.lengths, self.t_ncssd)

    @property
    def slope_quadratic(self) -> float:
        return loglog_slope(self.lengths, self.t_quadratic)

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf)
        wr.writerow(["L", "ncssd_s", "quadratic_s", "dual_rel_err", "noncausal_rel_err"])
        for row in zip(self.lengths, self.t_ncssd, self.t_quadratic, self.dual_rel_err, self.noncausal_rel_err):
            wr.writerow([row[0], *(f"{v:.6g}" for v in row[1:])])
        return buf.getvalue()

    def to_table(self) -> str:
        lines = [f"{'L':>6} {'ncssd (ms)':>12} {'quadratic (ms)':>15} {'dual err':>10} {'nc err':>10}"]
        for L, a, b, e1, e2 in zip(self.lengths, self.t_ncssd, self.t_quadratic, self.dual_rel_err, self.noncausal_rel_err):
            lines.append(f"{L:>6} {a * 1e3:>12.3f} {b * 1e3:>15.3f} {e1:>10.2e} {e2:>10.2e}")
        lines.append(f"log-log slope: ncssd {self.slope_ncssd:.3f}, quadratic {self.slope_quadratic:.3f}")
        return "\n".join(lines)


def _batch(fn, n):
    def run():
        for _ in range(n):
            fn()
    return run


def bench_kernels(lengths: Sequence[int], D: int = 64, N: int = 16, trials: int = 5,
                  dtype=np.float32, seed: int = 0, check: bool = True) -> ScalingReport:
    """Median runtime of the shared-state kernel and the quadratic causal form per sequence length.

    Before timing, each length is checked: the causal recurrence must match
    the quadratic form, and the contraction kernel its materialized matrix.
    Trials visit the lengths round-robin so slow drift in machine speed hits
    every length alike, and short kernels run in batches so each timed sample
    is tens of milliseconds.
    """
    lengths = list(lengths)
    if lengths != sorted(lengths):
        raise ValueError("lengths must be ascending")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    rep = ScalingReport(lengths)
    scans = [random_scan(L, D, N, rng, dtype) for L in lengths]
    with limited_threads():
        jobs = []
        for L, s in zip(lengths, scans):
            if check:
                rep.dual_rel_err.append(_rel(causal_ssd_quadratic(s).Y, causal_ssd_linear(s).Y))
                rep.noncausal_rel_err.append(_rel(ncssd_forward(s).Y, ncssd_noncausal_matrix(s) @ s.X))
            else:
                rep.dual_rel_err.append(float("nan"))
                rep.noncausal_rel_err.append(float("nan"))
            n_nc = max(1, 16384 // L)
            n_q = max(1, 2**20 // (L * L))
            jobs.append((_batch(lambda s=s: ncssd_forward(s), n_nc), n_nc,
                         _batch(lambda s=s: causal_ssd_quadratic(s), n_q), n_q))
        samples = [([], []) for _ in lengths]
        for fn_nc, _, fn_q, _ in jobs:  # warmup
            fn_nc()
            fn_q()
        for _ in range(trials):
            for (fn_nc, n_nc, fn_q, n_q), (t_nc, t_q) in zip(jobs, samples):
                t_nc.append(median_time(fn_nc, 1, warmup=0)[0] / n_nc)
                t_q.append(median_time(fn_q, 1, warmup=0)[0] / n_q)
        for t_nc, t_q in samples:
            rep.t_ncssd.append(statistics.median(t_nc))
            rep.t_quadratic.append(statistics.median(t_q))
    return rep
