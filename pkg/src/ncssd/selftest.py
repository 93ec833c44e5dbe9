"""Fast invariant and oracle checks runnable without pytest.

Each check returns a measured error (or 0/1 for exact checks) that is
compared against its tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from . import oracles
from .codecs import decode_flo, decode_pfm, encode_flo, encode_pfm
from .config import BlockConfig, MatchConfig, ModelConfig
from .matching import (
    FieldEstimate,
    build_disparity_volume,
    build_flow_volume,
    build_pyramid,
    conv_gru,
    convex_upsample,
    lookup_disparity,
    lookup_flow,
)
from .metrics import somer
from .ssd import (
    ScanInputs,
    bidirectional_identity_check,
    causal_ssd_linear,
    causal_ssd_quadratic,
    ncssd_backward,
    ncssd_forward,
)
from .weights import dump_weights, init_weights, parse_weights


@dataclass(frozen=True)
class CheckResult:
    name: str
    value: float
    tol: float

    @property
    def ok(self) -> bool:
        return bool(np.isfinite(self.value) and self.value <= self.tol)

    def line(self) -> str:
        return f"{'PASS' if self.ok else 'FAIL'}  {self.name:<28} {self.value:.3e} (tol {self.tol:.0e})"


def _scan(rng, L, D, N):
    return ScanInputs(rng.standard_normal((L, D)), rng.uniform(0.5, 1.5, L),
                      rng.standard_normal((L, N)), rng.standard_normal((L, N)))


def _maxabs(a, b):
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))


def check_duality(rng):
    s = _scan(rng, 32, 4, 3)
    return _maxabs(causal_ssd_linear(s).Y, causal_ssd_quadratic(s).Y)


def check_causal_oracle(rng):
    s = _scan(rng, 12, 3, 2)
    return _maxabs(causal_ssd_linear(s).Y, oracles.causal_scan_loop(s.X, s.A, s.B, s.C))


def check_ncssd_oracle(rng):
    s = _scan(rng, 24, 4, 3)
    return max(_maxabs(ncssd_forward(s, bias).Y, oracles.ncssd_loop(s.X, s.A, s.B, s.C, bias))
               for bias in (False, True))


def check_bidirectional(rng):
    return bidirectional_identity_check(_scan(rng, 64, 4, 3))


def check_permutation(rng):
    s = _scan(rng, 16, 3, 2)
    p = rng.permutation(16)
    sp = ScanInputs(s.X[p], s.A[p], s.B[p], s.C[p])
    return _maxabs(ncssd_forward(sp).Y, ncssd_forward(s).Y[p])


def check_gradients(rng):
    s = _scan(rng, 6, 3, 2)
    dY = rng.standard_normal(s.X.shape)
    g = ncssd_backward(s, dY)
    h = 1e-6
    worst = 0.0
    for field_name, grad in zip(("X", "A", "B", "C"), g):
        base = getattr(s, field_name)
        num = np.zeros_like(base)
        for idx in np.ndindex(base.shape):
            vals = []
            for sign in (1, -1):
                arr = base.copy()
                arr[idx] += sign * h
                vals.append(float(np.sum(ncssd_forward(replace(s, **{field_name: arr})).Y * dY)))
            num[idx] = (vals[0] - vals[1]) / (2 * h)
        worst = max(worst, float(np.linalg.norm(grad - num) / max(np.linalg.norm(num), 1e-12)))
    return worst


def check_volumes(rng):
    fl, fr = rng.standard_normal((2, 4, 5, 6))
    return max(_maxabs(build_flow_volume(fl, fr), oracles.flow_volume_loop(fl, fr)),
               _maxabs(build_disparity_volume(fl, fr), oracles.disparity_volume_loop(fl, fr)))


def check_lookups(rng):
    pf = build_pyramid(rng.standard_normal((4, 4, 8, 8)), "flow", 2)
    flow = rng.uniform(-3, 3, (2, 4, 4))
    e1 = _maxabs(lookup_flow(pf, FieldEstimate("flow", flow), 1), oracles.lookup_flow_loop(pf.levels, flow, 1))
    pd = build_pyramid(rng.standard_normal((3, 8, 8)), "disparity", 2)
    disp = rng.uniform(0, 5, (1, 3, 8))
    e2 = _maxabs(lookup_disparity(pd, FieldEstimate("disparity", disp), 1),
                 oracles.lookup_disparity_loop(pd.levels, disp, 1))
    return max(e1, e2)


def check_gru(rng):
    h, x = rng.standard_normal((3, 4, 4)), rng.standard_normal((2, 4, 4))
    ws = {}
    for g in "zrq":
        ws[f"g.conv{g}.weight"] = rng.standard_normal((3, 5, 3, 3)) * 0.3
        ws[f"g.conv{g}.bias"] = rng.standard_normal(3)
    ref = oracles.conv_gru_loop(h, x, *(ws[f"g.conv{g}.{p}"] for g in "zrq" for p in ("weight", "bias")))
    return _maxabs(conv_gru(h, x, ws, "g"), ref)


def check_convex_upsample(rng):
    f, lg = rng.standard_normal((2, 3, 4)), rng.standard_normal((36, 3, 4))
    return _maxabs(convex_upsample(f, lg, 2, True), oracles.convex_upsample_loop(f, lg, 2, True))


def check_somer(rng):
    return max(abs(somer(42.93, 0.54, 196.20) - 15.06), abs(somer(33.88, 2.25, 236.58) - 2.75))


def check_formats(rng):
    f = rng.standard_normal((2, 3, 5)).astype(np.float32)
    d = rng.uniform(0, 9, (1, 4, 3)).astype(np.float32)
    cfg = ModelConfig(BlockConfig(embed_dim=8, state_dim=2, num_heads=2, num_blocks=1),
                      MatchConfig(context_dim=8, hidden_dim=4, motion_dim=4, corr_levels=2, radius=1))
    w = init_weights(cfg, seed=1)
    back = parse_weights(dump_weights(w))
    same = (decode_flo(encode_flo(f)).tobytes() == f.tobytes()
            and decode_pfm(encode_pfm(d)).tobytes() == d.tobytes()
            and all(back[k].tobytes() == w[k].tobytes() for k in w))
    return 0.0 if same else 1.0


CHECKS: list[tuple[str, Callable, float]] = [
    ("ssd duality", check_duality, 1e-9),
    ("causal scan oracle", check_causal_oracle, 1e-10),
    ("ncssd oracle", check_ncssd_oracle, 1e-10),
    ("bidirectional identity", check_bidirectional, 1e-9),
    ("permutation equivariance", check_permutation, 1e-12),
    ("ncssd gradients", check_gradients, 1e-4),
    ("correlation volumes", check_volumes, 1e-10),
    ("pyramid lookups", check_lookups, 1e-10),
    ("conv gru", check_gru, 1e-10),
    ("convex upsampling", check_convex_upsample, 1e-10),
    ("somer rows", check_somer, 0.02),
    ("file round trips", check_formats, 0.0),
]


def run_selftest(seed: int = 0) -> list[CheckResult]:
    out = []
    for name, fn, tol in CHECKS:
        rng = np.random.default_rng(seed)
        try:
            value = float(fn(rng))
        except Exception:  # a crashing check is a failed check
            value = float("inf")
        out.append(CheckResult(name, value, tol))
    return out
