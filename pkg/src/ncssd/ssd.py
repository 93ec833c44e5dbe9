"""Scalar-decay selective state-space kernels.

Two families live here:

* the causal scan ``h_t = A_t h_{t-1} + B_t x_t^T``, ``y_t = C_t^T h_t`` in its
  recurrent (linear-time) and materialized (quadratic) forms, and
* the non-causal variant in which every token reads the same hidden state
  ``H = sum_j (1/A_j) B_j x_j^T``, computed with three tensor contractions.

Shapes: X is [L, D], A is [L], B and C are [L, N]; hidden states are [N, D].
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DimensionError, DomainError

A_MIN = 1e-4
A_MAX = 1e4


@dataclass(frozen=True)
class ScanInputs:
    X: np.ndarray
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        X, A, B, C = self.X, self.A, self.B, self.C
        if X.ndim != 2 or A.ndim != 1 or B.ndim != 2 or C.ndim != 2:
            raise DimensionError(
                f"expected X[L,D], A[L], B[L,N], C[L,N]; got {X.shape}, {A.shape}, {B.shape}, {C.shape}"
            )
        L = X.shape[0]
        if not (A.shape[0] == B.shape[0] == C.shape[0] == L):
            raise DimensionError("leading extents of X, A, B, C must all equal L")
        if B.shape[1] != C.shape[1]:
            raise DimensionError(f"B and C state widths differ: {B.shape[1]} vs {C.shape[1]}")
        if min(X.shape + B.shape) < 1:
            raise DimensionError("L, D, N must all be >= 1")
        if not np.all(np.isfinite(A)) or np.any(A <= 0):
            raise DomainError("A must be finite and strictly positive")

    @property
    def L(self) -> int:
        return self.X.shape[0]

    @property
    def D(self) -> int:
        return self.X.shape[1]

    @property
    def N(self) -> int:
        return self.B.shape[1]


class ScanOutput(NamedTuple):
    Y: np.ndarray
    H_final: np.ndarray


class NcssdGrads(NamedTuple):
    dX: np.ndarray
    dA: np.ndarray
    dB: np.ndarray
    dC: np.ndarray


def clamp_decay(A: np.ndarray) -> np.ndarray:
    return np.clip(A, A_MIN, A_MAX)


def causal_ssd_linear(s: ScanInputs) -> ScanOutput:
    X, A, B, C = s.X, s.A, s.B, s.C
    h = np.zeros((s.N, s.D), dtype=X.dtype)
    Y = np.empty_like(X)
    for t in range(s.L):
        h = A[t] * h + np.outer(B[t], X[t])
        Y[t] = C[t] @ h
    return ScanOutput(Y, h)


def segment_log_decay(A: np.ndarray) -> np.ndarray:
    """``S[i, j] = sum_{k=j+1..i} log A_k`` for i >= j, ``-inf`` above the diagonal.

    Evaluated as a difference of float64 prefix sums.
    """
    L = A.shape[0]
    cs = np.cumsum(np.log(A.astype(np.float64)))
    return np.where(np.tri(L, dtype=bool), cs[:, None] - cs[None, :], -np.inf)


def causal_mask(A: np.ndarray) -> np.ndarray:
    """``M[i, j] = prod_{k=j+1..i} A_k`` for i >= j, zero above the diagonal."""
    return np.exp(segment_log_decay(A)).astype(A.dtype, copy=False)


def causal_transfer_matrix(s: ScanInputs, mask: np.ndarray | None = None) -> np.ndarray:
    """Materialize F with ``F[i, j] = C_i . B_j * M[i, j]``."""
    if mask is None:
        mask = causal_mask(s.A)
    return (s.C @ s.B.T) * mask.astype(s.X.dtype, copy=False)


def causal_ssd_quadratic(s: ScanInputs, block: int = 256) -> ScanOutput:
    """``Y = F X`` with F materialized one block of ``block`` rows at a time.

    Row block [r0, r1) only needs columns [0, r1) since F is lower triangular.
    """
    cs = np.cumsum(np.log(s.A.astype(np.float64)))
    CB_dtype = s.X.dtype
    Y = np.empty_like(s.X)
    for r0 in range(0, s.L, block):
        r1 = min(r0 + block, s.L)
        S = cs[r0:r1, None] - cs[None, :r1]
        S[:, r0:] = np.where(np.tri(r1 - r0, dtype=bool), S[:, r0:], -np.inf)
        F = (s.C[r0:r1] @ s.B[:r1].T) * np.exp(S).astype(CB_dtype, copy=False)
        Y[r0:r1] = F @ s.X[:r1]
    # h_L = sum_j M[L, j] B_j x_j^T
    last = np.exp(cs[-1] - cs).astype(CB_dtype, copy=False)
    H = (s.B * last[:, None]).T @ s.X
    return ScanOutput(Y, H)


def ncssd_forward(s: ScanInputs, include_diag_bias: bool = False, chunk: int = 256) -> ScanOutput:
    """Shared-state kernel as three contractions.

    ``Z = contract(LD,LN->LND)(X, B)``, ``H = contract(L,LND->ND)(m, Z)`` with
    ``m = 1/A``, ``Y = contract(LN,ND->LD)(C, H)``. The first two run over
    token chunks of ``chunk`` so Z stays cache-resident; chunks accumulate
    into H in ascending token order.
    """
    m = (1.0 / s.A).astype(s.X.dtype, copy=False)
    H = np.zeros((s.N, s.D), dtype=s.X.dtype)
    for lo in range(0, s.L, chunk):
        hi = min(lo + chunk, s.L)
        Z = s.B[lo:hi, :, None] * s.X[lo:hi, None, :]
        H += np.tensordot(m[lo:hi], Z, axes=1)
    Y = s.C @ H
    if include_diag_bias:
        # C_i^T (m_i Z_i) = m_i (C_i . B_i) x_i
        Y = Y + (m * np.einsum("ln,ln->l", s.C, s.B))[:, None] * s.X
    return ScanOutput(Y, H)


def ncssd_noncausal_matrix(s: ScanInputs) -> np.ndarray:
    """Quadratic form of the shared-state kernel: ``F[i, j] = (C_i . B_j) / A_j``."""
    return (s.C @ s.B.T) * (1.0 / s.A).astype(s.X.dtype, copy=False)[None, :]


def ncssd_backward(s: ScanInputs, dY: np.ndarray) -> NcssdGrads:
    """Gradients of the bias-free non-causal output with respect to X, A, B, C."""
    if dY.shape != s.X.shape:
        raise DimensionError(f"dY shape {dY.shape} != Y shape {s.X.shape}")
    m = 1.0 / s.A
    H = ncssd_forward(s).H_final
    dC = dY @ H.T
    dH = s.C.T @ dY
    BdH = s.B @ dH  # [L, D]: row j is B_j^T dH
    dX = m[:, None] * BdH
    dB = m[:, None] * (s.X @ dH.T)
    dA = -(m * m) * np.einsum("ld,ld->l", BdH, s.X)
    return NcssdGrads(dX, dA.astype(s.X.dtype, copy=False), dB, dC)


def bidirectional_identity_check(s: ScanInputs) -> float:
    """Max abs gap between (forward prefix + backward suffix) and (global sum + own term).

    Both sides are evaluated directly on the weighted states ``(1/A_j) Z_j``.
    """
    m = 1.0 / s.A
    W = m[:, None, None] * np.einsum("ln,ld->lnd", s.B, s.X)
    fwd = np.cumsum(W, axis=0)
    bwd = np.cumsum(W[::-1], axis=0)[::-1]
    lhs = fwd + bwd
    rhs = W.sum(axis=0)[None] + W
    return float(np.max(np.abs(lhs - rhs)))


def multihead_ncssd(
    X: np.ndarray,
    A: np.ndarray,
    B: np.ndarray,
    C: np.ndarray,
    num_heads: int,
    include_diag_bias: bool = False,
) -> np.ndarray:
    """Run ``ncssd_forward`` independently on each head's feature slice.

    X is [L, heads*Dh] and A is [L, heads]. B and C are either shared
    [L, N] or per head [L, heads, N].
    """
    L, width = X.shape
    if num_heads < 1 or width % num_heads:
        raise DimensionError(f"feature width {width} is not divisible by {num_heads} heads")
    if A.ndim == 1:
        A = A[:, None]
    if A.shape != (L, num_heads):
        raise DimensionError(f"A must be [L, heads] = {(L, num_heads)}, got {A.shape}")
    dh = width // num_heads
    out = np.empty_like(X)
    for h in range(num_heads):
        Bh = B[:, h] if B.ndim == 3 else B
        Ch = C[:, h] if C.ndim == 3 else C
        cols = slice(h * dh, (h + 1) * dh)
        s = ScanInputs(np.ascontiguousarray(X[:, cols]), A[:, h], Bh, Ch)
        out[:, cols] = ncssd_forward(s, include_diag_bias).Y
    return out
