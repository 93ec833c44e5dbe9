"""Brute-force loop references used by the self-test and the test-suite.

Each function here is written from the defining formula with explicit Python
loops and shares no code with the vectorized implementations it checks.
"""

from __future__ import annotations

import numpy as np


def matmul_loop(a, b):
    m, k = a.shape
    p = b.shape[1]
    c = np.zeros((m, p), dtype=np.float64)
    for i in range(m):
        for j in range(p):
            acc = 0.0
            for t in range(k):
                acc += float(a[i, t]) * float(b[t, j])
            c[i, j] = acc
    return c


def conv2d_loop(x, weight, bias, stride=1, padding=0):
    cin, h, w = x.shape
    cout, _, kh, kw = weight.shape
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (w + 2 * padding - kw) // stride + 1
    out = np.zeros((cout, ho, wo))
    for o in range(cout):
        for i in range(ho):
            for j in range(wo):
                acc = 0.0 if bias is None else float(bias[o])
                for c in range(cin):
                    for u in range(kh):
                        for v in range(kw):
                            yy = i * stride + u - padding
                            xx = j * stride + v - padding
                            if 0 <= yy < h and 0 <= xx < w:
                                acc += float(weight[o, c, u, v]) * float(x[c, yy, xx])
                out[o, i, j] = acc
    return out


def causal_scan_loop(X, A, B, C):
    """``y_i = sum_{j<=i} (prod_{k=j+1..i} A_k) (C_i . B_j) x_j``."""
    L, D = X.shape
    Y = np.zeros((L, D))
    for i in range(L):
        for j in range(i + 1):
            decay = 1.0
            for k in range(j + 1, i + 1):
                decay *= float(A[k])
            Y[i] += decay * float(np.dot(C[i], B[j])) * X[j]
    return Y


def ncssd_loop(X, A, B, C, include_diag_bias=False):
    """``Y_i = sum_j (1/A_j)(C_i . B_j) x_j`` plus the optional own-token term."""
    L, D = X.shape
    Y = np.zeros((L, D))
    for i in range(L):
        for j in range(L):
            Y[i] += (1.0 / float(A[j])) * float(np.dot(C[i], B[j])) * X[j]
        if include_diag_bias:
            Y[i] += (1.0 / float(A[i])) * float(np.dot(C[i], B[i])) * X[i]
    return Y


def flow_volume_loop(fl, fr):
    D, H, W = fl.shape
    out = np.zeros((H, W, H, W))
    for i in range(H):
        for j in range(W):
            for k in range(H):
                for l in range(W):
                    out[i, j, k, l] = sum(float(fl[h, i, j]) * float(fr[h, k, l]) for h in range(D))
    return out


def disparity_volume_loop(f, g):
    D, H, W = f.shape
    out = np.zeros((H, W, W))
    for i in range(H):
        for j in range(W):
            for k in range(W):
                out[i, j, k] = sum(float(f[h, i, j]) * float(g[h, i, k]) for h in range(D))
    return out


def bilinear_point(img, y, x):
    """Border-clamped bilinear value of a 2-D array at (y, x)."""
    h, w = img.shape
    y = min(max(y, 0.0), h - 1.0)
    x = min(max(x, 0.0), w - 1.0)
    y0, x0 = int(np.floor(y)), int(np.floor(x))
    y1, x1 = min(y0 + 1, h - 1), min(x0 + 1, w - 1)
    ty, tx = y - y0, x - x0
    return (
        img[y0, x0] * (1 - ty) * (1 - tx)
        + img[y0, x1] * (1 - ty) * tx
        + img[y1, x0] * ty * (1 - tx)
        + img[y1, x1] * ty * tx
    )


def linear_point(line, x):
    n = line.shape[0]
    x = min(max(x, 0.0), n - 1.0)
    x0 = int(np.floor(x))
    x1 = min(x0 + 1, n - 1)
    t = x - x0
    return line[x0] * (1 - t) + line[x1] * t


def lookup_flow_loop(levels, flow, r):
    H, W = flow.shape[1:]
    feats = []
    for i in range(H):
        row = []
        for j in range(W):
            v = []
            for k, vol in enumerate(levels):
                cy = (i + flow[1, i, j]) / 2**k
                cx = (j + flow[0, i, j]) / 2**k
                for dy in range(-r, r + 1):
                    for dx in range(-r, r + 1):
                        v.append(bilinear_point(vol[i, j], cy + dy, cx + dx))
            row.append(v)
        feats.append(row)
    return np.array(feats)


def lookup_disparity_loop(levels, disp, r):
    H, W = disp.shape[1:]
    out = np.zeros((H, W, len(levels) * (2 * r + 1)))
    for i in range(H):
        for j in range(W):
            c = 0
            for k, vol in enumerate(levels):
                centre = (j - disp[0, i, j]) / 2**k
                for dx in range(-r, r + 1):
                    out[i, j, c] = linear_point(vol[i, j], centre + dx)
                    c += 1
    return out


def convex_upsample_loop(field, logits, s, scale_values):
    c, h, w = field.shape
    out = np.zeros((c, s * h, s * w))
    for i in range(h):
        for j in range(w):
            for a in range(s):
                for b in range(s):
                    lg = np.array([logits[n * s * s + a * s + b, i, j] for n in range(9)])
                    e = np.exp(lg - lg.max())
                    wts = e / e.sum()
                    for ch in range(c):
                        acc = 0.0
                        n = 0
                        for dy in (-1, 0, 1):
                            for dx in (-1, 0, 1):
                                yy = min(max(i + dy, 0), h - 1)
                                xx = min(max(j + dx, 0), w - 1)
                                acc += wts[n] * field[ch, yy, xx]
                                n += 1
                        out[ch, i * s + a, j * s + b] = acc * (s if scale_values else 1)
    return out


def _sig(v):
    return 1.0 / (1.0 + np.exp(-v))


def conv_gru_loop(h, x, wz, bz, wr, br, wq, bq):
    """ConvGRU with 3x3 zero-padded gates, one gate at a time."""
    hx = np.concatenate([h, x], axis=0)
    z = _sig(conv2d_loop(hx, wz, bz, padding=1))
    r = _sig(conv2d_loop(hx, wr, br, padding=1))
    q = np.tanh(conv2d_loop(np.concatenate([r * h, x], axis=0), wq, bq, padding=1))
    return (1 - z) * h + z * q


def epe_loop(pred, gt, mask):
    total, n = 0.0, 0
    for i in range(gt.shape[1]):
        for j in range(gt.shape[2]):
            if mask[i, j]:
                total += float(np.sqrt(sum((pred[c, i, j] - gt[c, i, j]) ** 2 for c in range(gt.shape[0]))))
                n += 1
    return total / n
