"""Independent brute-force reference implementations used to freeze expected
values.  Everything here is written as plain loops over definitions, on
purpose: these must not share code paths with the package under test.
"""
from __future__ import annotations

import numpy as np


def conv2d_ref(x, kernel, bias, stride=1, padding=0, groups=1):
    """Direct nested-loop cross-correlation with zero padding."""
    n, cin, h, w = x.shape
    cout, cin_g, kh, kw = kernel.shape
    assert cin == cin_g * groups
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (w + 2 * padding - kw) // stride + 1
    xp = np.zeros((n, cin, h + 2 * padding, w + 2 * padding), dtype=np.float64)
    xp[:, :, padding : padding + h, padding : padding + w] = x
    out = np.zeros((n, cout, ho, wo), dtype=np.float64)
    cout_g = cout // groups
    for b in range(n):
        for oc in range(cout):
            gi = oc // cout_g
            for i in range(ho):
                for j in range(wo):
                    acc = 0.0
                    for ic in range(cin_g):
                        for ki in range(kh):
                            for kj in range(kw):
                                acc += (
                                    xp[b, gi * cin_g + ic, i * stride + ki, j * stride + kj]
                                    * kernel[oc, ic, ki, kj]
                                )
                    out[b, oc, i, j] = acc + bias[oc]
    return out


def conv2d_transpose_ref(x, kernel, bias, stride=1, padding=0, output_padding=0):
    """Scatter-accumulate transposed convolution; kernel is (in, out, kh, kw)."""
    n, cin, h, w = x.shape
    cin_k, cout, kh, kw = kernel.shape
    assert cin == cin_k
    ho = (h - 1) * stride - 2 * padding + kh + output_padding
    wo = (w - 1) * stride - 2 * padding + kw + output_padding
    full = np.zeros((n, cout, ho + 2 * padding, wo + 2 * padding), dtype=np.float64)
    for b in range(n):
        for ic in range(cin):
            for i in range(h):
                for j in range(w):
                    v = x[b, ic, i, j]
                    for oc in range(cout):
                        for ki in range(kh):
                            for kj in range(kw):
                                full[b, oc, i * stride + ki, j * stride + kj] += v * kernel[ic, oc, ki, kj]
    out = full[:, :, padding : padding + ho, padding : padding + wo]
    return out + bias[None, :, None, None]


def maxpool2d_ref(x, window, stride):
    n, c, h, w = x.shape
    ho = (h - window) // stride + 1
    wo = (w - window) // stride + 1
    out = np.zeros((n, c, ho, wo), dtype=np.float64)
    for b in range(n):
        for ch in range(c):
            for i in range(ho):
                for j in range(wo):
                    best = -np.inf
                    for ki in range(window):
                        for kj in range(window):
                            best = max(best, x[b, ch, i * stride + ki, j * stride + kj])
                    out[b, ch, i, j] = best
    return out


def dense_ref(x, weight, bias):
    n, f = x.shape
    f2, k = weight.shape
    assert f == f2
    out = np.zeros((n, k), dtype=np.float64)
    for b in range(n):
        for o in range(k):
            acc = 0.0
            for i in range(f):
                acc += x[b, i] * weight[i, o]
            out[b, o] = acc + bias[o]
    return out


def interp1d_ref(row, target_len):
    """Half-pixel-center linear interpolation of one axis."""
    src_len = len(row)
    out = np.zeros(target_len, dtype=np.float64)
    ratio = src_len / target_len
    for i in range(target_len):
        s = (i + 0.5) * ratio - 0.5
        s0 = int(np.floor(s))
        t = s - s0
        lo = min(max(s0, 0), src_len - 1)
        hi = min(max(s0 + 1, 0), src_len - 1)
        out[i] = (1 - t) * row[lo] + t * row[hi]
    return out


def resize_bilinear_ref(img, th, tw):
    """Separable two-pass interpolation: rows first, then columns."""
    h, w = img.shape
    tmp = np.zeros((h, tw), dtype=np.float64)
    for i in range(h):
        tmp[i] = interp1d_ref(img[i].astype(np.float64), tw)
    out = np.zeros((th, tw), dtype=np.float64)
    for j in range(tw):
        out[:, j] = interp1d_ref(tmp[:, j], th)
    return out


def auc_pairs_ref(scores, labels):
    """Brute-force Mann-Whitney pair counting; ties count 0.5."""
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    assert pos and neg
    total = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                total += 1.0
            elif p == q:
                total += 0.5
    return total / (len(pos) * len(neg))


def count_conv_params_ref(out_ch, in_ch, kh, kw, groups=1, bias=True):
    return out_ch * (in_ch // groups) * kh * kw + (out_ch if bias else 0)


def count_dense_params_ref(in_f, out_f, bias=True):
    return in_f * out_f + (out_f if bias else 0)
