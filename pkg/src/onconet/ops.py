"""Differentiable numerical operations the networks are composed of.

Convolutions use gather (im2col) / scatter (col2im) kernels built from k*k
strided slices plus BLAS matmuls; the convolution convention is
cross-correlation (no kernel flip) with zero padding.  Reductions accumulate
in float64 and store results in the input dtype.
"""
from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from . import autograd
from .tensor import ShapeError, Tensor, check_finite

__all__ = [
    "ConvParams",
    "conv2d",
    "conv2d_transpose",
    "maxpool2d",
    "selu",
    "prelu",
    "global_avg_pool",
    "dense",
    "concat_channels",
    "slice_channels",
    "softmax",
    "cross_entropy",
    "add",
    "mul",
    "scale",
    "tsum",
    "tmean",
    "reshape",
    "flatten2d",
    "SELU_LAMBDA",
    "SELU_ALPHA",
    "record_preactivations",
]

# Self-normalizing activation constants (fixed by the activation's definition).
SELU_LAMBDA = 1.0507009873554805
SELU_ALPHA = 1.6732632423543772

LOG_CLAMP = 1e-12


# -- pre-activation probe (used by gradcheck kink handling) ---------------------

_preact_sink: list[np.ndarray] | None = None


class PreactProbe:
    """Drains pre-activation values recorded since the previous call."""

    def __call__(self) -> np.ndarray:
        global _preact_sink
        assert _preact_sink is not None
        vals = _preact_sink
        _preact_sink = []
        if not vals:
            return np.empty(0)
        return np.concatenate([v.reshape(-1) for v in vals])


@contextmanager
def record_preactivations():
    """Collect the inputs of kinked activations during enclosed evaluations."""
    global _preact_sink
    prev = _preact_sink
    _preact_sink = []
    try:
        yield PreactProbe()
    finally:
        _preact_sink = prev


def _note_preact(x: np.ndarray) -> None:
    if _preact_sink is not None:
        _preact_sink.append(x.copy())


# -- parameter bundles -----------------------------------------------------------


@dataclass
class ConvParams:
    """Weights and geometry of one (possibly grouped) convolution.

    For ``conv2d`` the kernel layout is (out_ch, in_ch/groups, kH, kW) with a
    bias of length out_ch.  For ``conv2d_transpose`` the same bundle is read as
    (in_ch, out_ch, kH, kW) with a bias of length out_ch = kernel.shape[1].
    """

    kernel: Tensor
    bias: Tensor
    stride: int = 1
    padding: int = 0
    groups: int = 1

    def __post_init__(self) -> None:
        if self.kernel.ndim != 4:
            raise ShapeError(f"conv kernel must be 4-d, got shape {self.kernel.shape}")
        if self.bias.ndim != 1:
            raise ShapeError(f"conv bias must be 1-d, got shape {self.bias.shape}")
        if self.bias.shape[0] not in (self.kernel.shape[0], self.kernel.shape[1]):
            raise ShapeError(
                f"bias length {self.bias.shape[0]} matches neither kernel dim 0 "
                f"({self.kernel.shape[0]}) nor dim 1 ({self.kernel.shape[1]})"
            )
        if self.stride < 1:
            raise ShapeError(f"stride must be positive, got {self.stride}")
        if self.padding < 0:
            raise ShapeError(f"padding must be non-negative, got {self.padding}")
        if self.groups < 1:
            raise ShapeError(f"groups must be positive, got {self.groups}")
        if self.kernel.shape[0] % self.groups != 0:
            raise ShapeError(
                f"groups={self.groups} does not divide kernel dim 0 ({self.kernel.shape[0]})"
            )

    @property
    def param_count(self) -> int:
        return self.kernel.size + self.bias.size


# -- gather / scatter kernels -----------------------------------------------------


def _pad2d(x: np.ndarray, pad: int) -> np.ndarray:
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int, ho: int, wo: int) -> np.ndarray:
    """(N, C, Hp, Wp) -> (N, C, kh, kw, ho, wo) window gather."""
    n, c = xp.shape[:2]
    cols = np.empty((n, c, kh, kw, ho, wo), dtype=xp.dtype)
    for ki in range(kh):
        for kj in range(kw):
            cols[:, :, ki, kj] = xp[:, :, ki : ki + stride * ho : stride, kj : kj + stride * wo : stride]
    return cols


def _col2im(cols: np.ndarray, hp: int, wp: int, stride: int) -> np.ndarray:
    """Adjoint of _im2col: scatter-add windows back onto the padded grid."""
    n, c, kh, kw, ho, wo = cols.shape
    out = np.zeros((n, c, hp, wp), dtype=cols.dtype)
    for ki in range(kh):
        for kj in range(kw):
            out[:, :, ki : ki + stride * ho : stride, kj : kj + stride * wo : stride] += cols[:, :, ki, kj]
    return out


def _conv_out_extent(extent: int, k: int, pad: int, stride: int, axis: str, op: str) -> int:
    padded = extent + 2 * pad
    if padded < k:
        raise ShapeError(
            f"{op}: padded input {axis}={padded} is smaller than kernel {axis}={k}"
        )
    return (padded - k) // stride + 1


# -- convolution family -----------------------------------------------------------


def conv2d(x: Tensor, p: ConvParams) -> Tensor:
    """Grouped 2-d cross-correlation with zero padding.

    Output extent is floor((H + 2*pad - kH)/stride) + 1 per spatial axis.
    """
    if x.ndim != 4:
        raise ShapeError(f"conv2d: input must be (N, C, H, W), got shape {x.shape}")
    n, cin, h, w = x.shape
    cout, cin_g, kh, kw = p.kernel.shape
    g = p.groups
    if cin != cin_g * g:
        raise ShapeError(
            f"conv2d: input has {cin} channels but kernel expects {cin_g * g} "
            f"(in_ch/groups={cin_g} x groups={g})"
        )
    if cout % g != 0:
        raise ShapeError(f"conv2d: groups={g} does not divide out channels {cout}")
    if p.bias.shape[0] != cout:
        raise ShapeError(f"conv2d: bias length {p.bias.shape[0]} != out channels {cout}")
    ho = _conv_out_extent(h, kh, p.padding, p.stride, "height", "conv2d")
    wo = _conv_out_extent(w, kw, p.padding, p.stride, "width", "conv2d")

    xp = _pad2d(x.data, p.padding)
    cols = _im2col(xp, kh, kw, p.stride, ho, wo)
    # Group-major channel blocks: (N, g, Cin_g*kH*kW, L)
    cols_g = cols.reshape(n, g, cin_g * kh * kw, ho * wo)
    w_g = p.kernel.data.reshape(g, cout // g, cin_g * kh * kw)
    out = np.matmul(w_g, cols_g)  # (N, g, Cout_g, L)
    out = out.reshape(n, cout, ho, wo) + p.bias.data.reshape(1, cout, 1, 1)
    check_finite("conv2d", out)
    result = Tensor(out, dtype=out.dtype)

    def backward_fn(grad: np.ndarray):
        gb = grad.reshape(n, g, cout // g, ho * wo)
        grad_bias = grad.sum(axis=(0, 2, 3), dtype=np.float64).astype(grad.dtype)
        grad_w = np.matmul(gb, cols_g.transpose(0, 1, 3, 2)).sum(axis=0)
        grad_w = grad_w.reshape(cout, cin_g, kh, kw)
        grad_cols = np.matmul(w_g.transpose(0, 2, 1), gb)
        grad_cols = grad_cols.reshape(n, cin, kh, kw, ho, wo)
        gxp = _col2im(grad_cols, h + 2 * p.padding, w + 2 * p.padding, p.stride)
        gx = gxp if p.padding == 0 else gxp[:, :, p.padding : p.padding + h, p.padding : p.padding + w]
        return gx, grad_w, grad_bias

    return autograd.record("conv2d", (x, p.kernel, p.bias), result, backward_fn)


def conv2d_transpose(x: Tensor, p: ConvParams, output_padding: int | None = None) -> Tensor:
    """Transposed convolution (adjoint of conv2d with the same kernel).

    Kernel layout is (in_ch, out_ch, kH, kW); groups other than 1 are not
    supported.  Output extent is (H-1)*stride - 2*pad + kH + output_padding,
    with output_padding defaulting to stride-1 so a stride-2 block exactly
    doubles an even extent.
    """
    if x.ndim != 4:
        raise ShapeError(f"conv2d_transpose: input must be (N, C, H, W), got shape {x.shape}")
    if p.groups != 1:
        raise ShapeError(f"conv2d_transpose: groups must be 1, got {p.groups}")
    n, cin, h, w = x.shape
    cin_k, cout, kh, kw = p.kernel.shape
    if cin != cin_k:
        raise ShapeError(
            f"conv2d_transpose: input has {cin} channels but kernel expects {cin_k}"
        )
    if p.bias.shape[0] != cout:
        raise ShapeError(
            f"conv2d_transpose: bias length {p.bias.shape[0]} != out channels {cout}"
        )
    opad = p.stride - 1 if output_padding is None else output_padding
    if not 0 <= opad < p.stride:
        raise ShapeError(f"output_padding {opad} must lie in [0, stride={p.stride})")
    ho = (h - 1) * p.stride - 2 * p.padding + kh + opad
    wo = (w - 1) * p.stride - 2 * p.padding + kw + opad
    if ho < 1 or wo < 1:
        raise ShapeError(f"conv2d_transpose: output extent ({ho}, {wo}) is not positive")

    k2d = p.kernel.data.reshape(cin, cout * kh * kw)
    x2d = x.data.reshape(n, cin, h * w)
    cols = np.matmul(k2d.T, x2d)  # (N, Cout*kH*kW, L)
    cols = cols.reshape(n, cout, kh, kw, h, w)
    hp, wp = ho + 2 * p.padding, wo + 2 * p.padding
    padded = _col2im(cols, hp, wp, p.stride)
    out = padded[:, :, p.padding : p.padding + ho, p.padding : p.padding + wo]
    out = out + p.bias.data.reshape(1, cout, 1, 1)
    check_finite("conv2d_transpose", out)
    result = Tensor(out, dtype=out.dtype)

    def backward_fn(grad: np.ndarray):
        grad_bias = grad.sum(axis=(0, 2, 3), dtype=np.float64).astype(grad.dtype)
        gp = _pad2d(grad, p.padding)
        cols_g = _im2col(gp, kh, kw, p.stride, h, w).reshape(n, cout * kh * kw, h * w)
        grad_x = np.matmul(k2d, cols_g).reshape(n, cin, h, w)
        grad_k = np.matmul(x2d, cols_g.transpose(0, 2, 1)).sum(axis=0)
        grad_k = grad_k.reshape(cin, cout, kh, kw)
        return grad_x, grad_k, grad_bias

    return autograd.record("conv2d_transpose", (x, p.kernel, p.bias), result, backward_fn)


def maxpool2d(x: Tensor, window: int, stride: int) -> Tensor:
    """Max pooling; the argmax within each window is saved for backward."""
    if x.ndim != 4:
        raise ShapeError(f"maxpool2d: input must be (N, C, H, W), got shape {x.shape}")
    if window < 1:
        raise ShapeError(f"maxpool2d: window must be >= 1, got {window}")
    if stride < 1:
        raise ShapeError(f"maxpool2d: stride must be >= 1, got {stride}")
    n, c, h, w = x.shape
    if window > h or window > w:
        raise ShapeError(
            f"maxpool2d: window {window} exceeds input extent ({h}, {w})"
        )
    ho = (h - window) // stride + 1
    wo = (w - window) // stride + 1
    cols = _im2col(x.data, window, window, stride, ho, wo).reshape(n, c, window * window, ho, wo)
    arg = cols.argmax(axis=2)
    out = np.take_along_axis(cols, arg[:, :, None], axis=2)[:, :, 0]
    check_finite("maxpool2d", out)
    result = Tensor(out, dtype=out.dtype)

    def backward_fn(grad: np.ndarray):
        gx = np.zeros_like(x.data)
        for ki in range(window):
            for kj in range(window):
                contrib = grad * (arg == ki * window + kj)
                gx[:, :, ki : ki + stride * ho : stride, kj : kj + stride * wo : stride] += contrib
        return (gx,)

    return autograd.record("maxpool2d", (x,), result, backward_fn)


# -- activations -------------------------------------------------------------------


def selu(x: Tensor) -> Tensor:
    """Scaled exponential linear unit with the fixed self-normalizing constants."""
    _note_preact(x.data)
    xd = x.data
    neg = SELU_ALPHA * np.expm1(np.minimum(xd, 0.0))
    out = SELU_LAMBDA * np.where(xd > 0.0, xd, neg)
    out = out.astype(xd.dtype)
    check_finite("selu", out)
    result = Tensor(out, dtype=out.dtype)

    def backward_fn(grad: np.ndarray):
        slope = SELU_LAMBDA * np.where(xd > 0.0, 1.0, SELU_ALPHA * np.exp(np.minimum(xd, 0.0)))
        return (grad * slope.astype(xd.dtype),)

    return autograd.record("selu", (x,), result, backward_fn)


def prelu(x: Tensor, a: Tensor) -> Tensor:
    """Parametric ReLU with one learnable slope per channel (axis 1)."""
    if x.ndim < 2:
        raise ShapeError(f"prelu: input needs a channel axis, got shape {x.shape}")
    c = x.shape[1]
    if a.ndim != 1 or a.shape[0] != c:
        raise ShapeError(
            f"prelu: slope tensor shape {a.shape} does not match {c} channels"
        )
    _note_preact(x.data)
    xd = x.data
    a_b = a.data.reshape((1, c) + (1,) * (x.ndim - 2))
    out = np.where(xd > 0.0, xd, a_b * xd).astype(xd.dtype)
    check_finite("prelu", out)
    result = Tensor(out, dtype=out.dtype)

    def backward_fn(grad: np.ndarray):
        gx = np.where(xd > 0.0, grad, a_b * grad).astype(xd.dtype)
        neg = np.where(xd > 0.0, 0.0, xd) * grad
        axes = (0,) + tuple(range(2, x.ndim))
        ga = neg.sum(axis=axes, dtype=np.float64).astype(a.data.dtype)
        return gx, ga

    return autograd.record("prelu", (x, a), result, backward_fn)


# -- shape / pooling / linear -------------------------------------------------------


def global_avg_pool(x: Tensor) -> Tensor:
    """Per-channel spatial mean: (N, C, H, W) -> (N, C)."""
    if x.ndim != 4:
        raise ShapeError(f"global_avg_pool: input must be (N, C, H, W), got shape {x.shape}")
    n, c, h, w = x.shape
    out = x.data.mean(axis=(2, 3), dtype=np.float64).astype(x.data.dtype)
    check_finite("global_avg_pool", out)
    result = Tensor(out, dtype=out.dtype)

    def backward_fn(grad: np.ndarray):
        gx = np.broadcast_to(grad[:, :, None, None] / (h * w), x.shape).astype(x.data.dtype)
        return (gx.copy(),)

    return autograd.record("global_avg_pool", (x,), result, backward_fn)


def dense(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Affine map x @ W + b for x of shape (N, F)."""
    if x.ndim != 2:
        raise ShapeError(f"dense: input must be (N, F), got shape {x.shape}")
    if weight.ndim != 2 or x.shape[1] != weight.shape[0]:
        raise ShapeError(
            f"dense: input features {x.shape[1]} do not match weight rows "
            f"{weight.shape[0] if weight.ndim == 2 else weight.shape}"
        )
    if bias.ndim != 1 or bias.shape[0] != weight.shape[1]:
        raise ShapeError(
            f"dense: bias length {bias.shape} does not match weight columns {weight.shape[1]}"
        )
    out = x.data @ weight.data + bias.data
    check_finite("dense", out)
    result = Tensor(out, dtype=out.dtype)

    def backward_fn(grad: np.ndarray):
        gx = grad @ weight.data.T
        gw = x.data.T @ grad
        gb = grad.sum(axis=0, dtype=np.float64).astype(bias.data.dtype)
        return gx, gw, gb

    return autograd.record("dense", (x, weight, bias), result, backward_fn)


def concat_channels(xs: list[Tensor]) -> Tensor:
    """Concatenate image tensors along the channel axis, order preserved."""
    if not xs:
        raise ShapeError("concat_channels: empty input list")
    first = xs[0]
    for i, t in enumerate(xs):
        if t.ndim != 4:
            raise ShapeError(f"concat_channels: input {i} must be 4-d, got shape {t.shape}")
        if t.shape[0] != first.shape[0] or t.shape[2:] != first.shape[2:]:
            raise ShapeError(
                f"concat_channels: input {i} shape {t.shape} does not match "
                f"(N, *, H, W) of input 0 {first.shape}"
            )
    out = np.concatenate([t.data for t in xs], axis=1)
    result = Tensor(out, dtype=out.dtype)
    sizes = [t.shape[1] for t in xs]

    def backward_fn(grad: np.ndarray):
        grads = []
        start = 0
        for c in sizes:
            grads.append(grad[:, start : start + c].copy())
            start += c
        return grads

    return autograd.record("concat_channels", tuple(xs), result, backward_fn)


def slice_channels(x: Tensor, start: int, stop: int) -> Tensor:
    """Take channels [start, stop) of an image tensor."""
    if x.ndim != 4:
        raise ShapeError(f"slice_channels: input must be 4-d, got shape {x.shape}")
    if not 0 <= start < stop <= x.shape[1]:
        raise ShapeError(
            f"slice_channels: range [{start}, {stop}) invalid for {x.shape[1]} channels"
        )
    out = x.data[:, start:stop].copy()
    result = Tensor(out, dtype=out.dtype)

    def backward_fn(grad: np.ndarray):
        gx = np.zeros_like(x.data)
        gx[:, start:stop] = grad
        return (gx,)

    return autograd.record("slice_channels", (x,), result, backward_fn)


# -- classification head -------------------------------------------------------------


def softmax(x: Tensor) -> Tensor:
    """Row-wise softmax with max subtraction for stability; rows sum to 1."""
    if x.ndim != 2 or x.shape[1] < 2:
        raise ShapeError(f"softmax: input must be (N, K>=2), got shape {x.shape}")
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=1, keepdims=True)
    out = out.astype(x.data.dtype)
    check_finite("softmax", out)
    result = Tensor(out, dtype=out.dtype)

    def backward_fn(grad: np.ndarray):
        inner = (grad * out).sum(axis=1, keepdims=True)
        return ((out * (grad - inner)).astype(x.data.dtype),)

    return autograd.record("softmax", (x,), result, backward_fn)


def cross_entropy(probs: Tensor, labels) -> Tensor:
    """Mean negative log-probability of the true class; log clamped at 1e-12.

    Labels are integers in [0, K); anything else is rejected.
    """
    if probs.ndim != 2:
        raise ShapeError(f"cross_entropy: probs must be (N, K), got shape {probs.shape}")
    lab = labels.data if isinstance(labels, Tensor) else np.asarray(labels)
    lab = np.asarray(lab).reshape(-1)
    if lab.shape[0] != probs.shape[0]:
        raise ShapeError(
            f"cross_entropy: {lab.shape[0]} labels for {probs.shape[0]} rows"
        )
    if not np.all(np.equal(np.mod(lab, 1), 0)):
        raise ValueError(f"cross_entropy: labels must be integers, got {lab}")
    lab = lab.astype(np.int64)
    k = probs.shape[1]
    if lab.min() < 0 or lab.max() >= k:
        raise ValueError(f"cross_entropy: labels must lie in [0, {k}), got {lab}")
    n = probs.shape[0]
    picked = probs.data[np.arange(n), lab]
    clamped = np.maximum(picked, LOG_CLAMP)
    loss = float(np.mean(-np.log(clamped), dtype=np.float64))
    result = Tensor(np.asarray(loss, dtype=probs.data.dtype), dtype=probs.data.dtype)

    def backward_fn(grad: np.ndarray):
        g = float(grad.reshape(-1)[0])
        dp = np.zeros_like(probs.data)
        live = picked >= LOG_CLAMP
        dp[np.arange(n), lab] = np.where(live, -g / (n * clamped), 0.0).astype(probs.data.dtype)
        return (dp,)

    return autograd.record("cross_entropy", (probs,), result, backward_fn)


# -- elementwise / reduction utilities ------------------------------------------------


def _same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ")


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "add")
    result = Tensor(a.data + b.data, dtype=a.data.dtype)

    def backward_fn(grad: np.ndarray):
        return grad, grad

    return autograd.record("add", (a, b), result, backward_fn)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "mul")
    result = Tensor(a.data * b.data, dtype=a.data.dtype)

    def backward_fn(grad: np.ndarray):
        return grad * b.data, grad * a.data

    return autograd.record("mul", (a, b), result, backward_fn)


def scale(x: Tensor, c: float) -> Tensor:
    result = Tensor(x.data * c, dtype=x.data.dtype)

    def backward_fn(grad: np.ndarray):
        return (grad * c,)

    return autograd.record("scale", (x,), result, backward_fn)


def tsum(x: Tensor) -> Tensor:
    out = np.asarray(x.data.sum(dtype=np.float64), dtype=x.data.dtype)
    result = Tensor(out, dtype=out.dtype)

    def backward_fn(grad: np.ndarray):
        return (np.full_like(x.data, float(grad.reshape(-1)[0])),)

    return autograd.record("sum", (x,), result, backward_fn)


def tmean(x: Tensor) -> Tensor:
    out = np.asarray(x.data.mean(dtype=np.float64), dtype=x.data.dtype)
    result = Tensor(out, dtype=out.dtype)

    def backward_fn(grad: np.ndarray):
        return (np.full_like(x.data, float(grad.reshape(-1)[0]) / x.size),)

    return autograd.record("mean", (x,), result, backward_fn)


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    result = Tensor(x.data.reshape(shape).copy(), dtype=x.data.dtype)

    def backward_fn(grad: np.ndarray):
        return (grad.reshape(x.shape),)

    return autograd.record("reshape", (x,), result, backward_fn)


def flatten2d(x: Tensor) -> Tensor:
    """Collapse all but the batch axis: (N, ...) -> (N, F)."""
    return reshape(x, (x.shape[0], -1))
