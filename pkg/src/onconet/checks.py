"""The standard gradient-check suite: every differentiable op on seeded random
instances, plus the composed preprocessor + classifier at 16x16 scale."""
from __future__ import annotations

import numpy as np

from . import ops
from .autograd import GradCheckReport, gradcheck
from .nets import ModelConfig, ModelVariant, build_model, forward
from .tensor import Tensor

__all__ = ["gradcheck_all", "gradcheck_composed", "OP_CHECKS"]


def _t(rng, *shape, dtype=np.float32) -> Tensor:
    return Tensor(rng.normal(size=shape).astype(dtype))


def _away_from_kink(rng, *shape, margin=0.05) -> Tensor:
    vals = rng.normal(size=shape).astype(np.float32)
    vals = np.where(np.abs(vals) < margin, vals + np.sign(vals + 1e-9) * margin, vals)
    return Tensor(vals)


def _check_dense(rng, tol):
    x, w, b = _t(rng, 2, 3), _t(rng, 3, 4), _t(rng, 4)
    return gradcheck(lambda a, c, d: ops.tsum(ops.dense(a, c, d)), [x, w, b], tol, name="dense")


def _check_conv2d(rng, tol):
    x = _t(rng, 2, 4, 5, 5)
    k = _t(rng, 4, 2, 3, 3)
    b = _t(rng, 4)

    def fn(a, c, d):
        return ops.tsum(ops.conv2d(a, ops.ConvParams(c, d, stride=2, padding=1, groups=2)))

    return gradcheck(fn, [x, k, b], tol, name="conv2d")


def _check_conv2d_transpose(rng, tol):
    x = _t(rng, 1, 3, 4, 4)
    k = _t(rng, 3, 2, 3, 3)
    b = _t(rng, 2)

    def fn(a, c, d):
        return ops.tsum(ops.conv2d_transpose(a, ops.ConvParams(c, d, stride=2, padding=1)))

    return gradcheck(fn, [x, k, b], tol, name="conv2d_transpose")


def _check_maxpool(rng, tol):
    x = _t(rng, 1, 2, 6, 6)
    return gradcheck(lambda a: ops.tsum(ops.maxpool2d(a, 2, 2)), [x], tol, name="maxpool2d")


def _check_selu(rng, tol):
    x = _away_from_kink(rng, 2, 8)
    with ops.record_preactivations() as probe:
        return gradcheck(lambda a: ops.tsum(ops.selu(a)), [x], tol, name="selu", kink_probe=probe)


def _check_prelu(rng, tol):
    x = _away_from_kink(rng, 2, 3, 4, 4)
    a = Tensor(np.array([0.25, 0.4, 0.1], dtype=np.float32))
    with ops.record_preactivations() as probe:
        return gradcheck(
            lambda p, q: ops.tsum(ops.prelu(p, q)), [x, a], tol, name="prelu", kink_probe=probe
        )


def _check_global_avg_pool(rng, tol):
    x = _t(rng, 2, 3, 4, 4)
    return gradcheck(lambda a: ops.tsum(ops.global_avg_pool(a)), [x], tol, name="global_avg_pool")


def _check_concat(rng, tol):
    a, b = _t(rng, 2, 2, 3, 3), _t(rng, 2, 3, 3, 3)
    return gradcheck(
        lambda p, q: ops.tsum(ops.concat_channels([p, q])), [a, b], tol, name="concat_channels"
    )


def _check_slice(rng, tol):
    x = _t(rng, 2, 4, 3, 3)
    return gradcheck(lambda a: ops.tsum(ops.slice_channels(a, 1, 3)), [x], tol, name="slice_channels")


def _check_softmax(rng, tol):
    x = _t(rng, 3, 4)
    return gradcheck(lambda a: ops.tsum(ops.mul(ops.softmax(a), ops.softmax(a))), [x], tol, name="softmax")


def _check_cross_entropy(rng, tol):
    probs = Tensor(rng.uniform(0.1, 0.9, size=(4, 2)).astype(np.float32))
    labels = np.array([0, 1, 1, 0])
    return gradcheck(lambda p: ops.cross_entropy(p, labels), [probs], tol, name="cross_entropy")


def _check_softmax_cross_entropy(rng, tol):
    logits = _t(rng, 4, 2)
    labels = np.array([0, 1, 0, 1])
    return gradcheck(
        lambda z: ops.cross_entropy(ops.softmax(z), labels), [logits], tol, name="softmax+cross_entropy"
    )


def _check_add_mul_scale(rng, tol):
    a, b = _t(rng, 3, 3), _t(rng, 3, 3)

    def fn(p, q):
        return ops.tmean(ops.add(ops.mul(p, q), ops.scale(p, 0.5)))

    return gradcheck(fn, [a, b], tol, name="add/mul/scale/mean")


def _check_reshape(rng, tol):
    x = _t(rng, 2, 3, 2, 2)
    return gradcheck(lambda a: ops.tsum(ops.flatten2d(a)), [x], tol, name="reshape/flatten")


OP_CHECKS = {
    "dense": _check_dense,
    "conv2d": _check_conv2d,
    "conv2d_transpose": _check_conv2d_transpose,
    "maxpool2d": _check_maxpool,
    "selu": _check_selu,
    "prelu": _check_prelu,
    "global_avg_pool": _check_global_avg_pool,
    "concat_channels": _check_concat,
    "slice_channels": _check_slice,
    "softmax": _check_softmax,
    "cross_entropy": _check_cross_entropy,
    "softmax_cross_entropy": _check_softmax_cross_entropy,
    "add_mul_scale": _check_add_mul_scale,
    "reshape": _check_reshape,
}


def gradcheck_composed(
    tolerance: float = 1e-4,
    input_size: int = 16,
    canonical_widths: bool = True,
    input_coords: int = 48,
    param_coords: int = 2,
) -> GradCheckReport:
    """Finite-difference check of the full preprocessor + grouped-residual
    classifier (loss included) at desk scale, sampling input and parameter
    coordinates."""
    if canonical_widths:
        cfg = ModelConfig(
            variant=ModelVariant.AGGRES_CNN, input_channels=2, input_size=input_size, use_fcn=True
        )
    else:
        cfg = ModelConfig(
            variant=ModelVariant.AGGRES_CNN,
            input_channels=2,
            input_size=input_size,
            stem_channels=4,
            stage_channels=(8, 16, 32, 64),
            use_fcn=True,
            fcn_down_channels=(4, 8, 16, 32),
        )
    model = build_model(cfg, rng=np.random.default_rng(101), dtype=np.float64)
    rng = np.random.default_rng(102)
    x = Tensor(rng.normal(size=(1, 2, input_size, input_size)), dtype=np.float64)
    labels = np.array([1])
    params = [t for _, t in sorted(model.named_params().items())]

    def fn(xs):
        return ops.cross_entropy(forward(model, xs), labels)

    coord_rng = np.random.default_rng(103)
    with ops.record_preactivations() as probe:
        report = gradcheck(
            fn,
            [x],
            tolerance,
            name=f"fcn+aggres_cnn@{input_size}",
            max_coords_per_input=input_coords,
            kink_probe=probe,
            rng=coord_rng,
            params=params,
            max_coords_per_param=param_coords,
        )
    return report


def gradcheck_all(tolerance: float = 1e-4, include_composed: bool = True) -> list[GradCheckReport]:
    """Run every per-op check (seeded) and optionally the composed model."""
    rng = np.random.default_rng(42)
    reports = [check(rng, tolerance) for check in OP_CHECKS.values()]
    if include_composed:
        reports.append(gradcheck_composed(tolerance))
    return reports
