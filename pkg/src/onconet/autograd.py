"""Reverse-mode differentiation tape and the finite-difference gradient checker.

Ops record themselves on the active tape in execution order; backward walks
the node list once, in reverse insertion order, accumulating gradients
additively across fan-out.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .tensor import ShapeError, Tensor

__all__ = [
    "Tape",
    "tape_active",
    "record",
    "backward",
    "zero_grads",
    "gradcheck",
    "GradCheckReport",
]


@dataclass
class Node:
    op: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    # Maps the output gradient to per-input gradients (None for non-differentiable
    # slots).  Saved activations live in the closure.
    backward_fn: Callable[[np.ndarray], Sequence[np.ndarray | None]]


class Tape:
    """Append-only record of ops; insertion order is the topological order."""

    _active: list["Tape"] = []

    def __init__(self) -> None:
        self.nodes: list[Node] = []

    def append(self, node: Node) -> int:
        self.nodes.append(node)
        return len(self.nodes) - 1

    def __len__(self) -> int:
        return len(self.nodes)

    def __enter__(self) -> "Tape":
        Tape._active.append(self)
        return self

    def __exit__(self, *exc) -> None:
        Tape._active.pop()


def tape_active() -> Tape | None:
    return Tape._active[-1] if Tape._active else None


def record(
    op: str,
    inputs: tuple[Tensor, ...],
    output: Tensor,
    backward_fn: Callable[[np.ndarray], Sequence[np.ndarray | None]],
) -> Tensor:
    """Attach an op to the active tape if any input participates in gradients."""
    tape = tape_active()
    needs_grad = any(t.requires_grad or t.node_id is not None for t in inputs)
    if tape is not None and needs_grad:
        output.node_id = tape.append(Node(op, inputs, output, backward_fn))
    return output


def backward(tape: Tape, loss: Tensor) -> None:
    """Populate gradient buffers for everything reachable from a scalar loss."""
    if loss.size != 1:
        raise ShapeError(f"backward requires a scalar loss, got shape {loss.shape}")
    if loss.node_id is None:
        raise ValueError("loss was not produced on the given tape")
    loss.grad = np.ones_like(loss.data)
    for node in reversed(tape.nodes):
        g = node.output.grad
        if g is None:
            continue
        grads = node.backward_fn(g)
        for t, gi in zip(node.inputs, grads):
            if gi is None:
                continue
            if t.requires_grad or t.node_id is not None:
                t.accumulate_grad(gi)


def zero_grads(tensors: Sequence[Tensor]) -> None:
    for t in tensors:
        t.zero_grad()


@dataclass
class GradCheckReport:
    op: str
    max_rel_err: float
    passed: bool
    checked: int
    skipped: int = 0
    note: str = ""

    def __str__(self) -> str:
        status = "pass" if self.passed else "FAIL"
        return (
            f"{self.op}: {status} max_rel_err={self.max_rel_err:.3e} "
            f"checked={self.checked} skipped={self.skipped}"
        )


def _rel_err(a: float, n: float) -> float:
    return abs(a - n) / max(abs(a), abs(n), 1e-3)


def gradcheck(
    fn: Callable[..., Tensor],
    inputs: Sequence[Tensor],
    tolerance: float = 1e-4,
    eps: float = 1e-3,
    name: str = "op",
    max_coords_per_input: int | None = None,
    kink_probe: Callable[[], np.ndarray] | None = None,
    rng: np.random.Generator | None = None,
    params: Sequence[Tensor] = (),
    max_coords_per_param: int | None = None,
) -> GradCheckReport:
    """Compare analytic gradients of ``fn`` against central finite differences.

    ``fn`` maps the given tensors to a scalar Tensor and is evaluated on a
    float64 shadow copy of the inputs.  Tensors in ``params`` (for example the
    weights of an already-built float64 model that ``fn`` closes over) are
    checked by in-place perturbation instead of shadowing.

    Coordinates whose +/-eps evaluations straddle an activation kink are
    skipped: ``kink_probe``, when given, must return the flattened
    pre-activation values gathered during the most recent evaluation of ``fn``;
    a sign change (or near-zero magnitude) between the two probe snapshots
    marks the coordinate as non-smooth.

    Non-finite values yield a failure report rather than an exception.
    """
    shadow = [Tensor(t.data.astype(np.float64), requires_grad=True, dtype=np.float64) for t in inputs]
    for t in params:
        t.zero_grad()
    try:
        with Tape() as tape:
            loss = fn(*shadow)
            if loss.size != 1:
                raise ShapeError(f"gradcheck target must be scalar, got {loss.shape}")
            backward(tape, loss)
        targets = list(shadow) + list(params)
        analytic = [
            np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in targets
        ]
        if any(not np.isfinite(a).all() for a in analytic) or not np.isfinite(loss.data).all():
            return GradCheckReport(name, float("inf"), False, 0, note="non-finite analytic values")
        if kink_probe is not None:
            kink_probe()  # drain values gathered during the analytic pass

        max_err = 0.0
        checked = 0
        skipped = 0
        caps = [max_coords_per_input] * len(shadow) + [
            max_coords_per_param if max_coords_per_param is not None else max_coords_per_input
        ] * len(params)
        for idx, t in enumerate(targets):
            flat = t.data.reshape(-1)
            coords = np.arange(flat.size)
            cap = caps[idx]
            if cap is not None and flat.size > cap:
                gen = rng if rng is not None else np.random.default_rng(0)
                coords = gen.choice(flat.size, size=cap, replace=False)
            for c in coords:
                orig = flat[c]
                flat[c] = orig + eps
                f_plus = _eval_scalar(fn, shadow)
                probe_plus = kink_probe() if kink_probe is not None else None
                flat[c] = orig - eps
                f_minus = _eval_scalar(fn, shadow)
                probe_minus = kink_probe() if kink_probe is not None else None
                flat[c] = orig
                if probe_plus is not None and _crosses_kink(probe_plus, probe_minus):
                    skipped += 1
                    continue
                if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                    return GradCheckReport(
                        name, float("inf"), False, checked, skipped, "non-finite finite-difference values"
                    )
                numeric = (f_plus - f_minus) / (2.0 * eps)
                err = _rel_err(float(analytic[idx].reshape(-1)[c]), numeric)
                max_err = max(max_err, err)
                checked += 1
        return GradCheckReport(name, max_err, max_err < tolerance, checked, skipped)
    except FloatingPointError as exc:
        return GradCheckReport(name, float("inf"), False, 0, note=str(exc))


def _eval_scalar(fn: Callable[..., Tensor], inputs: Sequence[Tensor]) -> float:
    out = fn(*inputs)
    return float(out.data.reshape(-1)[0])


def _crosses_kink(probe_plus: np.ndarray, probe_minus: np.ndarray, margin: float = 1e-3) -> bool:
    # A finite difference is only contaminated when the segment between the
    # two evaluations crosses (or can reach) an activation's non-smooth point:
    # a sign flip is a crossing; an endpoint within the margin whose movement
    # exceeds its distance to the kink may have grazed it.
    if probe_plus.shape != probe_minus.shape:
        return True
    moved = probe_plus != probe_minus
    sign_flip = np.sign(probe_plus) != np.sign(probe_minus)
    min_abs = np.minimum(np.abs(probe_plus), np.abs(probe_minus))
    delta = np.abs(probe_plus - probe_minus)
    graze = (min_abs < margin) & (delta >= min_abs)
    return bool(np.any(moved & (sign_flip | graze)))
