"""Adam optimizer with bias correction, keyed by parameter name."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import ShapeError, Tensor

__all__ = ["AdamState", "Adam", "adam_step"]


@dataclass
class AdamState:
    """Per-parameter first/second moments plus the shared step counter."""

    lr: float = 0.0006
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: dict[str, Tensor], grads: dict[str, np.ndarray], state: AdamState) -> None:
    """One bias-corrected update; parameters are modified in place.

    Updates are elementwise and independent across parameters; a zero
    gradient leaves a parameter exactly unchanged.
    """
    state.t += 1
    b1t = 1.0 - state.beta1**state.t
    b2t = 1.0 - state.beta2**state.t
    for name in sorted(params):
        p = params[name]
        if name not in grads:
            raise KeyError(f"missing gradient for parameter {name}")
        g = grads[name]
        if g.shape != p.data.shape:
            raise ShapeError(
                f"parameter {name}: gradient shape {g.shape} != parameter shape {p.data.shape}"
            )
        if not np.isfinite(g).all():
            raise FloatingPointError(f"non-finite gradient for parameter {name}")
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        m_hat = m / b1t
        v_hat = v / b2t
        p.data -= (state.lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(p.data.dtype)


class Adam:
    """Convenience wrapper binding a parameter dict to an AdamState."""

    def __init__(self, params: dict[str, Tensor], lr: float = 0.0006):
        self.params = params
        self.state = AdamState(lr=lr)

    def step(self) -> None:
        grads = {}
        for name, p in self.params.items():
            if p.grad is None:
                raise ValueError(f"parameter {name} has no gradient; run backward first")
            grads[name] = p.grad
        adam_step(self.params, grads, self.state)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def state_tensors(self) -> dict[str, Tensor]:
        """Moment buffers in checkpoint form (for resumable runs)."""
        out = {}
        for name in sorted(self.params):
            if name in self.state.m:
                out[f"adam.m.{name}"] = Tensor(self.state.m[name])
                out[f"adam.v.{name}"] = Tensor(self.state.v[name])
        return out
