"""Adam with bias correction, one state object per parameter group."""

import numpy as np

from .array import MissingGradient


class AdamState:
    """First/second moment buffers plus the shared step counter."""

    def __init__(self, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8):
        if lr <= 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = {}
        self.v = {}


def adam_step(group, state):
    """Apply one Adam update to every parameter in the group.

    Gradients are read but not cleared; the caller owns zeroing.
    """
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for name, p in group.items():
        if p.grad is None:
            raise MissingGradient(
                f"adam_step: parameter {group.name}.{name} has no gradient")
        g = p.grad
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        update = (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        p.data = p.data - state.lr * update.astype(p.dtype, copy=False)
