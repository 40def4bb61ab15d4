"""Parameter initialization."""

import numpy as np

from .array import DiffArray


def _default_fans(shape):
    if len(shape) == 1:
        return shape[0], shape[0]
    if len(shape) == 2:
        return shape[0], shape[1]
    # conv-style (out, in, k): receptive field folds into both fans
    receptive = int(np.prod(shape[2:]))
    return shape[1] * receptive, shape[0] * receptive


def xavier_uniform(shape, rng, dtype=np.float32, fans=None):
    """Uniform draw on [-L, L] with L = sqrt(6 / (fan_in + fan_out))."""
    shape = tuple(int(s) for s in shape)
    if len(shape) == 0 or any(s <= 0 for s in shape):
        raise ValueError(f"xavier_uniform: invalid shape {shape}")
    fan_in, fan_out = fans if fans is not None else _default_fans(shape)
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    values = rng.uniform(-limit, limit, size=shape).astype(dtype)
    return DiffArray(values, requires_grad=True)
