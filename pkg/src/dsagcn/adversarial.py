"""Gradient reversal, the domain discriminator head, and its objective."""

from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from .diffcore import DiffArray

PROB_CLAMP = 1e-7


class AdversarialError(ValueError):
    pass


@dataclass
class GrlConfig:
    lam: float = 1.0
    schedule: str = "constant"   # constant | progressive

    def __post_init__(self):
        if self.lam < 0:
            raise AdversarialError(f"reversal scale must be >= 0, got {self.lam}")
        if self.schedule not in ("constant", "progressive"):
            raise AdversarialError(f"unknown schedule {self.schedule!r}")

    def scale(self, progress=0.0):
        if self.schedule == "constant":
            return self.lam
        return self.lam * (2.0 / (1.0 + np.exp(-10.0 * progress)) - 1.0)


def grl(x, config, progress=0.0):
    """Identity forward; backward multiplies the incoming gradient by -lam."""
    lam = config.scale(progress) if isinstance(config, GrlConfig) else float(config)
    return dc.grad_reverse(x, lam)


def init_discriminator(in_width, site_rng, hidden=(128, 128), dtype=np.float32):
    """Xavier-initialized parameters for the in->128->128->1 head."""
    widths = [in_width, *hidden, 1]
    params = {}
    for i in range(len(widths) - 1):
        rng = site_rng(f"disc.fc{i + 2}")
        params[f"fc{i + 2}.w"] = dc.xavier_uniform((widths[i], widths[i + 1]), rng, dtype=dtype)
        params[f"fc{i + 2}.b"] = dc.parameter(np.zeros(widths[i + 1], dtype=dtype))
    return params


def discriminator_forward(h, params, dropout_rngs=None, training=True, dropout=0.5):
    """Two relu+dropout hidden layers then a sigmoid domain probability."""
    in_width = params["fc2.w"].shape[0]
    if h.ndim != 2 or h.shape[1] != in_width:
        raise AdversarialError(
            f"discriminator expects (n, {in_width}) features, got {h.shape}")
    out = h
    hidden_names = [n for n in ("fc2", "fc3") if f"{n}.w" in params]
    for name in hidden_names:
        out = dc.relu(dc.dense(out, params[f"{name}.w"], params[f"{name}.b"]))
        if dropout_rngs is not None:
            out = dc.dropout(out, dropout, dropout_rngs[name], training=training)
    return dc.sigmoid(dc.dense(out, params["fc4.w"], params["fc4.b"]))


def domain_adversarial_loss(p_source, p_target):
    """Binary cross entropy with source labeled 1 and target labeled 0."""
    p_s = dc.clamp(dc.reshape(p_source, (-1,)), PROB_CLAMP, 1.0 - PROB_CLAMP)
    p_t = dc.clamp(dc.reshape(p_target, (-1,)), PROB_CLAMP, 1.0 - PROB_CLAMP)
    ones = DiffArray(np.ones((), dtype=p_s.dtype))
    return dc.mean(-dc.log(p_s)) + dc.mean(-dc.log(ones - p_t))
