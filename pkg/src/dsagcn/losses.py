"""Distribution divergences used to align source and target activations.

All estimators are differentiable functions of the activations; class
weights and kernel bandwidths are treated as constants during backward.
"""

from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from .diffcore import DiffArray


class LossError(ValueError):
    pass


# kernel mixture pinned for the multi-kernel MMD ablation
MKMMD_BANDWIDTHS = (0.001, 0.01, 1.0, 10.0, 100.0)

_lmmd_skipped = 0


def lmmd_skipped_count():
    """Batches where no class was present in both domains (loss returned 0)."""
    return _lmmd_skipped


def reset_lmmd_skipped():
    global _lmmd_skipped
    _lmmd_skipped = 0


@dataclass
class KernelConfig:
    """RBF kernel sum k(x,y) = sum_b exp(-|x-y|^2 / bandwidth_b).

    With explicit bandwidths the list is used as-is; otherwise five
    bandwidths are spaced geometrically (factor `spacing`) around the median
    pooled pairwise squared distance.
    """

    bandwidths: tuple = None
    n_kernels: int = 5
    spacing: float = 2.0

    def __post_init__(self):
        if self.bandwidths is not None:
            self.bandwidths = tuple(float(b) for b in self.bandwidths)
            if len(self.bandwidths) == 0 or any(b <= 0 for b in self.bandwidths):
                raise LossError("bandwidths must be a non-empty list of positives")
        elif self.n_kernels < 1:
            raise LossError("need at least one kernel")

    def resolve(self, x_data, y_data):
        if self.bandwidths is not None:
            return self.bandwidths
        pooled = np.concatenate([x_data, y_data], axis=0)
        sq = np.sum(pooled ** 2, axis=1)
        d2 = sq[:, None] + sq[None, :] - 2.0 * pooled @ pooled.T
        off = d2[~np.eye(len(pooled), dtype=bool)]
        med = float(np.median(off)) if off.size else 0.0
        if med <= 0:
            med = 1.0
        half = self.n_kernels // 2
        return tuple(med * self.spacing ** (i - half) for i in range(self.n_kernels))


def _pairwise_sq_dists(x, y):
    xx = dc.sum_(x * x, axis=1, keepdims=True)            # (n, 1)
    yy = dc.reshape(dc.sum_(y * y, axis=1), (1, -1))      # (1, m)
    cross = dc.matmul(x, dc.transpose(y))
    return dc.clamp(xx + yy - 2.0 * cross, lo=0.0)


def rbf_gram(x, y, config):
    """Kernel matrix summed over the configured bandwidth mixture."""
    if x.shape[0] == 0 or y.shape[0] == 0:
        raise LossError("rbf_gram: empty input")
    if x.shape[1] != y.shape[1]:
        raise LossError(f"rbf_gram: dimension mismatch {x.shape} vs {y.shape}")
    bandwidths = config.resolve(x.data, y.data)
    d2 = _pairwise_sq_dists(x, y)
    total = dc.exp(d2 * (-1.0 / bandwidths[0]))
    for b in bandwidths[1:]:
        total = total + dc.exp(d2 * (-1.0 / b))
    return total


def mmd_biased(x_s, x_t, config):
    """Biased squared-MMD estimate with full 1/n^2 double sums."""
    if x_s.shape[1] != x_t.shape[1]:
        raise LossError(f"mmd_biased: dimension mismatch {x_s.shape} vs {x_t.shape}")
    bandwidths = config.resolve(x_s.data, x_t.data)
    fixed = KernelConfig(bandwidths=bandwidths)
    ns, nt = x_s.shape[0], x_t.shape[0]
    k_ss = dc.sum_(rbf_gram(x_s, x_s, fixed)) * (1.0 / ns ** 2)
    k_tt = dc.sum_(rbf_gram(x_t, x_t, fixed)) * (1.0 / nt ** 2)
    k_st = dc.sum_(rbf_gram(x_s, x_t, fixed)) * (2.0 / (ns * nt))
    return k_ss + k_tt - k_st


def mkmmd(x_s, x_t):
    """MMD under the fixed five-bandwidth multi-Gaussian mixture."""
    return mmd_biased(x_s, x_t, KernelConfig(bandwidths=MKMMD_BANDWIDTHS))


def class_weights(rows, mode="one_hot"):
    """Column-normalize label rows into per-class sample weights.

    Returns (weights, present) where absent classes keep zero columns and
    are flagged False instead of being divided.
    """
    rows = np.asarray(rows, dtype=np.float64)
    if np.any(rows < 0):
        raise LossError("class_weights: negative entries")
    if mode == "one_hot":
        if not np.all(np.isin(rows, (0.0, 1.0))) or not np.all(rows.sum(axis=1) == 1.0):
            raise LossError("class_weights: rows must be one-hot in one_hot mode")
    elif mode == "soft":
        if not np.allclose(rows.sum(axis=1), 1.0, atol=1e-6):
            raise LossError("class_weights: rows must sum to 1 in soft mode")
    else:
        raise LossError(f"class_weights: unknown mode {mode!r}")
    sums = rows.sum(axis=0)
    present = sums > 0
    weights = np.zeros_like(rows)
    weights[:, present] = rows[:, present] / sums[present]
    return weights, present


def pseudo_labels(target_logits):
    """Row-wise argmax one-hot (ties to the lowest index); never on the tape."""
    logits = target_logits.data if isinstance(target_logits, DiffArray) else target_logits
    logits = np.asarray(logits)
    if not np.all(np.isfinite(logits)):
        raise LossError("pseudo_labels: non-finite logits")
    idx = logits.argmax(axis=1)
    out = np.zeros_like(logits)
    out[np.arange(len(idx)), idx] = 1.0
    return out


def lmmd(z_s, z_t, y_s, y_t, config, target_mode="one_hot"):
    """Subdomain-weighted MMD averaged over classes present in both domains.

    y_s are one-hot source labels; y_t are target pseudo-label rows (one-hot
    by default, probability rows with target_mode='soft'). Weight matrices
    are constants: gradient flows only through the activations.
    """
    global _lmmd_skipped
    w_s, present_s = class_weights(y_s, "one_hot")
    w_t, present_t = class_weights(y_t, target_mode)
    present = present_s & present_t
    n_present = int(present.sum())
    if n_present == 0:
        _lmmd_skipped += 1
        return DiffArray(np.zeros((), dtype=z_s.dtype))
    w_s = w_s[:, present]
    w_t = w_t[:, present]
    bandwidths = config.resolve(z_s.data, z_t.data)
    fixed = KernelConfig(bandwidths=bandwidths)
    m_ss = DiffArray((w_s @ w_s.T).astype(z_s.dtype))
    m_tt = DiffArray((w_t @ w_t.T).astype(z_s.dtype))
    m_st = DiffArray((w_s @ w_t.T).astype(z_s.dtype))
    total = dc.sum_(rbf_gram(z_s, z_s, fixed) * m_ss) \
        + dc.sum_(rbf_gram(z_t, z_t, fixed) * m_tt) \
        - 2.0 * dc.sum_(rbf_gram(z_s, z_t, fixed) * m_st)
    return total * (1.0 / n_present)


def coral(z_s, z_t):
    """Frobenius distance between sample covariances, scaled by 1/(4 d^2)."""
    n, m = z_s.shape[0], z_t.shape[0]
    if n < 2 or m < 2:
        raise LossError(f"coral: need >= 2 samples per domain, got {n} and {m}")
    if z_s.shape[1] != z_t.shape[1]:
        raise LossError(f"coral: dimension mismatch {z_s.shape} vs {z_t.shape}")
    d = z_s.shape[1]

    def cov(z, count):
        centered = z - dc.mean(z, axis=0, keepdims=True)
        return dc.matmul(dc.transpose(centered), centered) * (1.0 / (count - 1))

    diff = cov(z_s, n) - cov(z_t, m)
    return dc.sum_(diff * diff) * (1.0 / (4.0 * d * d))
