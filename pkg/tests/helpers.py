"""Shared test oracles: finite differences and brute-force divergence sums."""

import numpy as np

from dsagcn.diffcore import DiffArray


def numeric_grad(fn, arrays, index, h=1e-5):
    """Central finite differences of a scalar-valued fn w.r.t. arrays[index].

    fn takes plain numpy arrays and returns a float; everything runs in
    float64 because 32-bit differences are too noisy to check against.
    """
    arrays = [np.array(a, dtype=np.float64) for a in arrays]
    target = arrays[index]
    grad = np.zeros_like(target)
    flat = target.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = fn(*arrays)
        flat[i] = orig - h
        down = fn(*arrays)
        flat[i] = orig
        gflat[i] = (up - down) / (2.0 * h)
    return grad


def max_rel_error(a, b):
    """Elementwise |a-b| / max(1, |a|, |b|), reduced to the worst entry."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))
    return float(np.max(np.abs(a - b) / scale))


def check_gradients(build_loss, arrays, tol=1e-4, h=1e-5):
    """Compare analytic gradients of build_loss against central differences.

    build_loss receives one DiffArray per input array (requires_grad=True,
    float64) and must return a scalar DiffArray. Returns the worst relative
    error across all inputs.
    """
    leaves = [DiffArray(np.array(a, dtype=np.float64), requires_grad=True)
              for a in arrays]
    loss = build_loss(*leaves)
    loss.backward()

    def as_scalar(*vals):
        ls = [DiffArray(v) for v in vals]
        return float(build_loss(*ls).data)

    worst = 0.0
    for i, leaf in enumerate(leaves):
        assert leaf.grad is not None, f"input {i} missing gradient"
        num = numeric_grad(as_scalar, arrays, i, h=h)
        worst = max(worst, max_rel_error(leaf.grad, num))
    assert worst < tol, f"gradient mismatch: max relative error {worst:.3e}"
    return worst


def rbf_gram_loops(x, y, bandwidths):
    """Nested-loop RBF gram matrix, summed over bandwidths."""
    n, m = len(x), len(y)
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            d2 = float(np.sum((x[i] - y[j]) ** 2))
            out[i, j] = sum(np.exp(-d2 / s) for s in bandwidths)
    return out


def mmd_loops(xs, xt, bandwidths):
    """Brute-force biased MMD estimate with full double sums."""
    ns, nt = len(xs), len(xt)
    kss = rbf_gram_loops(xs, xs, bandwidths)
    ktt = rbf_gram_loops(xt, xt, bandwidths)
    kst = rbf_gram_loops(xs, xt, bandwidths)
    return kss.sum() / ns ** 2 + ktt.sum() / nt ** 2 - 2.0 * kst.sum() / (ns * nt)


def lmmd_loops(zs, zt, ys_onehot, yt_onehot, bandwidths):
    """Brute-force class-weighted MMD over subdomains present in both batches."""
    ns, nt = len(zs), len(zt)
    n_classes = ys_onehot.shape[1]
    kss = rbf_gram_loops(zs, zs, bandwidths)
    ktt = rbf_gram_loops(zt, zt, bandwidths)
    kst = rbf_gram_loops(zs, zt, bandwidths)

    def weights(onehot, m):
        col = onehot[:, m].astype(np.float64)
        total = col.sum()
        if total == 0:
            return None
        return col / total

    total = 0.0
    present = 0
    for m in range(n_classes):
        ws = weights(ys_onehot, m)
        wt = weights(yt_onehot, m)
        if ws is None or wt is None:
            continue
        present += 1
        term = 0.0
        for i in range(ns):
            for j in range(ns):
                term += ws[i] * ws[j] * kss[i, j]
        for i in range(nt):
            for j in range(nt):
                term += wt[i] * wt[j] * ktt[i, j]
        for i in range(ns):
            for j in range(nt):
                term -= 2.0 * ws[i] * wt[j] * kst[i, j]
        total += term
    if present == 0:
        return 0.0
    return total / present


def coral_direct(zs, zt):
    """Direct covariance-difference CORAL value."""
    d = zs.shape[1]
    cs = np.cov(zs, rowvar=False, ddof=1).reshape(d, d)
    ct = np.cov(zt, rowvar=False, ddof=1).reshape(d, d)
    return float(np.sum((cs - ct) ** 2)) / (4.0 * d * d)
