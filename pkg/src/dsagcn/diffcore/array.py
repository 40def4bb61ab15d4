"""Minimal reverse-mode autodiff over dense numpy arrays.

Covers exactly the primitive set the fault-diagnosis network needs: 1-D
convolution, batch norm, relu, max/adaptive-max pooling, dense maps, dropout,
softmax, matmul and the elementwise/reduction basics, plus a gradient
reversal node for adversarial training. Training runs in float32 by default;
gradient tests build float64 graphs.
"""

import numpy as np


class ShapeMismatch(ValueError):
    """Raised when operand shapes do not conform for a primitive."""


class NonFiniteInput(ValueError):
    """Raised when a primitive receives NaN or Inf values."""


class MissingGradient(RuntimeError):
    """Raised by the optimizer when a parameter has no populated gradient."""


_grad_enabled = True


class no_grad:
    """Context manager that disables tape construction (eval-mode forward)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def _check_finite(op, *arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NonFiniteInput(f"{op}: input contains non-finite values")


def _as_array(x, like=None):
    if isinstance(x, DiffArray):
        return x
    dtype = like.dtype if like is not None else np.float64
    return DiffArray(np.asarray(x, dtype=dtype))


class DiffArray:
    """Dense array with an attached gradient slot and tape linkage."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_grad_fn", "_op")

    def __init__(self, data, requires_grad=False):
        data = np.asarray(data)
        if data.dtype not in (np.float32, np.float64):
            data = data.astype(np.float64)
        self.data = data
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._grad_fn = None
        self._op = "leaf"

    # -- basic introspection ------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        return f"DiffArray(shape={self.shape}, op={self._op}, requires_grad={self.requires_grad})"

    def item(self):
        return float(self.data)

    def numpy(self):
        return self.data

    def detach(self):
        return DiffArray(self.data, requires_grad=False)

    def zero_grad(self):
        self.grad = None

    # -- tape ----------------------------------------------------------------

    def _attach(self, op, parents, grad_fn):
        """Record provenance if grad mode is on and any parent needs it."""
        if _grad_enabled and any(p.requires_grad for p in parents):
            self.requires_grad = True
            self._parents = tuple(parents)
            self._grad_fn = grad_fn
            self._op = op
        return self

    def backward(self):
        """Populate .grad of every reachable requires_grad node.

        Repeated calls accumulate into existing gradients.
        """
        if self.data.shape != ():
            raise ShapeMismatch(
                f"backward: loss must be scalar, got shape {self.shape}")
        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        flow = {id(self): np.ones((), dtype=self.dtype)}
        for node in reversed(topo):
            g = flow.pop(id(node), None)
            if g is None or not node.requires_grad:
                continue
            if node.grad is None:
                node.grad = np.zeros_like(node.data)
            node.grad = node.grad + g
            if node._grad_fn is None:
                continue
            parent_grads = node._grad_fn(g)
            for p, pg in zip(node._parents, parent_grads):
                if pg is None or not p.requires_grad:
                    continue
                acc = flow.get(id(p))
                flow[id(p)] = pg if acc is None else acc + pg

    # -- operator sugar -------------------------------------------------------

    def __add__(self, other):
        return add(self, _as_array(other, self))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, _as_array(other, self))

    def __rsub__(self, other):
        return sub(_as_array(other, self), self)

    def __mul__(self, other):
        return mul(self, _as_array(other, self))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, _as_array(other, self))

    def __rtruediv__(self, other):
        return div(_as_array(other, self), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        out = DiffArray(self.data[key])
        x = self

        def grad_fn(g):
            gx = np.zeros_like(x.data)
            gx[key] += g
            return (gx,)

        return out._attach("getitem", (x,), grad_fn)

    @property
    def T(self):
        return transpose(self)


def parameter(data, requires_grad=True):
    """Wrap values as a trainable leaf."""
    return DiffArray(np.asarray(data), requires_grad=requires_grad)


# -- broadcasting helper ------------------------------------------------------


def _unbroadcast(g, shape):
    """Sum gradient g down to the given operand shape."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# -- elementwise --------------------------------------------------------------


def add(a, b):
    a, b = _as_array(a), _as_array(b, a)
    _check_finite("add", a.data, b.data)
    out = DiffArray(a.data + b.data)
    return out._attach("add", (a, b), lambda g: (
        _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b):
    a, b = _as_array(a), _as_array(b, a)
    _check_finite("sub", a.data, b.data)
    out = DiffArray(a.data - b.data)
    return out._attach("sub", (a, b), lambda g: (
        _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b):
    a, b = _as_array(a), _as_array(b, a)
    _check_finite("mul", a.data, b.data)
    out = DiffArray(a.data * b.data)
    return out._attach("mul", (a, b), lambda g: (
        _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def div(a, b):
    a, b = _as_array(a), _as_array(b, a)
    _check_finite("div", a.data, b.data)
    out = DiffArray(a.data / b.data)
    return out._attach("div", (a, b), lambda g: (
        _unbroadcast(g / b.data, a.shape),
        _unbroadcast(-g * a.data / (b.data * b.data), b.shape)))


def neg(a):
    out = DiffArray(-a.data)
    return out._attach("neg", (a,), lambda g: (-g,))


def exp(a):
    _check_finite("exp", a.data)
    val = np.exp(a.data)
    out = DiffArray(val)
    return out._attach("exp", (a,), lambda g: (g * val,))


def log(a):
    _check_finite("log", a.data)
    out = DiffArray(np.log(a.data))
    return out._attach("log", (a,), lambda g: (g / a.data,))


def sqrt(a):
    _check_finite("sqrt", a.data)
    val = np.sqrt(a.data)
    out = DiffArray(val)
    return out._attach("sqrt", (a,), lambda g: (g * 0.5 / val,))


def power(a, p):
    """Elementwise a**p for a python scalar exponent p."""
    _check_finite("power", a.data)
    val = a.data ** p
    out = DiffArray(val)
    return out._attach("power", (a,), lambda g: (g * p * a.data ** (p - 1),))


def relu(a):
    _check_finite("relu", a.data)
    out = DiffArray(np.maximum(a.data, 0))
    return out._attach("relu", (a,), lambda g: (g * (a.data > 0),))


def sigmoid(a):
    _check_finite("sigmoid", a.data)
    val = 1.0 / (1.0 + np.exp(-a.data))
    out = DiffArray(val)
    return out._attach("sigmoid", (a,), lambda g: (g * val * (1.0 - val),))


def clamp(a, lo=None, hi=None):
    """Clip values; gradient passes only where the input was inside [lo, hi]."""
    _check_finite("clamp", a.data)
    out = DiffArray(np.clip(a.data, lo, hi))
    mask = np.ones_like(a.data, dtype=bool)
    if lo is not None:
        mask &= a.data >= lo
    if hi is not None:
        mask &= a.data <= hi
    return out._attach("clamp", (a,), lambda g: (g * mask,))


# -- shape ops ----------------------------------------------------------------


def reshape(a, shape):
    out = DiffArray(a.data.reshape(shape))
    return out._attach("reshape", (a,), lambda g: (g.reshape(a.shape),))


def transpose(a, axes=None):
    out = DiffArray(np.transpose(a.data, axes))
    if axes is None:
        inv = None
    else:
        inv = np.argsort(axes)
    return out._attach("transpose", (a,), lambda g: (np.transpose(g, inv),))


def concat(arrays, axis=0):
    arrays = list(arrays)
    out = DiffArray(np.concatenate([a.data for a in arrays], axis=axis))
    sizes = [a.shape[axis] for a in arrays]
    splits = np.cumsum(sizes)[:-1]

    def grad_fn(g):
        return tuple(np.split(g, splits, axis=axis))

    return out._attach("concat", tuple(arrays), grad_fn)


# -- reductions ---------------------------------------------------------------


def sum_(a, axis=None, keepdims=False):
    out = DiffArray(a.data.sum(axis=axis, keepdims=keepdims))

    def grad_fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).astype(a.dtype, copy=False),)

    return out._attach("sum", (a,), grad_fn)


def mean(a, axis=None, keepdims=False):
    out = DiffArray(a.data.mean(axis=axis, keepdims=keepdims))
    count = a.size if axis is None else a.shape[axis]

    def grad_fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count, a.shape).astype(a.dtype, copy=False),)

    return out._attach("mean", (a,), grad_fn)


# -- linear algebra -------------------------------------------------------------


def matmul(a, b):
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeMismatch(
            f"matmul: expected 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatch(
            f"matmul: inner dimensions differ, {a.shape} vs {b.shape}")
    _check_finite("matmul", a.data, b.data)
    out = DiffArray(a.data @ b.data)
    return out._attach("matmul", (a, b), lambda g: (
        g @ b.data.T, a.data.T @ g))


def dense(x, w, b=None):
    """Affine map x @ w + b with w of shape (in, out)."""
    out = matmul(x, w)
    if b is not None:
        out = add(out, b)
    return out


# -- softmax family -------------------------------------------------------------


def softmax(a, axis=-1):
    _check_finite("softmax", a.data)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    val = e / e.sum(axis=axis, keepdims=True)
    out = DiffArray(val)

    def grad_fn(g):
        dot = (g * val).sum(axis=axis, keepdims=True)
        return ((g - dot) * val,)

    return out._attach("softmax", (a,), grad_fn)


def log_softmax(a, axis=-1):
    _check_finite("log_softmax", a.data)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    val = shifted - lse
    out = DiffArray(val)
    soft = np.exp(val)

    def grad_fn(g):
        return (g - soft * g.sum(axis=axis, keepdims=True),)

    return out._attach("log_softmax", (a,), grad_fn)


# -- convolution and pooling -----------------------------------------------------


def _same_pad(kernel):
    # total pad kernel-1, left-heavier on odd totals
    total = kernel - 1
    left = (total + 1) // 2
    return left, total - left


def conv1d(x, w, b=None, stride=1, padding="same"):
    """Cross-correlation over (N, C_in, L) with kernel (C_out, C_in, K)."""
    if x.ndim != 3 or w.ndim != 3:
        raise ShapeMismatch(
            f"conv1d: expected (N,C,L) input and (O,C,K) kernel, got {x.shape} and {w.shape}")
    if x.shape[1] != w.shape[1]:
        raise ShapeMismatch(
            f"conv1d: channel mismatch, input {x.shape} vs kernel {w.shape}")
    _check_finite("conv1d", x.data, w.data)
    n, c_in, length = x.shape
    c_out, _, kernel = w.shape
    if padding == "same":
        pl, pr = _same_pad(kernel)
    elif padding == "valid":
        pl = pr = 0
    else:
        pl = pr = int(padding)
    xp = np.pad(x.data, ((0, 0), (0, 0), (pl, pr))) if (pl or pr) else x.data
    l_pad = xp.shape[2]
    if l_pad < kernel:
        raise ShapeMismatch(
            f"conv1d: padded length {l_pad} shorter than kernel {kernel}")
    l_out = (l_pad - kernel) // stride + 1
    cols = np.lib.stride_tricks.sliding_window_view(xp, kernel, axis=2)[:, :, ::stride]
    # cols: (N, C_in, L_out, K) -> (N*L_out, C_in*K)
    cols2d = np.ascontiguousarray(cols.transpose(0, 2, 1, 3)).reshape(n * l_out, c_in * kernel)
    w2d = w.data.reshape(c_out, c_in * kernel)
    out_val = (cols2d @ w2d.T).reshape(n, l_out, c_out).transpose(0, 2, 1)
    if b is not None:
        out_val = out_val + b.data.reshape(1, c_out, 1)
    out = DiffArray(np.ascontiguousarray(out_val))
    parents = (x, w) if b is None else (x, w, b)

    def grad_fn(g):
        g2d = np.ascontiguousarray(g.transpose(0, 2, 1)).reshape(n * l_out, c_out)
        grad_w = (g2d.T @ cols2d).reshape(c_out, c_in, kernel)
        grad_cols = (g2d @ w2d).reshape(n, l_out, c_in, kernel).transpose(0, 2, 1, 3)
        grad_xp = np.zeros_like(xp)
        for k in range(kernel):
            grad_xp[:, :, k:k + stride * l_out:stride] += grad_cols[:, :, :, k]
        grad_x = grad_xp[:, :, pl:l_pad - pr] if (pl or pr) else grad_xp
        if b is None:
            return grad_x, grad_w
        return grad_x, grad_w, g.sum(axis=(0, 2))

    return out._attach("conv1d", parents, grad_fn)


def max_pool1d(x, window=2):
    """Non-overlapping max pooling; trailing remainder is dropped."""
    if x.ndim != 3:
        raise ShapeMismatch(f"max_pool1d: expected (N,C,L), got {x.shape}")
    _check_finite("max_pool1d", x.data)
    n, c, length = x.shape
    l_out = length // window
    trimmed = x.data[:, :, :l_out * window].reshape(n, c, l_out, window)
    idx = trimmed.argmax(axis=3)  # first max wins ties
    val = np.take_along_axis(trimmed, idx[..., None], axis=3)[..., 0]
    out = DiffArray(val)

    def grad_fn(g):
        gw = np.zeros_like(trimmed)
        np.put_along_axis(gw, idx[..., None], g[..., None], axis=3)
        gx = np.zeros_like(x.data)
        gx[:, :, :l_out * window] = gw.reshape(n, c, l_out * window)
        return (gx,)

    return out._attach("max_pool1d", (x,), grad_fn)


def adaptive_max_pool1d(x, out_len):
    """Max over out_len contiguous bins covering the full length."""
    if x.ndim != 3:
        raise ShapeMismatch(f"adaptive_max_pool1d: expected (N,C,L), got {x.shape}")
    _check_finite("adaptive_max_pool1d", x.data)
    n, c, length = x.shape
    if length < out_len:
        raise ShapeMismatch(
            f"adaptive_max_pool1d: input length {length} < output length {out_len}")
    starts = [(i * length) // out_len for i in range(out_len)]
    ends = [-(-((i + 1) * length) // out_len) for i in range(out_len)]
    vals = np.empty((n, c, out_len), dtype=x.dtype)
    idxs = np.empty((n, c, out_len), dtype=np.int64)
    for i, (s, e) in enumerate(zip(starts, ends)):
        seg = x.data[:, :, s:e]
        local = seg.argmax(axis=2)
        idxs[:, :, i] = local + s
        vals[:, :, i] = np.take_along_axis(seg, local[..., None], axis=2)[..., 0]
    out = DiffArray(vals)

    def grad_fn(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, (np.arange(n)[:, None, None], np.arange(c)[None, :, None], idxs), g)
        return (gx,)

    return out._attach("adaptive_max_pool1d", (x,), grad_fn)


# -- batch norm -----------------------------------------------------------------


def batch_norm(x, gamma, beta, running_mean=None, running_var=None,
               training=True, momentum=0.1, eps=1e-5):
    """Normalize per feature over the batch (and length axis for (N,C,L)).

    Running buffers, when given, are plain numpy arrays updated in place
    during training and used verbatim in eval mode.
    """
    if x.ndim == 2:
        axes = (0,)
    elif x.ndim == 3:
        axes = (0, 2)
    else:
        raise ShapeMismatch(f"batch_norm: expected 2-D or 3-D input, got {x.shape}")
    _check_finite("batch_norm", x.data)
    count = 1
    for ax in axes:
        count *= x.shape[ax]
    if training and count < 2:
        raise ShapeMismatch(
            f"batch_norm: batch statistics need >= 2 samples per feature, got {count}")

    def shaped(v):
        if x.ndim == 3:
            return v.reshape(1, -1, 1)
        return v.reshape(1, -1)

    if training:
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        if running_mean is not None:
            running_mean *= 1.0 - momentum
            running_mean += momentum * mu
            running_var *= 1.0 - momentum
            running_var += momentum * var
    else:
        if running_mean is None or running_var is None:
            raise ValueError("batch_norm: eval mode requires running statistics")
        mu, var = running_mean, running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - shaped(mu)) * shaped(inv_std)
    out = DiffArray(xhat * shaped(gamma.data) + shaped(beta.data))

    def grad_fn(g):
        dgamma = (g * xhat).sum(axis=axes)
        dbeta = g.sum(axis=axes)
        gs = g * shaped(gamma.data)
        if training:
            m1 = gs.mean(axis=axes)
            m2 = (gs * xhat).mean(axis=axes)
            dx = shaped(inv_std) * (gs - shaped(m1) - xhat * shaped(m2))
        else:
            dx = gs * shaped(inv_std)
        return dx, dgamma, dbeta

    return out._attach("batch_norm", (x, gamma, beta), grad_fn)


# -- dropout ----------------------------------------------------------------------


def dropout(x, p, rng, training=True):
    """Inverted-scaling dropout; identity when not training or p == 0."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout: probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    _check_finite("dropout", x.data)
    keep = 1.0 - p
    mask = (rng.random(x.shape) >= p).astype(x.dtype) / keep
    out = DiffArray(x.data * mask)
    return out._attach("dropout", (x,), lambda g: (g * mask,))


# -- gradient reversal --------------------------------------------------------------


def grad_reverse(x, lam=1.0):
    """Identity forward; backward multiplies the gradient by -lam."""
    out = DiffArray(x.data)
    return out._attach("grad_reverse", (x,), lambda g: (-lam * g,))
