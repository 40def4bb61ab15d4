"""Per-batch similarity graphs and topology-adaptive graph convolution.

Each mini-batch becomes one graph: nodes are samples, edges are row-wise
top-k cosine similarities, and the kept adjacency is symmetrically
normalized so its spectrum stays inside the unit circle. The convolution is
a degree-K polynomial in the normalized adjacency, applied by iterated
propagation instead of materialized matrix powers.
"""

from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from .diffcore import DiffArray


class GraphError(ValueError):
    pass


@dataclass
class GraphBatch:
    node_features: DiffArray   # (N, d)
    raw: DiffArray             # cosine similarities, (N, N)
    sparsified: DiffArray      # top-k rows, (N, N)
    normalized: DiffArray      # D^-1/2 (A_sym) D^-1/2, (N, N)


@dataclass
class TagcnLayerParams:
    alpha: DiffArray    # (K+1, P, F) polynomial coefficients
    bias: DiffArray     # (F,)

    @property
    def hops(self):
        return self.alpha.shape[0] - 1


def default_topk(n_nodes):
    """Rule used when no explicit neighbor count is configured."""
    return max(2, int(np.ceil(n_nodes / 10)))


def build_adjacency(x):
    """Cosine-similarity adjacency of row features; diagonal pinned to 1.

    Rows are L2-normalized first; all-zero rows produce zero similarity to
    everything except their own (constant) diagonal entry.
    """
    if x.ndim != 2:
        raise GraphError(f"build_adjacency: expected (N, d) features, got {x.shape}")
    if not np.all(np.isfinite(x.data)):
        raise GraphError("build_adjacency: non-finite features")
    n = x.shape[0]
    norm = dc.sqrt(dc.sum_(x * x, axis=1, keepdims=True))
    nonzero = (norm.data > 0).astype(x.dtype)
    unit = x / dc.clamp(norm, lo=1e-12) * DiffArray(nonzero)
    sims = dc.matmul(unit, dc.transpose(unit))
    eye = np.eye(n, dtype=x.dtype)
    out = sims * DiffArray(1.0 - eye) + DiffArray(eye)
    # unit rows keep dot products in [-1, 1]; shave off float rounding spill
    np.clip(out.data, -1.0, 1.0, out=out.data)
    return out


def topk_sparsify(adj, k_topk):
    """Keep the k largest entries per row (ties to the lower column index).

    The selection mask is constant during backward; gradient flows only
    through the surviving entries.
    """
    if k_topk < 1:
        raise GraphError(f"topk_sparsify: k must be >= 1, got {k_topk}")
    k = min(k_topk, adj.shape[1])
    order = np.argsort(-adj.data, axis=1, kind="stable")[:, :k]
    mask = np.zeros_like(adj.data)
    np.put_along_axis(mask, order, 1.0, axis=1)
    return adj * DiffArray(mask)


def normalize_adjacency(adj):
    """Clamp negatives, symmetrize, then scale by inverse sqrt degrees."""
    nonneg = dc.clamp(adj, lo=0.0)
    sym = (nonneg + dc.transpose(nonneg)) * 0.5
    deg = dc.sum_(sym, axis=1)
    if np.any(deg.data <= 0):
        raise GraphError("normalize_adjacency: zero-degree node")
    inv_sqrt = dc.power(deg, -0.5)
    n = adj.shape[0]
    return sym * dc.reshape(inv_sqrt, (n, 1)) * dc.reshape(inv_sqrt, (1, n))


def build_graph(x, k_topk=None):
    """Full pipeline from node features to the normalized batch graph."""
    k = default_topk(x.shape[0]) if k_topk is None else k_topk
    raw = build_adjacency(x)
    sparsified = topk_sparsify(raw, k)
    return GraphBatch(x, raw, sparsified, normalize_adjacency(sparsified))


def tagcn_forward(x, adj_norm, params):
    """Polynomial graph filter: y[:,f] = sum_p sum_k alpha[k,p,f] A^k x[:,p] + b.

    Powers of the adjacency are never formed; each hop propagates the
    running signal once, keeping the cost linear in the hop count.
    """
    alpha, bias = params.alpha, params.bias
    if alpha.ndim != 3:
        raise GraphError(f"tagcn_forward: alpha must be (K+1, P, F), got {alpha.shape}")
    n, p = x.shape
    if alpha.shape[1] != p:
        raise GraphError(
            f"tagcn_forward: feature width {p} does not match alpha {alpha.shape}")
    if adj_norm.shape != (n, n):
        raise GraphError(
            f"tagcn_forward: adjacency {adj_norm.shape} does not match {n} nodes")
    prop = x
    out = dc.matmul(prop, alpha[0])
    for k in range(1, alpha.shape[0]):
        prop = dc.matmul(adj_norm, prop)
        out = out + dc.matmul(prop, alpha[k])
    return out + bias


def graph_batch_norm(x, gamma, beta, running_mean=None, running_var=None,
                     training=True, momentum=0.1, eps=1e-5):
    """Per-feature normalization over the batch of graph nodes."""
    if x.ndim != 2:
        raise GraphError(f"graph_batch_norm: expected (N, F) input, got {x.shape}")
    return dc.batch_norm(x, gamma, beta, running_mean=running_mean,
                         running_var=running_var, training=training,
                         momentum=momentum, eps=eps)


def dump_coordinate_list(adj, path):
    """Write nonzero adjacency entries as 'row col weight' text lines."""
    rows, cols = np.nonzero(adj.data)
    with open(path, "w") as f:
        for r, c in zip(rows, cols):
            f.write(f"{r} {c} {adj.data[r, c]:.8g}\n")
