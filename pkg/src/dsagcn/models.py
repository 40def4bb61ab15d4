"""Network assembly: the full graph model and its ablation variants.

The shared trunk is a five-stage 1-D CNN (wide first kernel, halving pools,
adaptive pool to 4) followed by a 256-wide dense reduction. Graph variants
continue through a per-batch similarity graph and two polynomial graph
convolutions; adversarial variants attach the reversal + discriminator head.
Every trainable parameter lands in exactly one of the three optimizer groups.
"""

import hashlib
import json
import zlib
from dataclasses import asdict, dataclass, field

import numpy as np

from . import adversarial as adv
from . import diffcore as dc
from . import graph as gg
from .diffcore import DiffArray, ParamGroup


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class ArchSpec:
    """Layer plan; stage tuples are (kernel, stride, out_channels)."""

    conv_stages: tuple = ((128, 1, 16), (64, 1, 32), (32, 1, 64),
                          (16, 1, 128), (3, 1, 128))
    pool_window: int = 2
    adaptive_out: int = 4
    fc1_width: int = 256
    fc1_dropout: float = 0.5
    ggl_dropout: float = 0.5
    tagcn_widths: tuple = (128, 256)
    disc_hidden: tuple = (128, 128)
    disc_dropout: float = 0.5

    def digest(self):
        doc = json.dumps(asdict(self), sort_keys=True)
        return hashlib.sha256(doc.encode()).hexdigest()[:16]

    @property
    def flat_width(self):
        return self.conv_stages[-1][2] * self.adaptive_out

    @property
    def feature_width(self):
        return self.tagcn_widths[-1]


@dataclass(frozen=True)
class VariantSpec:
    graph: bool
    adversarial: bool
    third_loss: str | None


VARIANTS = {
    "DSAGCN": VariantSpec(graph=True, adversarial=True, third_loss="lmmd"),
    "CNN": VariantSpec(graph=False, adversarial=False, third_loss=None),
    "BASELINE": VariantSpec(graph=True, adversarial=False, third_loss=None),
    "UDACNN": VariantSpec(graph=False, adversarial=True, third_loss="lmmd"),
    "GC_MMD": VariantSpec(graph=True, adversarial=True, third_loss="mmd"),
    "GC_MKMMD": VariantSpec(graph=True, adversarial=True, third_loss="mkmmd"),
    "GC_CORAL": VariantSpec(graph=True, adversarial=True, third_loss="coral"),
}


def variant_spec(variant):
    try:
        return VARIANTS[variant.upper()]
    except KeyError:
        raise ModelError(
            f"unknown variant {variant!r}; expected one of {sorted(VARIANTS)}")


@dataclass
class Taps:
    """Intermediate activations exposed by one forward pass."""

    x_cnn: DiffArray
    h_fc1: DiffArray
    h_feat: DiffArray            # classifier input (graph output when present)
    logits: DiffArray
    domain_probs: DiffArray | None
    graph: gg.GraphBatch | None
    n_source: int

    def source_logits(self):
        return self.logits[:self.n_source]

    def target_logits(self):
        return self.logits[self.n_source:]

    def source_features(self):
        return self.h_feat[:self.n_source]

    def target_features(self):
        return self.h_feat[self.n_source:]


def _site_rng(seed, site):
    # site-keyed streams keep randomness identical across variants that
    # share a layer, regardless of which other layers exist
    key = zlib.crc32(site.encode())
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(key,)))


class _BatchNorm:
    def __init__(self, width, dtype):
        self.gamma = dc.parameter(np.ones(width, dtype=dtype))
        self.beta = dc.parameter(np.zeros(width, dtype=dtype))
        self.running_mean = np.zeros(width, dtype=dtype)
        self.running_var = np.ones(width, dtype=dtype)

    def __call__(self, x, training):
        return dc.batch_norm(x, self.gamma, self.beta,
                             running_mean=self.running_mean,
                             running_var=self.running_var,
                             training=training)


class Model:
    """One built variant: parameters, buffers, and the forward pass."""

    def __init__(self, variant, class_count, window=1024, hops=2, k_topk=None,
                 graph_scope="joint", seed=0, dtype=np.float32, arch=None,
                 dropout_enabled=True):
        if class_count < 2:
            raise ModelError(f"class_count must be >= 2, got {class_count}")
        if graph_scope not in ("joint", "per_domain"):
            raise ModelError(f"graph_scope must be joint or per_domain")
        self.variant = variant.upper()
        self.spec = variant_spec(variant)
        self.arch = arch or ArchSpec()
        self.class_count = class_count
        self.window = window
        self.hops = hops
        self.k_topk = k_topk
        self.graph_scope = graph_scope
        self.seed = seed
        self.dtype = np.dtype(dtype).type
        self.dropout_enabled = dropout_enabled

        self.theta_g = ParamGroup("theta_g", "feature_extractor")
        self.theta_d = ParamGroup("theta_d", "discriminator")
        self.theta_c = ParamGroup("theta_c", "classifier")
        self._bns = {}
        self._drop_rngs = {}
        self._build()

    # ------------------------------------------------------------- build

    def _init(self, site, shape, fans=None):
        rng = _site_rng(self.seed, "init/" + site)
        return dc.xavier_uniform(shape, rng, dtype=self.dtype, fans=fans)

    def _bn(self, site, width, group):
        bn = _BatchNorm(width, self.dtype)
        group.add(site + ".gamma", bn.gamma)
        group.add(site + ".beta", bn.beta)
        self._bns[site] = bn
        return bn

    def _dropout_rng(self, site):
        self._drop_rngs[site] = _site_rng(self.seed, "drop/" + site)
        return self._drop_rngs[site]

    def _build(self):
        arch, g = self.arch, self.theta_g
        in_ch = 1
        self.convs = []
        for i, (kernel, stride, out_ch) in enumerate(arch.conv_stages, start=1):
            w = g.add(f"conv{i}.w", self._init(f"conv{i}", (out_ch, in_ch, kernel)))
            b = g.add(f"conv{i}.b", dc.parameter(np.zeros(out_ch, dtype=self.dtype)))
            bn = self._bn(f"conv{i}.bn", out_ch, g)
            self.convs.append((w, b, stride, bn))
            in_ch = out_ch
        self.fc1_w = g.add("fc1.w", self._init("fc1", (arch.flat_width, arch.fc1_width)))
        self.fc1_b = g.add("fc1.b", dc.parameter(np.zeros(arch.fc1_width, dtype=self.dtype)))
        self._dropout_rng("fc1")

        feat_width = arch.fc1_width
        if self.spec.graph:
            self._dropout_rng("ggl")
            self.tagcn = []
            width_in = arch.fc1_width
            for i, width_out in enumerate(arch.tagcn_widths, start=1):
                alpha = g.add(f"tagcn{i}.alpha", self._init(
                    f"tagcn{i}", (self.hops + 1, width_in, width_out),
                    fans=((self.hops + 1) * width_in, width_out)))
                bias = g.add(f"tagcn{i}.bias",
                             dc.parameter(np.zeros(width_out, dtype=self.dtype)))
                bn = self._bn(f"tagcn{i}.bn", width_out, g)
                self.tagcn.append((gg.TagcnLayerParams(alpha, bias), bn))
                width_in = width_out
            feat_width = width_in
        self.feature_width = feat_width

        self.cls_w = self.theta_c.add("fc5.w", self._init("fc5", (feat_width, self.class_count)))
        self.cls_b = self.theta_c.add("fc5.b",
                                      dc.parameter(np.zeros(self.class_count, dtype=self.dtype)))

        if self.spec.adversarial:
            disc = adv.init_discriminator(
                feat_width, lambda site: _site_rng(self.seed, "init/" + site),
                hidden=arch.disc_hidden, dtype=self.dtype)
            self.disc_params = {}
            for name, p in disc.items():
                self.disc_params[name] = self.theta_d.add("disc." + name, p)
            for name in ("fc2", "fc3"):
                self._dropout_rng("disc." + name)

    # ------------------------------------------------------------- forward

    def groups(self):
        return [self.theta_g, self.theta_d, self.theta_c]

    def zero_grad(self):
        for group in self.groups():
            group.zero_grad()

    def _drop(self, x, rate, site, training):
        on = training and self.dropout_enabled and rate > 0
        return dc.dropout(x, rate, self._drop_rngs[site], training=on) if on else x

    def _cnn(self, x, training):
        arch = self.arch
        for i, (w, b, stride, bn) in enumerate(self.convs):
            x = dc.relu(bn(dc.conv1d(x, w, b, stride=stride, padding="same"), training))
            if i < len(self.convs) - 1:
                x = dc.max_pool1d(x, arch.pool_window)
            else:
                x = dc.adaptive_max_pool1d(x, arch.adaptive_out)
        return dc.reshape(x, (x.shape[0], arch.flat_width))

    def _graph_block(self, x, training):
        x = self._drop(x, self.arch.ggl_dropout, "ggl", training)
        batch = gg.build_graph(x, self.k_topk)
        out = x
        for params, bn in self.tagcn:
            out = bn(gg.tagcn_forward(out, batch.normalized, params), training)
        return batch, out

    def forward(self, source_windows, target_windows=None, training=True,
                grl_scale=1.0):
        """Run the variant end to end and expose the layer taps.

        Source and target windows are concatenated into one stream; graph
        variants build a single graph over the combined batch unless
        graph_scope is per_domain.
        """
        xs = np.asarray(source_windows, dtype=self.dtype)
        if xs.ndim != 2 or xs.shape[0] == 0:
            raise ModelError(f"forward: expected a non-empty (n, window) batch, "
                             f"got shape {xs.shape}")
        n_source = xs.shape[0]
        if target_windows is not None:
            xt = np.asarray(target_windows, dtype=self.dtype)
            if xt.shape[1] != xs.shape[1]:
                raise ModelError(
                    f"forward: window mismatch, source {xs.shape} vs target {xt.shape}")
            stream = np.concatenate([xs, xt], axis=0)
        else:
            stream = xs
        x = DiffArray(stream[:, None, :])

        x_cnn = self._cnn(x, training)
        h_fc1 = self._drop(dc.relu(dc.dense(x_cnn, self.fc1_w, self.fc1_b)),
                           self.arch.fc1_dropout, "fc1", training)

        graph_batch = None
        h = h_fc1
        if self.spec.graph:
            if self.graph_scope == "per_domain" and target_windows is not None:
                gb_s, h_s = self._graph_block(h_fc1[:n_source], training)
                gb_t, h_t = self._graph_block(h_fc1[n_source:], training)
                graph_batch, h = gb_s, dc.concat([h_s, h_t], axis=0)
            else:
                graph_batch, h = self._graph_block(h_fc1, training)

        logits = dc.dense(h, self.cls_w, self.cls_b)

        domain_probs = None
        if self.spec.adversarial:
            rev = dc.grad_reverse(h, grl_scale)
            domain_probs = adv.discriminator_forward(
                rev, self.disc_params,
                dropout_rngs={k.split(".")[1]: v for k, v in self._drop_rngs.items()
                              if k.startswith("disc.")},
                training=training and self.dropout_enabled,
                dropout=self.arch.disc_dropout)

        return Taps(x_cnn, h_fc1, h, logits, domain_probs, graph_batch, n_source)

    # ------------------------------------------------------------- persistence

    def parameter_census(self):
        return {g.name: g.count() for g in self.groups()}

    def state_arrays(self):
        out = {}
        for group in self.groups():
            for name, p in group.items():
                out[f"{group.name}.{name}"] = p.data
        for site, bn in self._bns.items():
            out[f"buffer.{site}.running_mean"] = bn.running_mean
            out[f"buffer.{site}.running_var"] = bn.running_var
        return out

    def meta(self):
        return {
            "variant": self.variant,
            "class_count": self.class_count,
            "window": self.window,
            "hops": self.hops,
            "k_topk": self.k_topk,
            "graph_scope": self.graph_scope,
            "seed": self.seed,
            "dtype": np.dtype(self.dtype).str,
            "arch_digest": self.arch.digest(),
        }

    def save(self, path):
        dc.save_checkpoint(path, self.state_arrays(), meta=self.meta())

    def load_state(self, arrays):
        current = self.state_arrays()
        for name, value in current.items():
            if name not in arrays:
                raise ModelError(f"checkpoint missing entry {name}")
            if tuple(arrays[name].shape) != tuple(value.shape):
                raise ModelError(
                    f"checkpoint entry {name} has shape {arrays[name].shape}, "
                    f"model expects {value.shape}")
        for group in self.groups():
            for name, p in group.items():
                p.data = arrays[f"{group.name}.{name}"].astype(self.dtype)
        for site, bn in self._bns.items():
            bn.running_mean[...] = arrays[f"buffer.{site}.running_mean"]
            bn.running_var[...] = arrays[f"buffer.{site}.running_var"]


def build_model(variant, class_count, **kwargs):
    return Model(variant, class_count, **kwargs)


def load_model(path):
    """Rebuild a model from a checkpoint, validating variant and layout."""
    arrays, meta = dc.load_checkpoint(path)
    model = Model(meta["variant"], meta["class_count"], window=meta["window"],
                  hops=meta["hops"], k_topk=meta["k_topk"],
                  graph_scope=meta["graph_scope"], seed=meta["seed"],
                  dtype=np.dtype(meta["dtype"]).type)
    if model.arch.digest() != meta["arch_digest"]:
        raise ModelError(
            f"checkpoint arch digest {meta['arch_digest']} does not match "
            f"this build ({model.arch.digest()})")
    model.load_state(arrays)
    return model
