"""Training loop, evaluation, transfer-task matrix, sweeps, feature export.

One optimizer step follows the three-way parameter split: the feature
extractor minimizes the full weighted objective (the reversal layer carries
the adversarial sign and the mu weight), the discriminator sees only the
adversarial loss, and the classifier only the source cross entropy. A single
backward pass realizes all three because the loss paths share no parameters
outside the feature extractor.
"""

import csv
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import adversarial as adv
from . import diffcore as dc
from . import losses as dl
from .data import DataError, batch_pairs
from .diffcore import DiffArray
from .models import build_model


class TrainingDiverged(RuntimeError):
    def __init__(self, step, value):
        super().__init__(f"non-finite total loss at step {step}: {value}")
        self.step = step


@dataclass(frozen=True)
class TransferTask:
    source: str
    target: str

    def __post_init__(self):
        if self.source == self.target:
            raise ValueError("transfer task needs distinct source and target")

    def __str__(self):
        return f"{self.source}->{self.target}"


@dataclass
class TrainConfig:
    variant: str = "DSAGCN"
    lr: float = 0.001
    batch_size: int = 128
    epochs: int = 100
    mu: float = 1.0
    beta: float = 0.5
    hops: int = 2
    k_topk: int | None = None
    kernel: dl.KernelConfig = field(default_factory=dl.KernelConfig)
    grl: adv.GrlConfig = field(default_factory=adv.GrlConfig)
    lmmd_target_mode: str = "one_hot"
    graph_scope: str = "joint"
    seed: int = 0
    repetitions: int = 10
    dtype: str = "float32"
    dropout_enabled: bool = True

    def __post_init__(self):
        self.variant = self.variant.upper()
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if self.batch_size < 2:
            raise ValueError("batch size must be >= 2")
        if self.mu < 0 or self.beta < 0:
            raise ValueError("trade-off weights must be >= 0")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")


@dataclass
class LossRecord:
    step: int
    epoch: int
    l_c: float
    l_d: float
    l_third: float
    l_total: float
    target_acc: float | None = None


@dataclass
class TrainResult:
    model: object
    records: list
    target_accuracy: float
    wall_time_s: float
    lmmd_skipped: int


def total_loss(l_c, l_d, l_third, mu, beta):
    """Reported objective value; absent components enter as zero."""
    return float(l_c) + mu * float(l_d or 0.0) + beta * float(l_third or 0.0)


def classification_loss(logits, labels):
    """Mean cross entropy of source logits against integer labels."""
    labels = np.asarray(labels)
    n, c = logits.shape
    if labels.shape != (n,):
        raise ValueError(f"labels shape {labels.shape} does not match {n} logits rows")
    if labels.min() < 0 or labels.max() >= c:
        raise ValueError(
            f"label index out of range: saw {labels.min()}..{labels.max()} for {c} classes")
    onehot = np.zeros((n, c), dtype=logits.dtype)
    onehot[np.arange(n), labels] = 1.0
    logp = dc.log_softmax(logits)
    return -dc.mean(dc.sum_(logp * DiffArray(onehot), axis=1))


def _onehot(labels, n_classes, dtype):
    out = np.zeros((len(labels), n_classes), dtype=dtype)
    out[np.arange(len(labels)), labels] = 1.0
    return out


def train_step(model, cfg, source_batch, target_batch, states, step, progress=0.0):
    """One forward/backward/update; returns the per-step loss record.

    Every variant except CNN runs the paired stream through the network
    (graph and batch statistics span both domains); the source-only CNN
    never sees target windows during training.
    """
    spec = model.spec
    uses_target = spec.graph or spec.adversarial or spec.third_loss is not None
    grl_scale = cfg.grl.scale(progress) * cfg.mu
    l_d = l3 = None
    l_d_val = l_third_val = 0.0
    try:
        if uses_target:
            taps = model.forward(source_batch.windows, target_batch.windows,
                                 training=True, grl_scale=grl_scale)
        else:
            taps = model.forward(source_batch.windows, training=True)

        l_c = classification_loss(taps.source_logits(), source_batch.labels)

        if spec.adversarial:
            n = taps.n_source
            l_d = adv.domain_adversarial_loss(taps.domain_probs[:n],
                                              taps.domain_probs[n:])
            l_d_val = l_d.item()

        if spec.third_loss is not None:
            z_s, z_t = taps.source_features(), taps.target_features()
            if spec.third_loss == "lmmd":
                y_s = _onehot(source_batch.labels, model.class_count, np.float64)
                t_logits = taps.target_logits().data
                if cfg.lmmd_target_mode == "soft":
                    shifted = t_logits - t_logits.max(axis=1, keepdims=True)
                    y_t = np.exp(shifted) / np.exp(shifted).sum(axis=1, keepdims=True)
                else:
                    y_t = dl.pseudo_labels(t_logits)
                l3 = dl.lmmd(z_s, z_t, y_s, y_t, cfg.kernel,
                             target_mode=cfg.lmmd_target_mode)
            elif spec.third_loss == "mmd":
                l3 = dl.mmd_biased(z_s, z_t, cfg.kernel)
            elif spec.third_loss == "mkmmd":
                l3 = dl.mkmmd(z_s, z_t)
            else:
                l3 = dl.coral(z_s, z_t)
            l_third_val = l3.item()
    except dc.NonFiniteInput as exc:
        raise TrainingDiverged(step, str(exc)) from exc

    l_total = total_loss(l_c.item(), l_d_val, l_third_val, cfg.mu, cfg.beta)
    if not np.isfinite(l_total):
        raise TrainingDiverged(step, l_total)

    objective = l_c
    if l_d is not None:
        objective = objective + l_d      # mu rides on the reversal scale
    if l3 is not None and cfg.beta != 0.0:
        objective = objective + cfg.beta * l3

    model.zero_grad()
    objective.backward()
    for group in model.groups():
        if group.count():
            dc.adam_step(group, states[group.name])
    return LossRecord(step=step, epoch=0, l_c=l_c.item(), l_d=l_d_val,
                      l_third=l_third_val, l_total=l_total)


def train(task, cfg, splits):
    """Run the full loop for one transfer task and report the loss trace."""
    for cond in (task.source, task.target):
        if cond not in splits:
            raise DataError(f"no split available for condition {cond!r}")
    source = splits[task.source].train
    target = splits[task.target].train
    window = source.windows.shape[1]

    model = build_model(cfg.variant, class_count=int(source.labels.max()) + 1,
                        window=window, hops=cfg.hops, k_topk=cfg.k_topk,
                        graph_scope=cfg.graph_scope, seed=cfg.seed,
                        dtype=np.dtype(cfg.dtype).type,
                        dropout_enabled=cfg.dropout_enabled)
    states = {g.name: dc.AdamState(lr=cfg.lr) for g in model.groups()}
    data_rng = np.random.default_rng(np.random.SeedSequence(
        entropy=cfg.seed, spawn_key=(0xDA7A,)))

    dl.reset_lmmd_skipped()
    records = []
    step = 0
    total_steps = cfg.epochs * max(len(source) // cfg.batch_size,
                                   len(target) // cfg.batch_size, 1)
    started = time.perf_counter()
    accuracy = 0.0
    for epoch in range(1, cfg.epochs + 1):
        for sb, tb in batch_pairs(source, target, cfg.batch_size, data_rng):
            progress = step / max(total_steps - 1, 1)
            record = train_step(model, cfg, sb, tb, states, step, progress)
            record.epoch = epoch
            records.append(record)
            step += 1
        accuracy = evaluate(model, splits[task.target].test, cfg.batch_size)
        records[-1].target_acc = accuracy
    return TrainResult(model=model, records=records, target_accuracy=accuracy,
                       wall_time_s=time.perf_counter() - started,
                       lmmd_skipped=dl.lmmd_skipped_count())


def evaluate(model, sample_set, batch_size=128):
    """Accuracy (percent) of argmax predictions over a labeled sample set."""
    if len(sample_set) == 0:
        raise DataError("evaluate: empty split")
    correct = 0
    with dc.no_grad():
        for start in range(0, len(sample_set), batch_size):
            chunk = sample_set.windows[start:start + batch_size]
            taps = model.forward(chunk, training=False)
            pred = taps.logits.data.argmax(axis=1)
            correct += int((pred == sample_set.labels[start:start + batch_size]).sum())
    return 100.0 * correct / len(sample_set)


# ---------------------------------------------------------------- experiment drivers


@dataclass
class MatrixResult:
    rows: list        # dicts: source, target, repetition, seed, accuracy
    failures: list    # dicts: source, target, repetition, error


def run_task_matrix(splits, cfg, conditions=None):
    """All ordered source/target pairs, each repeated with shifted seeds."""
    conditions = list(conditions or splits.keys())
    if len(conditions) < 2:
        raise DataError("task matrix needs at least two conditions")
    rows, failures = [], []
    for source in conditions:
        for target in conditions:
            if source == target:
                continue
            task = TransferTask(source, target)
            for rep in range(cfg.repetitions):
                run_cfg = replace(cfg, seed=cfg.seed + rep)
                try:
                    result = train(task, run_cfg, splits)
                    rows.append({"source": source, "target": target,
                                 "repetition": rep, "seed": run_cfg.seed,
                                 "accuracy": result.target_accuracy})
                except Exception as exc:   # keep the rest of the matrix running
                    failures.append({"source": source, "target": target,
                                     "repetition": rep, "error": str(exc)})
    return MatrixResult(rows=rows, failures=failures)


def summarize_matrix(result):
    """Per-task mean and std accuracy over repetitions."""
    grouped = {}
    for row in result.rows:
        grouped.setdefault((row["source"], row["target"]), []).append(row["accuracy"])
    summary = []
    for (source, target), accs in sorted(grouped.items()):
        summary.append({
            "source": source, "target": target, "repetitions": len(accs),
            "mean_accuracy": float(np.mean(accs)),
            "std_accuracy": float(np.std(accs)),
        })
    return summary


def sweep_k(task, cfg, k_values, splits):
    """Accuracy and wall time per polynomial hop count."""
    rows = []
    for hops in k_values:
        result = train(task, replace(cfg, hops=int(hops)), splits)
        rows.append({"k": int(hops), "accuracy": result.target_accuracy,
                     "wall_time_s": result.wall_time_s})
    return rows


def sweep_tradeoffs(task, cfg, values, splits):
    """Full (beta, mu) grid of the loss trade-off weights."""
    rows = []
    for beta in values:
        for mu in values:
            result = train(task, replace(cfg, beta=float(beta), mu=float(mu)), splits)
            rows.append({"beta": float(beta), "mu": float(mu),
                         "accuracy": result.target_accuracy,
                         "wall_time_s": result.wall_time_s})
    return rows


# ---------------------------------------------------------------- feature export


EXPORT_TAPS = ("input", "cnn", "fc1", "tagcn", "classifier")


def export_features(model, sample_sets, taps, out_dir, batch_size=128):
    """Dump per-layer activations as CSV, one file per tap.

    sample_sets maps a domain tag to a SampleSet; each output row carries the
    features followed by the class label and the domain tag, ready for
    external embedding tools.
    """
    valid = [t for t in EXPORT_TAPS if t != "tagcn" or model.spec.graph]
    for tap in taps:
        if tap not in valid:
            raise ValueError(f"unknown tap {tap!r}; valid taps: {', '.join(valid)}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = {}
    collected = {tap: [] for tap in taps}
    meta = []
    with dc.no_grad():
        for domain, sample_set in sample_sets.items():
            for start in range(0, len(sample_set), batch_size):
                chunk = sample_set.windows[start:start + batch_size]
                labels = sample_set.labels[start:start + batch_size]
                result = model.forward(chunk, training=False)
                values = {
                    "input": chunk,
                    "cnn": result.x_cnn.data,
                    "fc1": result.h_fc1.data,
                    "tagcn": result.h_feat.data,
                    "classifier": dc.softmax(result.logits).data,
                }
                for tap in taps:
                    collected[tap].append(values[tap])
                meta.extend((int(label), domain) for label in labels)
    for tap in taps:
        path = out_dir / f"features_{tap}.csv"
        features = np.concatenate(collected[tap], axis=0)
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow([f"feat_{i}" for i in range(features.shape[1])]
                            + ["label", "domain"])
            for row, (label, domain) in zip(features, meta):
                writer.writerow([f"{v:.6g}" for v in row] + [label, domain])
        written[tap] = path
    return written


# ---------------------------------------------------------------- CSV writers


def write_trace_csv(records, path):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["step", "epoch", "L_c", "L_d", "L_third", "L_total",
                         "target_acc"])
        for r in records:
            acc = "" if r.target_acc is None else f"{r.target_acc:.4f}"
            writer.writerow([r.step, r.epoch, f"{r.l_c:.8g}", f"{r.l_d:.8g}",
                             f"{r.l_third:.8g}", f"{r.l_total:.8g}", acc])


def write_matrix_csv(result, path):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["source", "target", "repetition", "accuracy", "seed"])
        for row in result.rows:
            writer.writerow([row["source"], row["target"], row["repetition"],
                             f"{row['accuracy']:.4f}", row["seed"]])


def write_summary_csv(summary, path):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["source", "target", "repetitions", "mean_accuracy",
                         "std_accuracy"])
        for row in summary:
            writer.writerow([row["source"], row["target"], row["repetitions"],
                             f"{row['mean_accuracy']:.4f}",
                             f"{row['std_accuracy']:.4f}"])


def write_rows_csv(rows, path, columns):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([row[c] for c in columns])
