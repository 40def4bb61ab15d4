"""Command-line surface: dataset generation, training, evaluation, sweeps.

Every run resolves its configuration from defaults, an optional JSON config
file, and explicit flags (in increasing precedence), writes the resolved
snapshot next to its outputs, and renders report figures alongside the CSVs.
"""

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import figures
from . import training as tt
from .adversarial import GrlConfig
from .data import (SplitSpec, SynthConfig, load_manifest, make_splits,
                   write_synth)
from .graph import dump_coordinate_list
from .losses import KernelConfig
from .models import load_model
from .training import TransferTask, TrainConfig

TRAIN_DEFAULTS = {
    "variant": "DSAGCN",
    "lr": 0.001,
    "batch_size": 128,
    "epochs": 100,
    "mu": 1.0,
    "beta": 0.5,
    "hops": 2,
    "k_topk": None,
    "seed": 0,
    "repetitions": 10,
    "train_per_class": 200,
    "test_per_class": 50,
    "split_seed": 0,
    "graph_scope": "joint",
    "bandwidths": None,
}


def _out_dir(opts, command):
    base = opts.get("out") or os.environ.get("DSAGCN_OUT") or "runs"
    path = Path(base) if opts.get("out") else Path(base) / command
    path.mkdir(parents=True, exist_ok=True)
    return path


def _resolve(args, defaults):
    """defaults < config file < explicit flags."""
    merged = dict(defaults)
    supplied = {k: v for k, v in vars(args).items() if v is not None}
    config_path = supplied.pop("config", None)
    if config_path:
        merged.update(json.loads(Path(config_path).read_text()))
    merged.update(supplied)
    merged.pop("func", None)
    merged.pop("command", None)
    return merged


def _snapshot(opts, out_dir):
    doc = {k: v for k, v in opts.items() if not callable(v)}
    (out_dir / "resolved_config.json").write_text(json.dumps(doc, indent=2, default=str))


def _train_config(opts):
    kernel = (KernelConfig(bandwidths=tuple(opts["bandwidths"]))
              if opts.get("bandwidths") else KernelConfig())
    return TrainConfig(
        variant=opts["variant"], lr=opts["lr"], batch_size=opts["batch_size"],
        epochs=opts["epochs"], mu=opts["mu"], beta=opts["beta"],
        hops=opts["hops"], k_topk=opts["k_topk"], kernel=kernel,
        grl=GrlConfig(), graph_scope=opts["graph_scope"], seed=opts["seed"],
        repetitions=opts["repetitions"],
    )


def _splits(opts):
    manifest = load_manifest(opts["manifest"])
    spec = SplitSpec(train_per_class=opts["train_per_class"],
                     test_per_class=opts["test_per_class"],
                     seed=opts["split_seed"])
    return manifest, make_splits(manifest, spec, Path(opts["manifest"]).parent)


# ---------------------------------------------------------------- commands


def cmd_synth_gen(args):
    defaults = {"classes": 4, "conditions": 2, "windows_per_class": 250,
                "window": 1024, "seed": 0, "out": None}
    opts = _resolve(args, defaults)
    out_dir = _out_dir(opts, "synth")
    cfg = SynthConfig(n_classes=opts["classes"], n_conditions=opts["conditions"],
                      windows_per_class=opts["windows_per_class"],
                      window=opts["window"], seed=opts["seed"])
    path = write_synth(cfg, out_dir)
    _snapshot(opts, out_dir)
    print(f"wrote {path}")
    return 0


def cmd_train(args):
    opts = _resolve(args, {**TRAIN_DEFAULTS, "out": None})
    out_dir = _out_dir(opts, "train")
    manifest, splits = _splits(opts)
    task = TransferTask(opts["source"], opts["target"])
    cfg = _train_config(opts)
    result = tt.train(task, cfg, splits)
    ckpt = out_dir / f"{task.source}_{task.target}_{cfg.variant}.ckpt"
    result.model.save(ckpt)
    tt.write_trace_csv(result.records, out_dir / "loss_trace.csv")
    figures.loss_curves(result.records, out_dir / "loss_trace.png",
                        title=f"{task} [{cfg.variant}]")
    _snapshot(opts, out_dir)
    print(f"task {task} variant {cfg.variant}: "
          f"target accuracy {result.target_accuracy:.2f}% "
          f"({result.wall_time_s:.1f}s, checkpoint {ckpt})")
    return 0


def cmd_eval(args):
    opts = _resolve(args, {"train_per_class": 200, "test_per_class": 50,
                           "split_seed": 0, "batch_size": 128, "out": None})
    out_dir = _out_dir(opts, "eval")
    manifest, splits = _splits(opts)
    model = load_model(opts["checkpoint"])
    accuracy = tt.evaluate(model, splits[opts["condition"]].test,
                           batch_size=opts["batch_size"])
    (out_dir / "metrics.json").write_text(json.dumps(
        {"condition": opts["condition"], "accuracy": accuracy,
         "variant": model.variant}, indent=2))
    _snapshot(opts, out_dir)
    print(f"condition {opts['condition']}: accuracy {accuracy:.2f}%")
    return 0


def cmd_matrix(args):
    opts = _resolve(args, {**TRAIN_DEFAULTS, "out": None})
    out_dir = _out_dir(opts, "matrix")
    manifest, splits = _splits(opts)
    cfg = _train_config(opts)
    result = tt.run_task_matrix(splits, cfg)
    summary = tt.summarize_matrix(result)
    tt.write_matrix_csv(result, out_dir / "task_matrix.csv")
    tt.write_summary_csv(summary, out_dir / "task_matrix_summary.csv")
    figures.matrix_bars(summary, out_dir / "task_matrix.png",
                        title=f"{manifest.name} [{cfg.variant}]")
    if result.failures:
        tt.write_rows_csv(result.failures, out_dir / "failures.csv",
                          ["source", "target", "repetition", "error"])
    _snapshot(opts, out_dir)
    for row in summary:
        print(f"{row['source']}->{row['target']}: "
              f"{row['mean_accuracy']:.2f} +/- {row['std_accuracy']:.2f}")
    return 0 if not result.failures else 1


def cmd_sweep_k(args):
    opts = _resolve(args, {**TRAIN_DEFAULTS, "k": "1,2,4,5,10,25,50,100", "out": None})
    out_dir = _out_dir(opts, "sweep_k")
    manifest, splits = _splits(opts)
    cfg = _train_config(opts)
    k_values = [int(v) for v in str(opts["k"]).split(",")]
    task = TransferTask(opts["source"], opts["target"])
    rows = tt.sweep_k(task, cfg, k_values, splits)
    tt.write_rows_csv(rows, out_dir / "sweep_k.csv", ["k", "accuracy", "wall_time_s"])
    figures.sweep_k_plot(rows, out_dir / "sweep_k.png")
    _snapshot(opts, out_dir)
    for row in rows:
        print(f"k={row['k']}: {row['accuracy']:.2f}% in {row['wall_time_s']:.1f}s")
    return 0


def cmd_sweep_tradeoffs(args):
    opts = _resolve(args, {**TRAIN_DEFAULTS,
                           "values": "0,0.01,0.05,0.1,0.5,1", "out": None})
    out_dir = _out_dir(opts, "sweep_tradeoffs")
    manifest, splits = _splits(opts)
    cfg = _train_config(opts)
    values = [float(v) for v in str(opts["values"]).split(",")]
    task = TransferTask(opts["source"], opts["target"])
    rows = tt.sweep_tradeoffs(task, cfg, values, splits)
    tt.write_rows_csv(rows, out_dir / "sweep_tradeoffs.csv",
                      ["beta", "mu", "accuracy", "wall_time_s"])
    figures.tradeoff_heatmap(rows, out_dir / "sweep_tradeoffs.png")
    _snapshot(opts, out_dir)
    print(f"wrote {len(rows)} grid cells to {out_dir}")
    return 0


def cmd_export_features(args):
    opts = _resolve(args, {"train_per_class": 200, "test_per_class": 50,
                           "split_seed": 0, "batch_size": 128,
                           "taps": ",".join(tt.EXPORT_TAPS), "out": None})
    out_dir = _out_dir(opts, "features")
    manifest, splits = _splits(opts)
    model = load_model(opts["checkpoint"])
    taps = [t.strip() for t in str(opts["taps"]).split(",")]
    sets = {"source": splits[opts["source"]].test,
            "target": splits[opts["target"]].test}
    written = tt.export_features(model, sets, taps, out_dir,
                                 batch_size=opts["batch_size"])
    _snapshot(opts, out_dir)
    for tap, path in written.items():
        print(f"{tap}: {path}")
    return 0


def cmd_dump_graph(args):
    opts = _resolve(args, {"train_per_class": 200, "test_per_class": 50,
                           "split_seed": 0, "batch_size": 16, "seed": 0,
                           "out": None})
    out_dir = _out_dir(opts, "graph")
    manifest, splits = _splits(opts)
    model = load_model(opts["checkpoint"])
    sample_set = splits[opts["condition"]].test
    rng = np.random.default_rng(opts["seed"])
    idx = rng.choice(len(sample_set), size=min(opts["batch_size"], len(sample_set)),
                     replace=False)
    from . import diffcore as dc
    with dc.no_grad():
        taps = model.forward(sample_set.windows[idx], training=False)
    if taps.graph is None:
        print("variant has no graph stage", file=sys.stderr)
        return 1
    path = out_dir / "adjacency.txt"
    dump_coordinate_list(taps.graph.sparsified, path)
    _snapshot(opts, out_dir)
    print(f"wrote {path}")
    return 0


# ---------------------------------------------------------------- parser


def build_parser():
    parser = argparse.ArgumentParser(
        prog="dsagcn",
        description="Cross-domain fault diagnosis: graph feature extraction "
                    "with adversarial and subdomain alignment.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(func=fn)
        p.add_argument("--config", help="JSON config file; flags override it")
        p.add_argument("--out", help="output directory (default $DSAGCN_OUT/<cmd>)")
        return p

    p = add("synth-gen", cmd_synth_gen, "generate a synthetic dataset")
    p.add_argument("--classes", type=int)
    p.add_argument("--conditions", type=int)
    p.add_argument("--windows-per-class", dest="windows_per_class", type=int)
    p.add_argument("--window", type=int)
    p.add_argument("--seed", type=int)

    def add_data_flags(p):
        p.add_argument("--manifest", required=True)
        p.add_argument("--train-per-class", dest="train_per_class", type=int)
        p.add_argument("--test-per-class", dest="test_per_class", type=int)
        p.add_argument("--split-seed", dest="split_seed", type=int)

    def add_train_flags(p):
        p.add_argument("--variant")
        p.add_argument("--lr", type=float)
        p.add_argument("--batch-size", dest="batch_size", type=int)
        p.add_argument("--epochs", type=int)
        p.add_argument("--mu", type=float)
        p.add_argument("--beta", type=float)
        p.add_argument("--hops", type=int)
        p.add_argument("--k-topk", dest="k_topk", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--graph-scope", dest="graph_scope",
                       choices=["joint", "per_domain"])

    p = add("train", cmd_train, "train one transfer task")
    add_data_flags(p)
    add_train_flags(p)
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)

    p = add("eval", cmd_eval, "evaluate a checkpoint on a condition's test split")
    add_data_flags(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--condition", required=True)
    p.add_argument("--batch-size", dest="batch_size", type=int)

    p = add("matrix", cmd_matrix, "run every ordered transfer task")
    add_data_flags(p)
    add_train_flags(p)
    p.add_argument("--repetitions", type=int)

    p = add("sweep-k", cmd_sweep_k, "sweep the polynomial hop count")
    add_data_flags(p)
    add_train_flags(p)
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--k", help="comma-separated hop counts")

    p = add("sweep-tradeoffs", cmd_sweep_tradeoffs, "sweep the loss weights")
    add_data_flags(p)
    add_train_flags(p)
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--values", help="comma-separated weight values")

    p = add("export-features", cmd_export_features, "dump layer activations to CSV")
    add_data_flags(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--taps", help="comma-separated tap names")
    p.add_argument("--batch-size", dest="batch_size", type=int)

    p = add("dump-graph", cmd_dump_graph, "dump one batch adjacency as text")
    add_data_flags(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--condition", required=True)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--seed", type=int)

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
