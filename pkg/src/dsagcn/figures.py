"""Report figures rendered next to the delimited outputs."""

import matplotlib

matplotlib.use("Agg")

import numpy as np
import matplotlib.pyplot as plt


def loss_curves(records, path, title="training trace"):
    """Total loss per step plus per-epoch target accuracy on a twin axis."""
    steps = [r.step for r in records]
    totals = [r.l_total for r in records]
    acc_points = [(r.epoch, r.target_acc) for r in records if r.target_acc is not None]

    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(steps, totals, lw=1.0, color="tab:blue", label="total loss")
    ax.set_xlabel("step")
    ax.set_ylabel("total loss", color="tab:blue")
    if acc_points:
        epochs, accs = zip(*acc_points)
        steps_per_epoch = max(1, len(records) // max(epochs))
        ax2 = ax.twinx()
        ax2.plot([e * steps_per_epoch for e in epochs], accs, "o-", ms=3,
                 color="tab:red", label="target accuracy")
        ax2.set_ylabel("target accuracy (%)", color="tab:red")
        ax2.set_ylim(0, 102)
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def matrix_bars(summary, path, title="transfer-task accuracy"):
    """Mean accuracy per ordered task with std error bars."""
    labels = [f"{row['source']}→{row['target']}" for row in summary]
    means = [row["mean_accuracy"] for row in summary]
    stds = [row["std_accuracy"] for row in summary]
    fig, ax = plt.subplots(figsize=(max(6, 0.6 * len(labels)), 4))
    ax.bar(range(len(labels)), means, yerr=stds, capsize=3, color="tab:blue")
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=45, ha="right")
    ax.set_ylabel("accuracy (%)")
    ax.set_ylim(0, 102)
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def sweep_k_plot(rows, path):
    """Accuracy and wall time against the polynomial hop count."""
    ks = [r["k"] for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(ks, [r["accuracy"] for r in rows], "o-", color="tab:blue")
    ax.set_xlabel("hop count k")
    ax.set_ylabel("accuracy (%)", color="tab:blue")
    ax.set_xscale("log")
    ax2 = ax.twinx()
    ax2.plot(ks, [r["wall_time_s"] for r in rows], "s--", color="tab:orange")
    ax2.set_ylabel("training time (s)", color="tab:orange")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def tradeoff_heatmap(rows, path):
    """Accuracy over the (beta, mu) grid."""
    betas = sorted({r["beta"] for r in rows})
    mus = sorted({r["mu"] for r in rows})
    grid = np.full((len(betas), len(mus)), np.nan)
    for r in rows:
        grid[betas.index(r["beta"]), mus.index(r["mu"])] = r["accuracy"]
    fig, ax = plt.subplots(figsize=(6, 5))
    im = ax.imshow(grid, origin="lower", cmap="viridis", aspect="auto")
    ax.set_xticks(range(len(mus)))
    ax.set_xticklabels([f"{m:g}" for m in mus])
    ax.set_yticks(range(len(betas)))
    ax.set_yticklabels([f"{b:g}" for b in betas])
    ax.set_xlabel("mu (adversarial weight)")
    ax.set_ylabel("beta (subdomain weight)")
    for i in range(len(betas)):
        for j in range(len(mus)):
            if np.isfinite(grid[i, j]):
                ax.text(j, i, f"{grid[i, j]:.1f}", ha="center", va="center",
                        color="white", fontsize=8)
    fig.colorbar(im, ax=ax, label="accuracy (%)")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
