"""Figure rendering for the report path.

Every figure lands next to the CSV it draws from; the CSVs stay the
canonical artifact and nothing reads the figures back.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

from .probelab import InfoTransferTree  # noqa: E402


def save_tree_figure(tree: InfoTransferTree, path, title: str = "") -> None:
    """Per-node transfer sizes, grouped by window size."""
    rows = tree.rows()
    ells = sorted({row[4] for row in rows})
    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    xs, pp, wr = [], [], []
    ticks = []
    x = 0
    for ell in ells:
        group = [row for row in rows if row[4] == ell]
        ticks.append((x + (len(group) - 1) / 2, f"ell={ell}"))
        for row in group:
            xs.append(x)
            pp.append(row[5])
            wr.append(row[6])
            x += 1
        x += 1
    ax.bar(xs, pp, width=0.8, label="probed/probed", color="#4878cf")
    ax.bar(xs, wr, width=0.8, label="written/read", color="#e1812c")
    ax.set_xticks([t for t, _ in ticks])
    ax.set_xticklabels([lab for _, lab in ticks], rotation=30, fontsize=8)
    ax.set_ylabel("information transfer I_v (cells)")
    ax.set_title(title or "per-node information transfer")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_outputs_figure(stream: np.ndarray, outputs: np.ndarray, path,
                        title: str = "") -> None:
    fig, axes = plt.subplots(2, 1, figsize=(7.0, 4.2), sharex=True)
    axes[0].step(np.arange(stream.size), stream, where="mid", lw=0.8)
    axes[0].set_ylabel("arrival x")
    axes[1].step(np.arange(outputs.size), outputs, where="mid", lw=0.8, color="#c44e52")
    axes[1].set_ylabel("output A_t")
    axes[1].set_xlabel("arrival t")
    axes[0].set_title(title or "stream and outputs")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_sweep_figure(rows: list[dict], path, title: str = "") -> None:
    """Amortized transfer and probes per output against n, per algorithm."""
    algos = sorted({row["algo"] for row in rows})
    fig, axes = plt.subplots(1, 2, figsize=(9.0, 3.8))
    for algo in algos:
        sub = sorted((r for r in rows if r["algo"] == algo), key=lambda r: r["n"])
        ns = [r["n"] for r in sub]
        axes[0].plot(ns, [r["sum_iv_pp"] / r["n"] for r in sub], "o-", label=algo)
        axes[1].plot(ns, [r["total_probes"] / r["n"] for r in sub], "o-", label=algo)
    for ax, ylabel in zip(axes, ["sum I_v / n", "probes / output"]):
        ax.set_xscale("log", base=2)
        ax.set_yscale("log", base=2)
        ax.set_xlabel("n")
        ax.set_ylabel(ylabel)
        ax.legend(fontsize=8)
    fig.suptitle(title or "amortized growth")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
