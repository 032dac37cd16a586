"""CSV emission and figure rendering for the command-line pipeline.

Figures are rendered headlessly to PNG next to the delimited output so a
run leaves both machine-readable tables and ready-to-look-at plots.
"""

from __future__ import annotations

import csv

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            writer.writerow([format(v, ".17g") if isinstance(v, float) else v
                             for v in row])


def render_potentials(path, mesh, q_rec, q_true=None, labels=None):
    """Per-edge potential plot: reconstruction (and truth when available)."""
    m = q_rec.shape[1]
    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    colors = plt.cm.tab10.colors
    for j in range(m):
        lab = labels[j] if labels else f"edge {j + 1}"
        ax.plot(mesh, q_rec[:, j], color=colors[j % 10], lw=1.6,
                label=f"{lab} (reconstructed)")
        if q_true is not None:
            ax.plot(mesh, q_true[:, j], color=colors[j % 10], lw=1.0, ls="--",
                    label=f"{lab} (true)")
    ax.set_xlabel("x")
    ax.set_ylabel("potential")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def render_matrix_potential(path, mesh, q_rec):
    """Entrywise plot of a reconstructed matrix potential."""
    m = q_rec.shape[-1]
    fig, axes = plt.subplots(m, m, figsize=(2.8 * m, 2.2 * m), squeeze=False)
    for i in range(m):
        for j in range(m):
            ax = axes[i][j]
            ax.plot(mesh, q_rec[:, i, j].real, lw=1.2, label="Re")
            if abs(q_rec[:, i, j].imag).max() > 1e-12:
                ax.plot(mesh, q_rec[:, i, j].imag, lw=1.0, ls=":", label="Im")
            ax.set_title(f"Q[{i + 1},{j + 1}]", fontsize=9)
            ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_stability(path, deltas, xis, errors):
    fig, ax = plt.subplots(figsize=(5.6, 4.0))
    ax.loglog(xis, errors, "o-", lw=1.4, label="reconstruction error")
    for d, x, e in zip(deltas, xis, errors):
        ax.annotate(f"d={d:g}", (x, e), textcoords="offset points",
                    xytext=(5, 4), fontsize=8)
    ax.set_xlabel("aggregate spectral distance")
    ax.set_ylabel("L2 error of the potential")
    ax.grid(alpha=0.3, which="both")
    ax.legend(fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
