"""Figures for the command line front-end.

Only the CLI imports this module; the numerical modules write tables and
leave rendering to it.  The Agg backend is selected so that figures can be
written without a display.
"""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "lines.linewidth": 1.2,
    "lines.markersize": 4,
    "figure.dpi": 120,
}

_LABELS = {"p": "p (plane waves per element)", "M": "M (Fourier truncation)",
           "h": "h (mesh size)", "theta": r"$\theta$"}


def plot_convergence(table, path, title=None):
    """Semilog plot of the relative L2 and H1 errors of a sweep."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.2))
        x = table.values
        ax.semilogy(x, table.l2, "o-", label=r"$L^2$ relative")
        ax.semilogy(x, table.h1, "s--", label=r"$H^1$ relative")
        if table.plateau is not None:
            ax.axvline(table.plateau, color="0.6", lw=0.8, ls=":", label="plateau")
        ax.set_xlabel(_LABELS.get(table.sweep, table.sweep))
        ax.set_ylabel("error")
        if title:
            ax.set_title(title)
        ax.grid(True, which="both", alpha=0.3)
        ax.legend()
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)


def plot_field(pts, values, nx, ny, path, title=None, mesh=None):
    """Real part and modulus of a field sampled on a regular grid."""
    X = pts[:, 0].reshape(ny, nx)
    Y = pts[:, 1].reshape(ny, nx)
    U = np.asarray(values).reshape(ny, nx)
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 2, figsize=(8, 3.6), sharey=True)
        for ax, data, label in ((axes[0], U.real, r"Re $u$"), (axes[1], np.abs(U), r"$|u|$")):
            masked = np.ma.masked_invalid(data)
            cmap = "RdBu_r" if label.startswith("Re") else "viridis"
            im = ax.pcolormesh(X, Y, masked, shading="auto", cmap=cmap)
            fig.colorbar(im, ax=ax, shrink=0.85)
            if mesh is not None:
                for e in range(mesh.n_elements):
                    P = mesh.polygon(e)
                    ax.fill(P[:, 0], P[:, 1], fill=False, lw=0.2, color="k", alpha=0.3)
            ax.set_title(label)
            ax.set_xlabel("$x_1$")
            ax.set_aspect("equal")
        axes[0].set_ylabel("$x_2$")
        if title:
            fig.suptitle(title)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)


def plot_efficiencies(eff, path, title=None):
    """Bar chart of reflected and transmitted efficiencies per order."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.2))
        n = eff.orders
        ax.bar(n - 0.2, eff.reflected, width=0.4, label="reflected")
        ax.bar(n + 0.2, eff.transmitted, width=0.4, label="transmitted")
        ax.set_xlabel("order n")
        ax.set_ylabel("efficiency")
        ax.set_title(title or f"total = {eff.total:.6f}")
        ax.legend()
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
