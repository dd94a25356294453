"""Figures from the CSV files written by the CLI.

Kept out of the command-line tool on purpose: the tool emits data, and
these helpers turn that data into PNG/PDF files. Rendering goes through the
Agg canvas, so no display is needed.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from .io import read_csv

__all__ = ["plot_filter_curves", "plot_sweep_gains", "plot_landscape", "save"]

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def _figure(width=5.0):
    fig = Figure(figsize=(width, width * GOLDEN))
    FigureCanvasAgg(fig)
    return fig, fig.add_subplot(1, 1, 1)


def save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, bbox_inches="tight", dpi=150)
    return path


def plot_filter_curves(csv_path, out_path) -> Path:
    """Log-x plot of every filter column in ``filters.csv``."""
    header, rows = read_csv(csv_path)
    data = np.asarray(rows, dtype=float)
    fig, ax = _figure()
    for j, name in enumerate(header[1:], start=1):
        ax.plot(data[:, 0], data[:, j], label=name.split("_", 1)[-1])
    ax.set_xscale("log")
    ax.set_xlabel(r"curvature $\mu$")
    ax.set_ylabel(r"$g(\mu)$")
    ax.set_ylim(-0.02, 1.02)
    ax.legend(fontsize=7, frameon=False)
    return save(fig, out_path)


def plot_sweep_gains(csv_path, out_path) -> Path:
    """Gain over ridge with 95% bands against the sweep variable."""
    header, rows = read_csv(csv_path)
    col = {h: i for i, h in enumerate(header)}
    methods = sorted({r[col["method"]] for r in rows} - {"ridge"})
    fig, ax = _figure()
    for m in methods:
        sel = [r for r in rows if r[col["method"]] == m]
        x = np.array([float(r[col["sweep_value"]]) for r in sel])
        g = np.array([float(r[col["gain_pct"]]) for r in sel])
        se = np.array([float(r[col["se_gain_pct"]]) for r in sel])
        ax.plot(x, g, marker="o", ms=3, label=m)
        ax.fill_between(x, g - 1.96 * se, g + 1.96 * se, alpha=0.2)
    ax.axhline(0.0, color="0.5", lw=0.8)
    ax.set_xlabel("sweep value")
    ax.set_ylabel("gain over ridge (%)")
    ax.legend(fontsize=7, frameon=False)
    return save(fig, out_path)


def plot_landscape(csv_path, out_path) -> Path:
    """Categorical map of the best law per ``(mu tau, nu)`` cell."""
    header, rows = read_csv(csv_path)
    mt = np.array([float(r[0]) for r in rows])
    nu = np.array([float(r[1]) for r in rows])
    best = [r[2] for r in rows]
    labels = sorted(set(best))
    code = np.array([labels.index(b) for b in best])
    fig, ax = _figure()
    sc = ax.scatter(mt, nu, c=code, cmap="viridis", s=18, marker="s",
                    vmin=0, vmax=max(len(labels) - 1, 1))
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel(r"$\mu\tau$")
    ax.set_ylabel(r"$\nu$")
    handles = [ax.scatter([], [], color=sc.cmap(sc.norm(i)), marker="s", label=lab)
               for i, lab in enumerate(labels)]
    ax.legend(handles=handles, fontsize=7, frameon=False, loc="upper left",
              bbox_to_anchor=(1.0, 1.0))
    return save(fig, out_path)
