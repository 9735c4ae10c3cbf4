"""Matplotlib rendering of the experiment series, written next to the CSVs."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

_FIGSIZE = (6.4, 4.2)
_DPI = 110


def _new_axes(xlabel, ylabel, title):
    fig, ax = plt.subplots(figsize=_FIGSIZE, dpi=_DPI)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    return fig, ax


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": "rbfkit"})
    plt.close(fig)


def render_series(series, path, xlabel, ylabel, title, logy=False):
    """Plot named (x, y) series onto one figure.

    series: mapping name -> iterable of (x, y) pairs.
    """
    fig, ax = _new_axes(xlabel, ylabel, title)
    for name in series:
        pts = list(series[name])
        xs = [p[0] for p in pts]
        ys = [p[1] for p in pts]
        ax.plot(xs, ys, marker="o", markersize=3.5, label=name)
    if logy:
        ax.set_yscale("log")
    if len(series) > 1:
        ax.legend()
    _save(fig, path)


def render_fpr_curves(k_series, m_series, n_series, out_dir):
    """Three single-variable false positive rate curves as separate files."""
    paths = []
    for name, (series, xlabel) in {
        "fp_vs_k.png": (k_series, "hash count k"),
        "fp_vs_m.png": (m_series, "filter bits m"),
        "fp_vs_n.png": (n_series, "members n"),
    }.items():
        path = out_dir / name
        render_series(
            {"analytic": series},
            path,
            xlabel,
            "false positive rate",
            f"false positive rate vs {xlabel.split()[-1]}",
            logy=True,
        )
        paths.append(path)
    return paths


def render_rss_rates(rows, path, xkey):
    """Success / stopping-short / collision rates against cycle or beta.

    rows: list of dicts with keys xkey, success, stopping_short, collision.
    """
    series = {
        metric: [(row[xkey], row[metric]) for row in rows]
        for metric in ("success", "stopping_short", "collision")
    }
    render_series(
        series,
        path,
        xkey,
        "rate",
        "stop set replay rates",
    )
