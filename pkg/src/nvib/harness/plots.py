"""CSV series plus an SVG rendering for each figure."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .data import InputError
from .figures import gamma_approx_errors, nu_by_length

LOSS_COLUMNS = ("step", "l_r", "l_d", "l_g", "total")


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])
    return path


def read_csv(path) -> tuple[list, list]:
    path = Path(path)
    if not path.is_file():
        raise InputError(f"missing file {path}")
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows:
        raise InputError(f"empty CSV {path}")
    return rows[0], rows[1:]


def _svg(path, series: dict, xlabel: str, ylabel: str, title: str, logy: bool = False, vline=None) -> Path:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 3.5))
    for label, (x, y) in series.items():
        ax.plot(x, y, label=label)
    if vline is not None:
        ax.axvline(vline, color="grey", linestyle=":", linewidth=1)
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def plot_fig3(out_dir, alphas=None) -> list[Path]:
    alphas = np.linspace(0.05, 3.0, 60) if alphas is None else np.asarray(alphas)
    e = gamma_approx_errors(alphas)
    out = Path(out_dir)
    rows = zip(e.alphas, e.inverse_cdf, e.gaussian)
    c = write_csv(out / "fig3.csv", ("alpha", "inverse_cdf_error", "gaussian_error"), rows)
    s = _svg(out / "fig3.svg", {"inverse CDF": (e.alphas, e.inverse_cdf), "Gaussian": (e.alphas, e.gaussian)},
             "alpha", "mean |approx - exact|", "Gamma approximation error", logy=True, vline=0.6363)
    return [c, s]


def plot_loss_curves(metrics_csv, out_dir) -> list[Path]:
    header, rows = read_csv(metrics_csv)
    missing = [c for c in LOSS_COLUMNS if c not in header]
    if missing:
        raise InputError(f"{metrics_csv} lacks columns {missing}")
    idx = [header.index(c) for c in LOSS_COLUMNS]
    data = np.array([[float(r[i]) for i in idx] for r in rows])
    out = Path(out_dir)
    c = write_csv(out / "loss_curves.csv", LOSS_COLUMNS, [(int(r[0]), *r[1:]) for r in data])
    series = {name: (data[:, 0], data[:, k]) for k, name in enumerate(LOSS_COLUMNS) if k > 0}
    s = _svg(out / "loss_curves.svg", series, "step", "loss", "Training losses")
    return [c, s]


def plot_nu_vs_length(lengths, nus, out_dir) -> list[Path]:
    ns, mean_nu, retained = nu_by_length(lengths, nus)
    out = Path(out_dir)
    c = write_csv(out / "nu_vs_length.csv", ("n", "nu", "retained"), zip(ns, mean_nu, retained))
    s = _svg(out / "nu_vs_length.svg", {"retained vectors": (ns, retained), "tokens": (ns, ns)},
             "input tokens n", "latent vectors", "Retained latent vectors")
    return [c, s]


__all__ = ["write_csv", "read_csv", "plot_fig3", "plot_loss_curves", "plot_nu_vs_length", "LOSS_COLUMNS"]
