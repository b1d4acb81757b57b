"""Matplotlib figures written next to the CLI's text/JSON reports."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

plt.rcParams.update({"figure.dpi": 120, "axes.grid": True, "grid.alpha": 0.3, "font.size": 10})


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_training(records: list[dict], metric: str, path) -> Path:
    steps = [r["step"] for r in records if r.get("loss") is not None]
    losses = [r["loss"] for r in records if r.get("loss") is not None]
    evals = [(r["step"], r[metric]) for r in records if r.get(metric) is not None]
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(9, 3.5))
    a1.semilogy(steps, losses, lw=0.8)
    a1.set_xlabel("step")
    a1.set_ylabel("training loss")
    if evals:
        s, v = zip(*evals)
        a2.plot(s, v, "o-", ms=3)
    a2.set_xlabel("step")
    a2.set_ylabel(metric)
    return _save(fig, path)


def plot_bench(rows: list[dict], path) -> Path:
    L = [r["L"] for r in rows]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for key, label in (("scan_ms", "sequential scan"), ("fft_ms", "kernel + FFT conv"),
                       ("conv_ms", "FFT conv only")):
        ax.loglog(L, [r[key] for r in rows], "o-", base=2, label=label)
    ax.set_xlabel("sequence length L")
    ax.set_ylabel("ms per call")
    ax.legend()
    return _save(fig, path)


def plot_vandermonde(rows: list[dict], path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.semilogy([r["N"] for r in rows], [r["solution_norm"] for r in rows], "o-")
    ax.set_xlabel("state size N")
    ax.set_ylabel(r"$\|w\|_\infty$ for the shift-by-N kernel")
    return _save(fig, path)


def plot_errors(values: list[float], label: str, path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.semilogy(np.maximum(np.asarray(values), 1e-300), "o", ms=3)
    ax.set_xlabel("instance")
    ax.set_ylabel(label)
    return _save(fig, path)


def plot_pathfinder(image: np.ndarray, mask: np.ndarray, path) -> Path:
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(6, 3))
    a1.imshow(image, cmap="gray_r", vmin=0, vmax=1)
    a2.imshow(mask, cmap="Greys", vmin=0, vmax=2)
    for a, t in ((a1, "image"), (a2, "labels")):
        a.set_title(t)
        a.axis("off")
    return _save(fig, path)
