"""Deterministic SVG figures from run and sweep directories."""
import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

SVG_OPTIONS = {"format": "svg", "metadata": {"Date": None}}


def _style():
    plt.rcParams["svg.hashsalt"] = "risda"
    plt.rcParams["svg.fonttype"] = "none"


def _read_rows(path):
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def plot_loss_curve(run_dir, out_dir):
    run_dir = Path(run_dir)
    curve = run_dir / "loss_curve.csv"
    if not curve.exists() or not (run_dir / "metrics.json").exists():
        raise FileNotFoundError(f"{run_dir}: missing loss_curve.csv or metrics.json")
    rows = _read_rows(curve)
    epochs = [int(r["epoch"]) for r in rows]
    _style()
    fig, (ax_loss, ax_err) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax_loss.plot(epochs, [float(r["train_loss"]) for r in rows], color="k")
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("train loss")
    for key, colour in (("test_error", "k"), ("head_error", "tab:blue"), ("tail_error", "tab:red")):
        ax_err.plot(epochs, [float(r[key]) for r in rows], label=key, color=colour)
    ax_err.set_xlabel("epoch")
    ax_err.set_ylabel("error (%)")
    ax_err.legend(frameon=False)
    fig.tight_layout()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    target = out_dir / f"{run_dir.name}-loss_curve.svg"
    fig.savefig(target, **SVG_OPTIONS)
    plt.close(fig)
    (out_dir / f"{run_dir.name}-loss_curve.csv").write_bytes(curve.read_bytes())
    return target


def plot_sweep(sweep_dir, out_dir):
    rows = _read_rows(Path(sweep_dir) / "summary.csv")
    alphas = sorted({float(r["alpha0"]) for r in rows})
    betas = sorted({float(r["beta0"]) for r in rows})
    grid = np.full((len(alphas), len(betas)), np.nan)
    for r in rows:
        grid[alphas.index(float(r["alpha0"])), betas.index(float(r["beta0"]))] = float(r["mean_error"])

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with (out_dir / "heatmap.csv").open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["alpha0\\beta0"] + betas)
        for a, row in zip(alphas, grid):
            writer.writerow([a] + [float(v) for v in row])

    _style()
    fig, ax = plt.subplots(figsize=(5, 4))
    im = ax.imshow(grid, origin="lower", cmap="viridis")
    ax.set_xticks(range(len(betas)), [f"{b:g}" for b in betas])
    ax.set_yticks(range(len(alphas)), [f"{a:g}" for a in alphas])
    ax.set_xlabel("beta0")
    ax.set_ylabel("alpha0")
    for i in range(len(alphas)):
        for j in range(len(betas)):
            ax.text(j, i, f"{grid[i, j]:.1f}", ha="center", va="center", fontsize=7, color="w")
    fig.colorbar(im, ax=ax, label="mean error (%)")
    fig.tight_layout()
    target = out_dir / "heatmap.svg"
    fig.savefig(target, **SVG_OPTIONS)
    plt.close(fig)
    return target


def _is_sweep(path):
    summary = path / "summary.csv"
    if not summary.exists():
        return False
    with summary.open(newline="") as fh:
        header = next(csv.reader(fh), [])
    return "alpha0" in header


def plot_dirs(paths, out=None):
    """Figures for every given directory; returns the SVG paths written."""
    written = []
    for p in map(Path, paths):
        if not p.is_dir():
            raise FileNotFoundError(f"{p}: not a directory")
        target = Path(out) if out else p
        if _is_sweep(p):
            written.append(plot_sweep(p, target))
        elif (p / "loss_curve.csv").exists() or (p / "metrics.json").exists():
            written.append(plot_loss_curve(p, target))
        else:
            runs = sorted(d for d in p.glob("run-*") if d.is_dir())
            if not runs:
                raise FileNotFoundError(f"{p}: no metrics, runs or sweep summary found")
            written.extend(plot_loss_curve(r, target) for r in runs)
    return written
