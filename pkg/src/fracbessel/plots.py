"""Plot-data export for completed run directories: CSV tables plus PNG figures."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .errors import FieldIOError
from .fieldio import load_field, read_jsonl, write_csv

__all__ = ["export_plot_data", "ENERGY_HEADER", "PROFILE_HEADER", "FIBER_HEADER", "SCAN_HEADER", "KERNEL_HEADER"]

ENERGY_HEADER = ("iter", "energy", "grad_norm")
PROFILE_HEADER = ("x", "u")
FIBER_HEADER = ("t", "phi", "dphi", "d2phi")
SCAN_HEADER = ("lambda", "root_count", "t_plus", "phi_plus", "class_plus", "t_minus", "phi_minus", "class_minus")
KERNEL_HEADER = ("r", "G_alpha")


def profile_rows(u):
    """(x, u) along axis 0 through the box center (the whole field in 1-D)."""
    grid = u.grid
    index = tuple([slice(None)] + [n // 2 for n in grid.points[1:]])
    return zip(grid.axes[0], u.values[index])


def _read_csv(path: Path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=object)


def _figure():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def export_plot_data(run_dir, png: bool = True) -> list[Path]:
    """Regenerate the CSV tables of ``run_dir`` and render them as PNG figures.

    Raises :class:`FieldIOError` listing what is missing when the directory
    holds neither solution fields nor an iteration log nor scan tables.
    """
    run_dir = Path(run_dir)
    if not run_dir.is_dir():
        raise FieldIOError(f"run directory not found: {run_dir}")
    fields = sorted(run_dir.glob("*.bgs"))
    log_path = run_dir / "iterations.jsonl"
    scans = [p for p in (run_dir / "fiber.csv", run_dir / "lambda_scan.csv") if p.exists()]
    if not fields and not log_path.exists() and not scans:
        raise FieldIOError(f"{run_dir}: missing artifacts: *.bgs solution fields, iterations.jsonl, fiber.csv, lambda_scan.csv")
    written = []

    if log_path.exists():
        runs: dict[str, list] = {}
        for rec in read_jsonl(log_path):
            runs.setdefault(rec.get("run", "solution"), []).append(rec)
        for name, recs in sorted(runs.items()):
            written.append(write_csv(run_dir / f"{name}_energy.csv", ENERGY_HEADER,
                                     ((r["iter"], r["energy"], r["grad_norm"]) for r in recs)))
    for path in fields:
        u, _ = load_field(path)
        written.append(write_csv(run_dir / f"{path.stem}_profile.csv", PROFILE_HEADER, profile_rows(u)))

    if png:
        plt = _figure()
        for path in [p for p in written if p.name.endswith("_energy.csv")]:
            _, data = _read_csv(path)
            if not len(data):
                continue
            fig, ax = plt.subplots(1, 2, figsize=(9, 3.5))
            it = data[:, 0].astype(float)
            ax[0].plot(it, data[:, 1].astype(float))
            ax[0].set_xlabel("iteration")
            ax[0].set_ylabel("energy")
            ax[1].semilogy(it, np.maximum(data[:, 2].astype(float), 1e-300))
            ax[1].set_xlabel("iteration")
            ax[1].set_ylabel("gradient norm")
            fig.tight_layout()
            written.append(_save(fig, plt, path.with_suffix(".png")))
        for path in [p for p in written if p.name.endswith("_profile.csv")]:
            _, data = _read_csv(path)
            fig, ax = plt.subplots(figsize=(5, 3.5))
            ax.plot(data[:, 0].astype(float), data[:, 1].astype(float))
            ax.set_xlabel("x")
            ax.set_ylabel("u")
            fig.tight_layout()
            written.append(_save(fig, plt, path.with_suffix(".png")))
        if (run_dir / "fiber.csv").exists():
            _, data = _read_csv(run_dir / "fiber.csv")
            fig, ax = plt.subplots(figsize=(5, 3.5))
            t = data[:, 0].astype(float)
            for col, label in ((1, "phi"), (2, "dphi")):
                ax.plot(t, data[:, col].astype(float), label=label)
            ax.axhline(0.0, color="0.6", lw=0.8)
            ax.set_xlabel("t")
            ax.legend()
            fig.tight_layout()
            written.append(_save(fig, plt, run_dir / "fiber.png"))
        if (run_dir / "lambda_scan.csv").exists():
            _, data = _read_csv(run_dir / "lambda_scan.csv")
            fig, ax = plt.subplots(figsize=(5, 3.5))
            lam = data[:, 0].astype(float)
            for col, label in ((2, "N+ root"), (5, "N- root")):
                vals = np.array([float(v) if v not in ("", "nan") else np.nan for v in data[:, col]])
                ax.plot(lam, vals, label=label)
            ax.set_xlabel("lambda")
            ax.set_ylabel("t")
            ax.legend()
            fig.tight_layout()
            written.append(_save(fig, plt, run_dir / "lambda_scan.png"))
    return written


def _save(fig, plt, path: Path) -> Path:
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path
