"""Figure rendering for sweep outputs.

Reads the aggregate CSV written by the sweep runner and saves
publication-style matplotlib figures next to it: error rates on a log
axis and estimation error in dB, both against the sweep axis.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .errors import ParameterError

RATE_FIELDS = ("p_md", "p_fa", "p_e")


def read_sweep_csv(path) -> tuple[str, list[dict]]:
    """Parse the aggregate table; returns (axis name, row dicts of floats)."""
    with open(path, newline="") as fh:
        first = fh.readline()
        if not first.startswith("#schema_version="):
            raise ParameterError(f"{path} does not look like a sweep table")
        reader = csv.DictReader(fh)
        axis = reader.fieldnames[0] if reader.fieldnames else None
        if axis is None:
            raise ParameterError("sweep table has no header")
        rows = [{k: float(v) for k, v in row.items()} for row in reader]
    if not rows:
        raise ParameterError("sweep table has no data rows")
    return axis, rows


AXIS_LABELS = {
    "snr_db": "SNR (dB)",
    "n": "block length N",
    "m_h": "horizontal antennas",
}


def render_error_rates(axis: str, rows: list[dict], out_path) -> None:
    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    x = [row[axis] for row in rows]
    markers = {"p_md": "o", "p_fa": "s", "p_e": "^"}
    labels = {"p_md": "misdetection", "p_fa": "false alarm", "p_e": "total"}
    for name in RATE_FIELDS:
        y = [max(row[f"{name}_mean"], 1e-6) for row in rows]
        err = [row[f"{name}_se"] for row in rows]
        ax.errorbar(x, y, yerr=err, marker=markers[name], label=labels[name], capsize=3)
    ax.set_yscale("log")
    ax.set_xlabel(AXIS_LABELS.get(axis, axis))
    ax.set_ylabel("error rate")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def render_nmse(axis: str, rows: list[dict], out_path) -> None:
    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    x = [row[axis] for row in rows]
    y = [row["nmse_db_mean_mean"] for row in rows]
    err = [row["nmse_db_mean_se"] for row in rows]
    ax.errorbar(x, y, yerr=err, marker="o", color="tab:purple", capsize=3)
    ax.set_xlabel(AXIS_LABELS.get(axis, axis))
    ax.set_ylabel("NMSE (dB)")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def render_report(csv_path, out_dir=None) -> list[Path]:
    """Render all figures for one sweep table; returns the written paths."""
    csv_path = Path(csv_path)
    out_dir = Path(out_dir) if out_dir is not None else csv_path.parent
    out_dir.mkdir(parents=True, exist_ok=True)
    axis, rows = read_sweep_csv(csv_path)
    stem = csv_path.stem
    written = []
    rates_path = out_dir / f"{stem}_error_rates.png"
    render_error_rates(axis, rows, rates_path)
    written.append(rates_path)
    nmse_path = out_dir / f"{stem}_nmse.png"
    render_nmse(axis, rows, nmse_path)
    written.append(nmse_path)
    return written
