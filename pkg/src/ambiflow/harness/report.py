"""CSV emission and report rendering (summary tables + matplotlib figures).

CSV floats go through ``repr`` so files are byte-stable across identical
runs and round-trip exactly. The ``report`` path aggregates whatever metric
CSVs a run directory contains into ``summary.csv`` and renders SVG figures
next to it.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np

__all__ = ["format_cell", "write_csv", "read_csv", "summarize_run", "render_figures"]

METRIC_FILES = ("loss_curve.csv", "mmd.csv", "mpjpe.csv", "view_scores.csv")


def format_cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def write_csv(path, fieldnames: list[str], rows: list[dict]) -> None:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=fieldnames, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: format_cell(row.get(k, "")) for k in fieldnames})
    tmp = Path(str(path) + ".tmp")
    tmp.write_text(buf.getvalue())
    tmp.replace(path)


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        for key, val in row.items():
            try:
                row[key] = float(val)
            except (TypeError, ValueError):
                pass
    return rows


def _numeric_columns(rows: list[dict]) -> list[str]:
    if not rows:
        return []
    return [k for k, v in rows[0].items() if isinstance(v, float)]


def summarize_run(run_dir) -> list[dict]:
    """Mean/min/max per numeric column of every metric CSV in the run directory."""
    run_dir = Path(run_dir)
    summary = []
    for name in METRIC_FILES:
        path = run_dir / name
        if not path.exists():
            continue
        rows = read_csv(path)
        for col in _numeric_columns(rows):
            values = np.array([r[col] for r in rows if isinstance(r[col], float)])
            values = values[np.isfinite(values)]
            if len(values) == 0:
                continue
            summary.append({
                "file": name,
                "column": col,
                "n": len(values),
                "mean": float(values.mean()),
                "min": float(values.min()),
                "max": float(values.max()),
            })
    return summary


def _figure_loss(rows: list[dict], out_path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    steps = [r["step"] for r in rows]
    fig, ax = plt.subplots(figsize=(7, 4))
    for key in ("nll", "detmag", "psi", "j3d", "j2d", "theta", "total"):
        if key in rows[0]:
            vals = [r[key] for r in rows]
            ax.plot(steps, vals, label=key, linewidth=1.2 if key != "total" else 2.0)
    ax.set_xlabel("step")
    ax.set_ylabel("loss term")
    ax.set_yscale("symlog")
    ax.legend(fontsize=8, ncol=4)
    ax.set_title("training loss terms")
    fig.savefig(out_path, bbox_inches="tight")
    plt.close(fig)


def _figure_views(rows: list[dict], out_path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5.5, 4))
    xs = [r["ambiguity_mm"] for r in rows]
    ys = [r["regret_mm"] for r in rows]
    ax.scatter(xs, ys, c="tab:blue")
    for r in rows:
        ax.annotate(str(r["cam_id"]), (r["ambiguity_mm"], r["regret_mm"]),
                    textcoords="offset points", xytext=(4, 3), fontsize=8)
    ax.set_xlabel("sample ambiguity [mm]")
    ax.set_ylabel("regret [mm]")
    ax.set_title("view selection: ambiguity vs regret")
    fig.savefig(out_path, bbox_inches="tight")
    plt.close(fig)


def _figure_mmd(rows: list[dict], out_path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 4))
    idx = np.arange(len(rows))
    plotted = False
    for key, style in (("mmd_model_global", "o-"), ("mmd_dirac_global", "s--"),
                       ("mmd_self_global", "^-")):
        if rows and key in rows[0]:
            ax.plot(idx, [r[key] for r in rows], style, label=key, markersize=3)
            plotted = True
    if not plotted:
        plt.close(fig)
        return
    ax.set_xlabel("test record")
    ax.set_ylabel("MMD (sqrt of scale-averaged MMD^2)")
    ax.legend(fontsize=8)
    ax.set_title("distribution match per record")
    fig.savefig(out_path, bbox_inches="tight")
    plt.close(fig)


def render_figures(run_dir) -> list[Path]:
    """SVG figures for every metric CSV present; returns the written paths."""
    run_dir = Path(run_dir)
    written = []
    jobs = (
        ("loss_curve.csv", "loss_curves.svg", _figure_loss),
        ("view_scores.csv", "view_scores.svg", _figure_views),
        ("mmd.csv", "mmd.svg", _figure_mmd),
    )
    for csv_name, fig_name, fn in jobs:
        src = run_dir / csv_name
        if not src.exists():
            continue
        rows = read_csv(src)
        if not rows:
            continue
        out = run_dir / fig_name
        fn(rows, out)
        written.append(out)
    return written
