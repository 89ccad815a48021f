"""Machine-readable run reports plus the figures rendered next to them."""

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .io_formats import validate_document


def build_report(command, result, params_echo, extra=None):
    """Assemble the report document for a finished solve."""
    history = result.state.residual_history
    timings = dict(result.state.phase_times)
    doc = {
        "version": 1,
        "command": command,
        "parameters": params_echo,
        "iterations": int(result.iterations),
        "converged": bool(result.converged),
        "residuals": {
            "primalZ": [float(h["primal_z"]) for h in history],
            "dualZ": [float(h["dual_z"]) for h in history],
            "primalX": [float(h["primal_x"]) for h in history],
        },
        "timings": {
            "localX": float(timings["local_x"]),
            "localZ": float(timings["local_z"]),
            "global": float(timings["global"]),
            "dual": float(timings["dual"]),
            "total": float(result.wall_time),
        },
        "factorizations": int(result.factorization_count),
        "roi": {
            "threshold": float(result.roi_threshold),
            "count": int(result.roi_count),
            "measure": float(result.roi_measure),
        },
        "wallTime": float(result.wall_time),
    }
    if extra:
        doc.update(extra)
    return doc


def write_report(path, doc):
    validate_document(doc, "report.schema.json")
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def render_report_figures(out_dir, doc, result=None, prefix="report"):
    """Residual-convergence and displacement-histogram figures as PNG files."""
    out_dir = Path(out_dir)
    written = []

    fig, ax = plt.subplots(figsize=(6, 4))
    res = doc["residuals"]
    iters = np.arange(1, len(res["primalZ"]) + 1)
    if len(iters):
        ax.semilogy(iters, np.maximum(res["primalZ"], 1e-300), label="primal Z")
        ax.semilogy(iters, np.maximum(res["dualZ"], 1e-300), label="dual Z")
        if any(v > 0 for v in res["primalX"]):
            ax.semilogy(iters, np.maximum(res["primalX"], 1e-300), label="primal X")
    ax.set_xlabel("iteration")
    ax.set_ylabel("residual (inf-norm)")
    ax.legend(loc="best")
    ax.set_title(f"{doc['command']}: convergence")
    fig.tight_layout()
    path = out_dir / f"{prefix}_residuals.png"
    fig.savefig(path, dpi=110)
    plt.close(fig)
    written.append(str(path))

    if result is not None:
        fig, ax = plt.subplots(figsize=(6, 4))
        mags = result.displacement
        ax.hist(mags, bins=50, color="#4878a8")
        ax.axvline(result.roi_threshold, color="crimson", linestyle="--",
                   label=f"ROI threshold {result.roi_threshold:g}")
        ax.set_xlabel("vertex displacement")
        ax.set_ylabel("count")
        ax.set_title(f"displacement ({result.roi_count} of {len(mags)} in ROI)")
        ax.legend(loc="best")
        fig.tight_layout()
        path = out_dir / f"{prefix}_displacement.png"
        fig.savefig(path, dpi=110)
        plt.close(fig)
        written.append(str(path))
    return written


def render_bench_figure(out_dir, sizes, per_iter_ms, prefix="bench"):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.loglog(sizes, per_iter_ms, "o-")
    ax.set_xlabel("vertex count")
    ax.set_ylabel("ms per ADMM iteration")
    ax.set_title("per-iteration cost vs mesh size")
    fig.tight_layout()
    path = Path(out_dir) / f"{prefix}_timings.png"
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return str(path)
