"""Write a run's iteration CSV, JSON verdict and SVG convergence plot."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

CSV_HEADER = ("t", "loss", "grad_norm", "violation", "step_len")


def run_stem(command, family, seed, tag=None):
    family = getattr(family, "value", family) or "none"
    stem = f"{command}_{family}_seed{seed}"
    return f"{stem}_{tag}" if tag else stem


def write_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for row in rows:
            w.writerow([row[0]] + [repr(float(x)) for x in row[1:]])


def write_plot(path, rows, title):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows = np.asarray(rows, dtype=float).reshape(-1, len(CSV_HEADER))
    t, loss, grad = rows[:, 0], rows[:, 1], rows[:, 2]
    with matplotlib.rc_context({"svg.hashsalt": "mksgd", "svg.fonttype": "path"}):
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
        ax1.plot(t, loss, lw=1)
        ax1.set_xlabel("iteration")
        ax1.set_ylabel("loss")
        pos = grad > 0
        ax2.semilogy(t[pos], grad[pos], lw=1)
        ax2.set_xlabel("iteration")
        ax2.set_ylabel("riemannian grad norm")
        fig.suptitle(title)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)


def emit_metrics(report, outdir, command, family, seed, tag=None, extra=None, plot=True):
    """Write ``<stem>.csv``, ``<stem>.json`` and ``<stem>.svg`` under ``outdir``.

    ``report`` is anything with ``series_rows()`` and ``verdict()`` (a
    benchmark ``ConvergenceReport`` or a training ``TrainHistory``). Returns
    the written paths keyed by extension.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    stem = run_stem(command, family, seed, tag)
    rows = report.series_rows()
    paths = {"csv": outdir / f"{stem}.csv", "json": outdir / f"{stem}.json"}
    write_csv(paths["csv"], rows)
    verdict = {"command": command, "manifold": getattr(family, "value", family) or "none",
               "seed": seed, **(extra or {}), **report.verdict()}
    paths["json"].write_text(json.dumps(verdict, indent=2, sort_keys=True) + "\n")
    if plot:
        paths["svg"] = outdir / f"{stem}.svg"
        write_plot(paths["svg"], rows, stem)
    return paths
