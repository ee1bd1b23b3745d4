"""CSV, manifest and SVG output for the command line runner."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import platform


def fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return "{:.17g}".format(v)
    if isinstance(v, complex):
        raise TypeError("split complex values into real and imaginary columns")
    try:
        import numpy as np

        if isinstance(v, np.integer):
            return str(int(v))
        if isinstance(v, np.floating):
            return "{:.17g}".format(float(v))
    except ImportError:
        pass
    return str(v)


def write_csv(path, header, rows) -> str:
    """Write rows with a header; returns the sha256 of the file contents."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        if len(row) != len(header):
            raise ValueError(f"row of length {len(row)} under a header of length {len(header)}")
        w.writerow([fmt(v) for v in row])
    data = buf.getvalue().encode()
    with open(path, "wb") as fh:
        fh.write(data)
    return hashlib.sha256(data).hexdigest()


def write_text(path, text: str) -> str:
    data = text.encode()
    with open(path, "wb") as fh:
        fh.write(data)
    return hashlib.sha256(data).hexdigest()


def versions() -> dict:
    import matplotlib
    import numpy
    import scipy

    from . import __version__

    return {"ruelle_lab": __version__, "python": platform.python_version(),
            "numpy": numpy.__version__, "scipy": scipy.__version__, "matplotlib": matplotlib.__version__}


def write_manifest(path, kind, config, outputs, wall_time, status="ok", extra=None) -> None:
    doc = {"kind": kind, "status": status, "config": config, "outputs": outputs,
           "versions": versions(), "wall_time_s": round(wall_time, 3)}
    doc["summary"] = extra or {}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


# ---------------------------------------------------------------- plots

def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "ruelle-lab"
    matplotlib.rcParams["svg.fonttype"] = "none"
    return plt


def save_svg(fig, path, data_note: str) -> str:
    """Save without a date stamp and with a comment naming the plotted data."""
    plt = _pyplot()
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None, "Creator": "ruelle-lab"})
    plt.close(fig)
    svg = buf.getvalue()
    note = data_note.replace("--", "- -")
    marker = "<svg "
    i = svg.find(marker)
    svg = svg[:i] + f"<!-- data: {note} -->\n" + svg[i:]
    return write_text(path, svg)


def line_plot(path, series, xlabel, ylabel, title, data_note, logx=False, logy=False) -> str:
    """series: list of (label, x, y)."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, x, y in series:
        ax.plot(x, y, marker=".", lw=1, label=label)
    if logx:
        ax.set_xscale("log")
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    if len(series) > 1:
        ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    return save_svg(fig, path, data_note)


def scatter_plot(path, series, xlabel, ylabel, title, data_note) -> str:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 5))
    for label, x, y in series:
        ax.scatter(x, y, s=12, label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    if len(series) > 1:
        ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    return save_svg(fig, path, data_note)


def set_threads(n) -> None:
    """Pin BLAS/OpenMP pools; must run before numpy is imported."""
    if n is None:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        os.environ[var] = str(int(n))
