"""Run artifacts: CSV tables, SVG figures and the run manifest."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .experiments import Table


def format_cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        return "%.17g" % v
    if isinstance(v, (complex, np.complexfloating)):
        return format_cell(complex(v).real) + ("+" if complex(v).imag >= 0 else "") \
            + format_cell(complex(v).imag) + "j"
    return str(v)


def write_csv(table: Table, path: Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(table.columns + ["tolerance_pass"])
        for row, ok in zip(table.rows, table.passed):
            w.writerow([format_cell(v) for v in row] + [format_cell(ok)])


def write_svg(table: Table, path: Path, title: str) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    spec = table.plot or {}
    xcol = spec.get("x", table.columns[0])
    ycols = spec.get("y") or [c for c in table.columns[1:2]]
    base = spec.get("base", 10)
    xi = table.columns.index(xcol)
    with matplotlib.rc_context({"svg.fonttype": "path", "svg.hashsalt": "pawf"}):
        fig, ax = plt.subplots(figsize=(6, 4))
        for yc in ycols:
            yi = table.columns.index(yc)
            x = np.array([float(r[xi]) for r in table.rows])
            y = np.array([abs(float(r[yi])) for r in table.rows])
            ax.plot(x, y, "o-" if spec.get("line", True) else "o", label=yc)
        if spec.get("logx"):
            ax.set_xscale("log", base=base)
        if spec.get("logy"):
            ax.set_yscale("log", base=base)
        ax.set_xlabel(xcol)
        ax.set_title(spec.get("title", title))
        ax.legend()
        ax.grid(True, which="both", alpha=0.3)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)


def write_manifest(path: Path, *, experiment: str, config: dict, seed: int,
                   version: str, files: list[str], passed: bool,
                   error: str | None = None) -> None:
    data = {"experiment": experiment, "version": version, "seed": seed,
            "config": config, "files": files, "passed": passed}
    if error is not None:
        data["error"] = error
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")
