"""Reading and writing designs as CSV, JSON and plain-text tables."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from .design import Design


def design_to_csv(design: Design) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["i", *[f"x{j + 1}" for j in range(design.k)], "weight"])
    for i, (p, w) in enumerate(zip(design.points.tolist(), design.weights.tolist()), start=1):
        writer.writerow([i, *[repr(v) for v in p], repr(w)])
    return buf.getvalue()


def design_from_csv(text: str) -> Design:
    rows = list(csv.reader(io.StringIO(text)))
    rows = [r for r in rows if r and any(c.strip() for c in r)]
    if not rows:
        raise ValueError("empty design file")
    header = [c.strip() for c in rows[0]]
    k = len(header) - 2
    if k < 1 or header[0] != "i" or header[-1] != "weight" or header[1:-1] != [f"x{j + 1}" for j in range(k)]:
        raise ValueError(f"unexpected CSV header {header}; expected i,x1,...,xk,weight")
    data = np.array([[float(c) for c in r[1:]] for r in rows[1:]])
    if data.shape[1] != k + 1:
        raise ValueError("CSV rows do not match the header")
    return Design(data[:, :k], data[:, k])


def design_to_json(design: Design, criterion: float | None = None, m: int | None = None) -> str:
    obj = {
        "points": design.points.tolist(),
        "weights": design.weights.tolist(),
        "criterion": criterion,
        "m": m,
    }
    return json.dumps(obj, indent=2)


def design_from_json(text: str) -> Design:
    obj = json.loads(text)
    if "points" not in obj:
        # a run report
        if "final" in obj:
            obj = obj["final"]
        obj = obj["design"]
    return Design(obj["points"], obj["weights"])


def design_to_table(design: Design) -> str:
    """Fixed-width table: index, coordinates, weight to six decimals."""
    k = design.k
    coords = [[_fmt(v) for v in p] for p in design.points.tolist()]
    widths = [max(len(f"x{j + 1}"), *(len(c[j]) for c in coords)) for j in range(k)]
    iw = max(1, len(str(design.size)))
    head = " ".join([f"{'i':>{iw}}", *[f"{f'x{j + 1}':>{widths[j]}}" for j in range(k)], f"{'weight':>8}"])
    lines = [head]
    for i, (c, w) in enumerate(zip(coords, design.weights), start=1):
        lines.append(" ".join([f"{i:>{iw}}", *[f"{c[j]:>{widths[j]}}" for j in range(k)], f"{w:8.6f}"]))
    return "\n".join(lines) + "\n"


def _fmt(v: float) -> str:
    return f"{v:.6f}".rstrip("0").rstrip(".") if v != int(v) else f"{int(v)}"


def write_design(design: Design, path, fmt: str = "csv", criterion=None, m=None) -> None:
    Path(path).write_text(format_design(design, fmt, criterion, m))


def format_design(design: Design, fmt: str = "csv", criterion=None, m=None) -> str:
    if fmt == "csv":
        return design_to_csv(design)
    if fmt == "json":
        return design_to_json(design, criterion, m) + "\n"
    if fmt == "table":
        return design_to_table(design)
    raise ValueError(f"unknown design format {fmt!r}")


def read_design(path) -> Design:
    """Load a design from a CSV or JSON file (chosen by content)."""
    text = Path(path).read_text()
    if text.lstrip().startswith("{"):
        return design_from_json(text)
    return design_from_csv(text)
