"""Deterministic CSV, JSON and SVG output."""
from __future__ import annotations

import io
import json
import math
from html import escape

import numpy as np

__all__ = ["emit_report", "format_value", "to_csv", "to_json", "to_svg", "SWEEP_COLUMNS"]

SWEEP_COLUMNS = ("n", "p", "s", "alpha", "epsilon", "term1", "term2", "term3", "term4",
                 "total", "vacuous")


def format_value(v):
    """CSV cell text: floats as ``%.12e``, booleans as ``true``/``false``."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.12e" % float(v)
    if isinstance(v, (list, tuple, np.ndarray)):
        return " ".join(format_value(x) for x in v)
    return str(v)


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if hasattr(obj, "to_dict"):
        return _plain(obj.to_dict())
    return obj


def _rows(results):
    if isinstance(results, dict):
        return [results]
    return list(results)


def to_csv(results, columns=None):
    """CSV text with LF line endings.  ``columns`` defaults to the keys of the first row."""
    rows = [_plain(r) for r in _rows(results)]
    if columns is None:
        columns = list(rows[0]) if rows else list(SWEEP_COLUMNS)
    buf = io.StringIO()
    buf.write(",".join(columns) + "\n")
    for r in rows:
        buf.write(",".join(format_value(r.get(c)) for c in columns) + "\n")
    return buf.getvalue()


def to_json(results):
    """Indented JSON with keys in insertion order."""
    return json.dumps(_plain(results), indent=2) + "\n"


def _ticks(lo, hi):
    return [lo + (hi - lo) * i / 4 for i in range(5)]


def to_svg(rows, x="n", ys=("total",), logx=True, logy=True, width=640, height=400, title=""):
    """Line chart of ``ys`` against ``x``; nonpositive values are dropped on log axes."""
    rows = [_plain(r) for r in _rows(rows)]
    m = 60
    tx = (lambda v: math.log10(v)) if logx else float
    ty = (lambda v: math.log10(v)) if logy else float

    def ok(v, log_axis):
        return v is not None and isinstance(v, (int, float)) and math.isfinite(v) and (v > 0 or not log_axis)

    series = []
    for name in ys:
        pts = [(tx(r[x]), ty(r[name])) for r in rows if ok(r.get(x), logx) and ok(r.get(name), logy)]
        series.append((name, pts))
    allp = [pt for _, pts in series for pt in pts]
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">',
           f'<rect width="{width}" height="{height}" fill="white"/>']
    if title:
        out.append(f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="14">'
                   f'{escape(title)}</text>')
    if allp:
        x0, x1 = min(p[0] for p in allp), max(p[0] for p in allp)
        y0, y1 = min(p[1] for p in allp), max(p[1] for p in allp)
        x1 = x1 if x1 > x0 else x0 + 1
        y1 = y1 if y1 > y0 else y0 + 1

        def sx(v):
            return m + (v - x0) / (x1 - x0) * (width - 2 * m)

        def sy(v):
            return height - m - (v - y0) / (y1 - y0) * (height - 2 * m)

        out.append(f'<line x1="{m}" y1="{height - m}" x2="{width - m}" y2="{height - m}" stroke="black"/>')
        out.append(f'<line x1="{m}" y1="{m}" x2="{m}" y2="{height - m}" stroke="black"/>')
        for v in _ticks(x0, x1):
            label = f"1e{v:.1f}" if logx else f"{v:.3g}"
            out.append(f'<text x="{sx(v):.1f}" y="{height - m + 16}" text-anchor="middle" '
                       f'font-size="10">{label}</text>')
        for v in _ticks(y0, y1):
            label = f"1e{v:.1f}" if logy else f"{v:.3g}"
            out.append(f'<text x="{m - 4}" y="{sy(v) + 3:.1f}" text-anchor="end" '
                       f'font-size="10">{label}</text>')
        colors = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")
        for i, (name, pts) in enumerate(series):
            c = colors[i % len(colors)]
            if pts:
                path = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in pts)
                out.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{path}"/>')
            out.append(f'<text x="{width - m}" y="{m + 14 * i}" text-anchor="end" font-size="11" '
                       f'fill="{c}">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_report(results, format="json", path=None, columns=None, **svg_options):
    """Serialize ``results`` and write them to ``path`` (or return the text).

    ``results`` is a list of flat rows or a dict.  The same input always gives
    the same bytes.  I/O errors propagate.
    """
    if format == "csv":
        text = to_csv(results, columns)
    elif format == "json":
        text = to_json(results)
    elif format == "svg":
        text = to_svg(results, **svg_options)
    else:
        raise ValueError(f"unknown format {format!r}; use csv, json or svg")
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
    return text
