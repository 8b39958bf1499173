"""Tiny self-contained SVG line charts for diagnostic output."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

_COLORS = ("#1f3b73", "#b03a2e", "#1e8449", "#7d3c98", "#ca6f1e", "#2e86c1")


def _ticks(lo, hi):
    return [lo + k * (hi - lo) / 4 for k in range(5)]


def line_chart(path, x, series, markers=None, title="", xlabel="", dashed=(), width=720, height=300):
    """Write one SVG panel.

    ``series`` maps names to y arrays drawn as lines over ``x``; ``markers``
    maps names to y arrays drawn as filled circles. Series named in
    ``dashed`` get a dashed stroke and NaNs break a line.
    """
    x = np.asarray(x, dtype=float)
    lines = {k: np.asarray(v, dtype=float) for k, v in series.items()}
    dots = {k: np.asarray(v, dtype=float) for k, v in (markers or {}).items()}
    allv = np.concatenate([v[np.isfinite(v)] for v in [*lines.values(), *dots.values()]] or [np.zeros(0)])
    y_lo, y_hi = (float(allv.min()), float(allv.max())) if allv.size else (0.0, 1.0)
    if y_hi == y_lo:
        y_lo, y_hi = y_lo - 0.5, y_hi + 0.5
    x_lo, x_hi = float(np.min(x)), float(np.max(x))
    if x_hi == x_lo:
        x_lo, x_hi = x_lo - 0.5, x_hi + 0.5
    ml, mr, mt, mb = 60, 110, 30, 40
    pw, ph = width - ml - mr, height - mt - mb

    def sx(v):
        return ml + (v - x_lo) / (x_hi - x_lo) * pw

    def sy(v):
        return mt + (y_hi - v) / (y_hi - y_lo) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
           f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="#888"/>']
    if title:
        out.append(f'<text x="{ml}" y="{mt - 10}" font-size="13">{escape(title)}</text>')
    if xlabel:
        out.append(f'<text x="{ml + pw / 2:.1f}" y="{height - 8}" text-anchor="middle">{escape(xlabel)}</text>')
    for v in _ticks(y_lo, y_hi):
        out.append(f'<text x="{ml - 6}" y="{sy(v) + 4:.1f}" text-anchor="end">{v:.4g}</text>')
    for v in _ticks(x_lo, x_hi):
        out.append(f'<text x="{sx(v):.1f}" y="{mt + ph + 15}" text-anchor="middle">{v:.4g}</text>')
    k = 0
    for name, y in lines.items():
        color = _COLORS[k % len(_COLORS)]
        dash = ' stroke-dasharray="5,3"' if name in dashed else ""
        segment = []
        for xi, yi in zip(x, y):
            if np.isfinite(yi):
                segment.append(f"{sx(xi):.2f},{sy(yi):.2f}")
            elif segment:
                out.append(f'<polyline fill="none" stroke="{color}"{dash} points="{" ".join(segment)}"/>')
                segment = []
        if segment:
            out.append(f'<polyline fill="none" stroke="{color}"{dash} points="{" ".join(segment)}"/>')
        out.append(f'<text x="{ml + pw + 8}" y="{mt + 14 + 14 * k}" fill="{color}">{escape(name)}</text>')
        k += 1
    for name, y in dots.items():
        color = _COLORS[k % len(_COLORS)]
        for xi, yi in zip(x, y):
            if np.isfinite(yi):
                out.append(f'<circle cx="{sx(xi):.2f}" cy="{sy(yi):.2f}" r="3" fill="{color}"/>')
        out.append(f'<text x="{ml + pw + 8}" y="{mt + 14 + 14 * k}" fill="{color}">{escape(name)}</text>')
        k += 1
    out.append("</svg>")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(out) + "\n")
