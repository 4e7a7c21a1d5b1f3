"""Minimal SVG line plots with a logarithmic y axis (no plotting dependency)."""

from __future__ import annotations

import math
from dataclasses import dataclass
from xml.sax.saxutils import escape

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")


@dataclass
class Series:
    label: str
    x: list
    y: list
    dashed: bool = False
    color: str | None = None


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def render(series: list[Series], title: str = "", xlabel: str = "", ylabel: str = "BER",
           width: int = 640, height: int = 440) -> str:
    """SVG document with one polyline per series; non-positive y values are skipped."""
    pts = [(x, y) for s in series for x, y in zip(s.x, s.y) if y is not None and y > 0]
    left, right, top, bottom = 70, 150, 40, 50
    pw, ph = width - left - right, height - top - bottom
    if pts:
        xs = [p[0] for p in pts]
        x0, x1 = min(xs), max(xs)
        lo = math.floor(math.log10(min(p[1] for p in pts)))
        hi = math.ceil(math.log10(max(p[1] for p in pts)))
    else:
        x0, x1, lo, hi = 0.0, 1.0, -6, 0
    if x1 == x0:
        x0, x1 = x0 - 1, x1 + 1
    if hi == lo:
        hi = lo + 1

    def px(x):
        return left + (x - x0) / (x1 - x0) * pw

    def py(y):
        return top + (hi - math.log10(y)) / (hi - lo) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="12">',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="white" stroke="black"/>',
    ]
    for d in range(lo, hi + 1):
        y = _fmt(py(10.0**d))
        out.append(f'<line x1="{left}" y1="{y}" x2="{left + pw}" y2="{y}" stroke="#ddd"/>')
        out.append(f'<text x="{left - 6}" y="{y}" text-anchor="end" dominant-baseline="middle">1e{d}</text>')
    ticks = sorted({p[0] for p in pts})
    for t in ticks[:: max(1, len(ticks) // 10)]:
        out.append(f'<text x="{_fmt(px(t))}" y="{top + ph + 16}" text-anchor="middle">{t:g}</text>')
    out.append(f'<text x="{left + pw / 2}" y="{height - 10}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{top + ph / 2}" text-anchor="middle" transform="rotate(-90 16 {top + ph / 2})">{escape(ylabel)}</text>')
    if title:
        out.append(f'<text x="{left + pw / 2}" y="{top - 14}" text-anchor="middle" font-size="14">{escape(title)}</text>')
    for i, s in enumerate(series):
        color = s.color or PALETTE[i % len(PALETTE)]
        coords = " ".join(f"{_fmt(px(x))},{_fmt(py(y))}" for x, y in zip(s.x, s.y) if y is not None and y > 0)
        dash = ' stroke-dasharray="6,4"' if s.dashed else ""
        if coords:
            out.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>')
        ly = top + 14 + 18 * i
        out.append(f'<line x1="{left + pw + 10}" y1="{ly}" x2="{left + pw + 34}" y2="{ly}" stroke="{color}" stroke-width="1.5"{dash}/>')
        out.append(f'<text x="{left + pw + 40}" y="{ly}" dominant-baseline="middle">{escape(s.label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
