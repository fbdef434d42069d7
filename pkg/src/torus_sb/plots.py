"""Minimal standalone SVG log-log line charts (no plotting dependency)."""
from __future__ import annotations

import math
from xml.sax.saxutils import escape

_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
W, H, PAD = 560, 400, 60


def _ticks(lo: float, hi: float):
    return [10.0**k for k in range(math.floor(lo), math.ceil(hi) + 1)]


def loglog_svg(series: dict, title: str = "", xlabel: str = "", ylabel: str = "") -> str:
    """series: label -> list of (x, y) with x, y > 0."""
    pts = [(x, y) for s in series.values() for x, y in s if x > 0 and y > 0]
    if not pts:
        raise ValueError("nothing to plot")
    lx = [math.log10(x) for x, _ in pts]
    ly = [math.log10(y) for _, y in pts]
    x0, x1 = min(lx), max(lx)
    y0, y1 = min(ly), max(ly)
    x0, x1 = (x0 - 0.5, x1 + 0.5) if x1 - x0 < 1e-12 else (x0 - 0.05 * (x1 - x0), x1 + 0.05 * (x1 - x0))
    y0, y1 = (y0 - 0.5, y1 + 0.5) if y1 - y0 < 1e-12 else (y0 - 0.05 * (y1 - y0), y1 + 0.05 * (y1 - y0))

    def X(v):
        return PAD + (math.log10(v) - x0) / (x1 - x0) * (W - 2 * PAD)

    def Y(v):
        return H - PAD - (math.log10(v) - y0) / (y1 - y0) * (H - 2 * PAD)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">',
           f'<rect width="{W}" height="{H}" fill="white"/>',
           f'<rect x="{PAD}" y="{PAD}" width="{W - 2 * PAD}" height="{H - 2 * PAD}" fill="none" stroke="black"/>',
           f'<text x="{W / 2}" y="{PAD / 2}" text-anchor="middle" font-size="14">{escape(title)}</text>',
           f'<text x="{W / 2}" y="{H - 15}" text-anchor="middle">{escape(xlabel)}</text>',
           f'<text x="15" y="{H / 2}" text-anchor="middle" transform="rotate(-90 15 {H / 2})">{escape(ylabel)}</text>']
    for t in _ticks(x0, x1):
        if x0 <= math.log10(t) <= x1:
            out.append(f'<text x="{X(t):.1f}" y="{H - PAD + 16}" text-anchor="middle">{t:g}</text>')
    for t in _ticks(y0, y1):
        if y0 <= math.log10(t) <= y1:
            out.append(f'<line x1="{PAD}" x2="{W - PAD}" y1="{Y(t):.1f}" y2="{Y(t):.1f}" stroke="#ddd"/>')
            out.append(f'<text x="{PAD - 5}" y="{Y(t) + 4:.1f}" text-anchor="end">{t:.0e}</text>')
    for i, (label, s) in enumerate(series.items()):
        s = sorted((x, y) for x, y in s if x > 0 and y > 0)
        color = _COLORS[i % len(_COLORS)]
        path = " ".join(f"{X(x):.1f},{Y(y):.1f}" for x, y in s)
        out.append(f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="2"/>')
        for x, y in s:
            out.append(f'<circle cx="{X(x):.1f}" cy="{Y(y):.1f}" r="3" fill="{color}"/>')
        out.append(f'<text x="{W - PAD - 5}" y="{PAD + 16 * (i + 1)}" text-anchor="end" fill="{color}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
