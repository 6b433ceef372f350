"""Bare-bones SVG line plots (no plotting dependency)."""

from __future__ import annotations

from html import escape

import numpy as np

COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


def line_plot_svg(path, series, title="", xlabel="", ylabel="", width=640, height=400) -> None:
    """``series``: list of ``(label, x, y)``."""
    ml, mr, mt, mb = 60, 20, 30, 45
    xs = np.concatenate([np.asarray(x, float) for _, x, _ in series])
    ys = np.concatenate([np.asarray(y, float) for _, _, y in series])
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(ys.min()), float(ys.max())
    if x1 == x0:
        x1 = x0 + 1
    pad = 0.05 * (y1 - y0 or 1.0)
    y0, y1 = y0 - pad, y1 + pad
    W, H = width - ml - mr, height - mt - mb

    def px(x):
        return ml + (x - x0) / (x1 - x0) * W

    def py(y):
        return mt + (1 - (y - y0) / (y1 - y0)) * H

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="12">',
           f'<rect x="{ml}" y="{mt}" width="{W}" height="{H}" fill="none" stroke="#444"/>',
           f'<text x="{width / 2}" y="18" text-anchor="middle">{escape(title)}</text>',
           f'<text x="{width / 2}" y="{height - 8}" text-anchor="middle">{escape(xlabel)}</text>',
           f'<text x="14" y="{mt + H / 2}" text-anchor="middle" transform="rotate(-90 14 {mt + H / 2})">{escape(ylabel)}</text>']
    for v in np.linspace(x0, x1, 5):
        out.append(f'<text x="{px(v):.1f}" y="{mt + H + 16}" text-anchor="middle">{v:.3g}</text>')
    for v in np.linspace(y0, y1, 5):
        out.append(f'<text x="{ml - 6}" y="{py(v) + 4:.1f}" text-anchor="end">{v:.3g}</text>')
    for i, (label, x, y) in enumerate(series):
        c = COLORS[i % len(COLORS)]
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x, y))
        out.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{pts}"/>')
        out.append(f'<text x="{ml + 10}" y="{mt + 16 + 14 * i}" fill="{c}">{escape(label)}</text>')
    out.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(out) + "\n")
