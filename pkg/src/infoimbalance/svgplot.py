"""Minimal self-contained SVG line charts."""
from __future__ import annotations

import math
from html import escape

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
           "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"]

WIDTH, HEIGHT = 640, 400
MARGIN = dict(left=64, right=160, top=40, bottom=52)


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    step = 10 ** math.floor(math.log10((hi - lo) / n))
    for mult in (1, 2, 5, 10):
        if (hi - lo) / (step * mult) <= n + 1:
            step *= mult
            break
    start = math.ceil(lo / step) * step
    out = []
    v = start
    while v <= hi + step * 1e-9:
        out.append(round(v, 12))
        v += step
    return out


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _label(v: float) -> str:
    return f"{v:g}"


def line_chart(series, *, title: str = "", xlabel: str = "", ylabel: str = "",
               logx: bool = False) -> str:
    """Render ``series`` (a list of ``(label, xs, ys)``) as an SVG document.

    Non-finite points are skipped.  The output depends only on the
    arguments, so identical data always gives identical bytes.
    """
    pts = [(x, y) for _, xs, ys in series for x, y in zip(xs, ys)
           if x is not None and y is not None and math.isfinite(x) and math.isfinite(y)
           and (x > 0 or not logx)]
    if pts:
        xmin, xmax = min(p[0] for p in pts), max(p[0] for p in pts)
        ymin, ymax = min(p[1] for p in pts), max(p[1] for p in pts)
    else:
        xmin, xmax, ymin, ymax = 0.0, 1.0, 0.0, 1.0
    if logx:
        xmin, xmax = math.log10(xmin), math.log10(xmax)
    if xmax == xmin:
        xmin, xmax = xmin - 0.5, xmax + 0.5
    if ymax == ymin:
        ymin, ymax = ymin - 0.5, ymax + 0.5
    pad = 0.05 * (ymax - ymin)
    ymin, ymax = ymin - pad, ymax + pad

    x0, x1 = MARGIN["left"], WIDTH - MARGIN["right"]
    y0, y1 = HEIGHT - MARGIN["bottom"], MARGIN["top"]

    def sx(x):
        v = math.log10(x) if logx else x
        return x0 + (v - xmin) / (xmax - xmin) * (x1 - x0)

    def sy(y):
        return y0 - (y - ymin) / (ymax - ymin) * (y0 - y1)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
           f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>']
    if title:
        out.append(f'<text x="{(x0 + x1) / 2:.2f}" y="22" text-anchor="middle" '
                   f'font-size="14">{escape(title)}</text>')
    out.append(f'<path d="M{x0},{y1}V{y0}H{x1}" fill="none" stroke="black"/>')

    if logx:
        xt = [10.0 ** e for e in range(math.ceil(xmin - 1e-9), math.floor(xmax + 1e-9) + 1)]
    else:
        xt = _ticks(xmin, xmax)
    for t in xt:
        px = sx(t)
        out.append(f'<line x1="{_fmt(px)}" y1="{y0}" x2="{_fmt(px)}" y2="{y0 + 5}" stroke="black"/>')
        out.append(f'<text x="{_fmt(px)}" y="{y0 + 18}" text-anchor="middle">{_label(t)}</text>')
    for t in _ticks(ymin, ymax):
        py = sy(t)
        out.append(f'<line x1="{x0 - 5}" y1="{_fmt(py)}" x2="{x0}" y2="{_fmt(py)}" stroke="black"/>')
        out.append(f'<text x="{x0 - 8}" y="{_fmt(py + 4)}" text-anchor="end">{_label(t)}</text>')
    if xlabel:
        out.append(f'<text x="{(x0 + x1) / 2:.2f}" y="{HEIGHT - 12}" '
                   f'text-anchor="middle">{escape(xlabel)}</text>')
    if ylabel:
        out.append(f'<text x="16" y="{(y0 + y1) / 2:.2f}" text-anchor="middle" '
                   f'transform="rotate(-90 16 {(y0 + y1) / 2:.2f})">{escape(ylabel)}</text>')

    for i, (label, xs, ys) in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        seg = [(sx(x), sy(y)) for x, y in zip(xs, ys)
               if x is not None and y is not None and math.isfinite(x) and math.isfinite(y)
               and (x > 0 or not logx)]
        if seg:
            d = " ".join(f"{'M' if j == 0 else 'L'}{_fmt(px)},{_fmt(py)}"
                         for j, (px, py) in enumerate(seg))
            out.append(f'<path d="{d}" fill="none" stroke="{color}" stroke-width="1.5"/>')
            for px, py in seg:
                out.append(f'<circle cx="{_fmt(px)}" cy="{_fmt(py)}" r="2.5" fill="{color}"/>')
        ly = y1 + 16 * i
        out.append(f'<line x1="{x1 + 12}" y1="{ly}" x2="{x1 + 32}" y2="{ly}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{x1 + 38}" y="{ly + 4}">{escape(str(label))}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
