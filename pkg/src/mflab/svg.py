"""Minimal native SVG line/scatter plots (no plotting dependency, no timestamps)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
W, H = 640, 420
ML, MR, MT, MB = 78, 20, 40, 56


@dataclass
class Series:
    x: np.ndarray
    y: np.ndarray
    label: str
    style: str = "line"  # or "points" / "dashed"


@dataclass
class Plot:
    title: str
    xlabel: str
    ylabel: str
    logx: bool = False
    logy: bool = False
    series: list = field(default_factory=list)

    def add(self, x, y, label, style="line"):
        self.series.append(Series(np.asarray(x, float), np.asarray(y, float), label, style))
        return self

    def render(self) -> str:
        return render(self)


def _fmt_tick(v: float) -> str:
    if v == 0:
        return "0"
    if abs(v) >= 1e4 or abs(v) < 1e-2:
        return f"{v:.1e}"
    return f"{v:.3g}"


def _ticks(lo, hi, log):
    if log:
        a, b = math.floor(lo), math.ceil(hi)
        step = max(1, (b - a) // 6)
        return [float(e) for e in range(a, b + 1, step)]
    span = hi - lo
    raw = span / 5
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    return [start + k * step for k in range(int((hi - start) / step + 1e-9) + 1)]


def _range(vals):
    lo, hi = float(np.min(vals)), float(np.max(vals))
    if hi == lo:
        pad = abs(lo) * 0.1 or 1.0
        return lo - pad, hi + pad
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def render(plot: Plot) -> str:
    def tx(v):
        return np.log10(v) if plot.logx else v

    def ty(v):
        return np.log10(v) if plot.logy else v

    xs, ys = [], []
    for s in plot.series:
        ok = np.isfinite(s.x) & np.isfinite(s.y)
        if plot.logx:
            ok &= s.x > 0
        if plot.logy:
            ok &= s.y > 0
        xs.append(tx(s.x[ok]))
        ys.append(ty(s.y[ok]))
    allx = np.concatenate(xs) if xs else np.zeros(1)
    ally = np.concatenate(ys) if ys else np.zeros(1)
    if allx.size == 0:
        allx = np.zeros(1)
    if ally.size == 0:
        ally = np.zeros(1)
    x0, x1 = _range(allx)
    y0, y1 = _range(ally)
    pw, ph = W - ML - MR, H - MT - MB

    def px(v):
        return ML + (v - x0) / (x1 - x0) * pw

    def py(v):
        return MT + ph - (v - y0) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
           f'viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">',
           f'<rect width="{W}" height="{H}" fill="white"/>',
           f'<text x="{W / 2:.1f}" y="22" text-anchor="middle" font-size="15">'
           f'{escape(plot.title)}</text>',
           f'<rect x="{ML}" y="{MT}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>']
    for v in _ticks(x0, x1, plot.logx):
        if x0 <= v <= x1:
            label = _fmt_tick(10**v if plot.logx else v)
            out.append(f'<line x1="{px(v):.2f}" y1="{MT + ph}" x2="{px(v):.2f}" '
                       f'y2="{MT + ph + 5}" stroke="#333"/>')
            out.append(f'<text x="{px(v):.2f}" y="{MT + ph + 19}" text-anchor="middle">'
                       f'{label}</text>')
    for v in _ticks(y0, y1, plot.logy):
        if y0 <= v <= y1:
            label = _fmt_tick(10**v if plot.logy else v)
            out.append(f'<line x1="{ML - 5}" y1="{py(v):.2f}" x2="{ML}" y2="{py(v):.2f}" '
                       f'stroke="#333"/>')
            out.append(f'<text x="{ML - 8}" y="{py(v) + 4:.2f}" text-anchor="end">{label}</text>')
    out.append(f'<text x="{ML + pw / 2:.1f}" y="{H - 12}" text-anchor="middle">'
               f'{escape(plot.xlabel)}</text>')
    out.append(f'<text transform="translate(16 {MT + ph / 2:.1f}) rotate(-90)" '
               f'text-anchor="middle">{escape(plot.ylabel)}</text>')
    for k, (s, sx, sy) in enumerate(zip(plot.series, xs, ys)):
        color = PALETTE[k % len(PALETTE)]
        if s.style == "points":
            for a, b in zip(sx, sy):
                out.append(f'<circle cx="{px(a):.2f}" cy="{py(b):.2f}" r="3" fill="{color}"/>')
        elif len(sx):
            pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(sx, sy))
            dash = ' stroke-dasharray="6 4"' if s.style == "dashed" else ""
            out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                       f'stroke-width="1.8"{dash}/>')
        ly = MT + 16 + 16 * k
        out.append(f'<line x1="{ML + 10}" y1="{ly - 4}" x2="{ML + 30}" y2="{ly - 4}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{ML + 36}" y="{ly}">{escape(s.label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write(path, plot: Plot) -> None:
    with open(path, "w") as fh:
        fh.write(plot.render())
