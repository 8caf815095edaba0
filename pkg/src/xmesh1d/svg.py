"""Minimal static SVG line plots (no plotting dependency)."""

from __future__ import annotations

from dataclasses import dataclass, field
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


@dataclass
class Series:
    x: np.ndarray
    y: np.ndarray
    label: str = ""


@dataclass
class LinePlot:
    title: str
    xlabel: str
    ylabel: str
    series: list[Series] = field(default_factory=list)
    width: int = 640
    height: int = 420

    def add(self, x, y, label: str = "") -> "LinePlot":
        self.series.append(Series(np.asarray(x, dtype=float), np.asarray(y, dtype=float), label))
        return self

    def _bounds(self):
        xs = np.concatenate([s.x[np.isfinite(s.x)] for s in self.series] or [np.zeros(1)])
        ys = np.concatenate([s.y[np.isfinite(s.y)] for s in self.series] or [np.zeros(1)])
        if xs.size == 0:
            xs = np.zeros(1)
        if ys.size == 0:
            ys = np.zeros(1)
        x0, x1 = float(xs.min()), float(xs.max())
        y0, y1 = float(ys.min()), float(ys.max())
        if x1 == x0:
            x0, x1 = x0 - 0.5, x1 + 0.5
        if y1 == y0:
            y0, y1 = y0 - 0.5, y1 + 0.5
        pad = 0.04 * (y1 - y0)
        return x0, x1, y0 - pad, y1 + pad

    def render(self) -> str:
        W, H = self.width, self.height
        ml, mr, mt, mb = 70, 20, 36, 50
        pw, ph = W - ml - mr, H - mt - mb
        x0, x1, y0, y1 = self._bounds()

        def px(x):
            return ml + (x - x0) / (x1 - x0) * pw

        def py(y):
            return mt + (1.0 - (y - y0) / (y1 - y0)) * ph

        out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
               f'viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">',
               f'<rect width="{W}" height="{H}" fill="white"/>',
               f'<text x="{W / 2:.1f}" y="20" text-anchor="middle" font-size="14">{escape(self.title)}</text>',
               f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
        for k in range(5):
            tx = x0 + k * (x1 - x0) / 4
            ty = y0 + k * (y1 - y0) / 4
            out.append(f'<text x="{px(tx):.1f}" y="{mt + ph + 16}" text-anchor="middle">{tx:.3g}</text>')
            out.append(f'<text x="{ml - 6}" y="{py(ty) + 4:.1f}" text-anchor="end">{ty:.3g}</text>')
        out.append(f'<text x="{ml + pw / 2:.1f}" y="{H - 10}" text-anchor="middle">{escape(self.xlabel)}</text>')
        out.append(f'<text x="16" y="{mt + ph / 2:.1f}" text-anchor="middle" '
                   f'transform="rotate(-90 16 {mt + ph / 2:.1f})">{escape(self.ylabel)}</text>')
        for k, s in enumerate(self.series):
            ok = np.isfinite(s.x) & np.isfinite(s.y)
            pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(s.x[ok], s.y[ok]))
            color = PALETTE[k % len(PALETTE)]
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
            if s.label:
                ly = mt + 16 + 16 * k
                out.append(f'<line x1="{ml + pw - 120}" y1="{ly - 4}" x2="{ml + pw - 100}" y2="{ly - 4}" '
                           f'stroke="{color}" stroke-width="2"/>')
                out.append(f'<text x="{ml + pw - 95}" y="{ly}">{escape(s.label)}</text>')
        out.append("</svg>")
        return "\n".join(out) + "\n"

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.render())
