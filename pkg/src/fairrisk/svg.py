"""Minimal deterministic SVG charts.

Layout is fixed: a 640x420 canvas, a 60px left and 50px bottom margin, five
ticks per axis and numbers printed with four significant digits, so the same
data always produces the same bytes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from xml.sax.saxutils import escape

WIDTH, HEIGHT = 640, 420
LEFT, RIGHT, TOP, BOTTOM = 60, 150, 30, 50
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f",
           "#bcbd22", "#17becf")


def _n(x: float) -> str:
    return f"{x:.2f}"


def _tick(x: float) -> str:
    return f"{x:.4g}"


@dataclass
class Chart:
    title: str
    xlabel: str
    ylabel: str
    xlim: tuple = (0.0, 1.0)
    ylim: tuple = (0.0, 1.0)
    seed: int | None = None
    _body: list = field(default_factory=list)
    _legend: list = field(default_factory=list)

    def _x(self, x):
        a, b = self.xlim
        return LEFT + (x - a) / (b - a) * (WIDTH - LEFT - RIGHT)

    def _y(self, y):
        a, b = self.ylim
        return HEIGHT - BOTTOM - (y - a) / (b - a) * (HEIGHT - TOP - BOTTOM)

    def _color(self):
        return PALETTE[len(self._legend) % len(PALETTE)]

    def line(self, xs, ys, label, dashed=False, markers=False):
        color = self._color()
        pts = [(x, y) for x, y in zip(xs, ys) if math.isfinite(x) and math.isfinite(y)]
        if pts:
            path = " ".join(f"{_n(self._x(x))},{_n(self._y(y))}" for x, y in pts)
            dash = ' stroke-dasharray="5,3"' if dashed else ""
            self._body.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash} points="{path}"/>')
            if markers:
                for x, y in pts:
                    self._body.append(f'<circle cx="{_n(self._x(x))}" cy="{_n(self._y(y))}" r="2.5" fill="{color}"/>')
        self._legend.append((label, color))

    def bars(self, lefts, rights, heights, label, opacity=0.5):
        color = self._color()
        y0 = self._y(self.ylim[0])
        for a, b, h in zip(lefts, rights, heights):
            if h <= 0 or not math.isfinite(h):
                continue
            top = self._y(min(h, self.ylim[1]))
            self._body.append(f'<rect x="{_n(self._x(a))}" y="{_n(top)}" width="{_n(self._x(b) - self._x(a))}" '
                              f'height="{_n(y0 - top)}" fill="{color}" fill-opacity="{opacity}"/>')
        self._legend.append((label, color))

    def vline(self, x, label):
        self._body.append(f'<line x1="{_n(self._x(x))}" y1="{_n(self._y(self.ylim[0]))}" x2="{_n(self._x(x))}" '
                          f'y2="{_n(self._y(self.ylim[1]))}" stroke="#000" stroke-dasharray="3,3"/>')
        self._body.append(f'<text x="{_n(self._x(x) + 3)}" y="{_n(TOP + 12)}" font-size="10">{escape(label)}</text>')

    def _axes(self):
        out = []
        x0, x1 = self._x(self.xlim[0]), self._x(self.xlim[1])
        y0, y1 = self._y(self.ylim[0]), self._y(self.ylim[1])
        out.append(f'<rect x="{_n(x0)}" y="{_n(y1)}" width="{_n(x1 - x0)}" height="{_n(y0 - y1)}" '
                   f'fill="none" stroke="#444"/>')
        for k in range(5):
            xv = self.xlim[0] + k * (self.xlim[1] - self.xlim[0]) / 4
            yv = self.ylim[0] + k * (self.ylim[1] - self.ylim[0]) / 4
            out.append(f'<text x="{_n(self._x(xv))}" y="{_n(y0 + 15)}" font-size="10" '
                       f'text-anchor="middle">{_tick(xv)}</text>')
            out.append(f'<text x="{_n(x0 - 5)}" y="{_n(self._y(yv) + 3)}" font-size="10" '
                       f'text-anchor="end">{_tick(yv)}</text>')
        out.append(f'<text x="{_n((x0 + x1) / 2)}" y="{HEIGHT - 12}" font-size="12" '
                   f'text-anchor="middle">{escape(self.xlabel)}</text>')
        out.append(f'<text x="15" y="{_n((y0 + y1) / 2)}" font-size="12" text-anchor="middle" '
                   f'transform="rotate(-90 15 {_n((y0 + y1) / 2)})">{escape(self.ylabel)}</text>')
        out.append(f'<text x="{_n((x0 + x1) / 2)}" y="18" font-size="13" '
                   f'text-anchor="middle">{escape(self.title)}</text>')
        for i, (label, color) in enumerate(self._legend):
            y = TOP + 10 + 16 * i
            out.append(f'<rect x="{WIDTH - RIGHT + 12}" y="{y - 8}" width="10" height="10" fill="{color}"/>')
            out.append(f'<text x="{WIDTH - RIGHT + 27}" y="{y + 1}" font-size="10">{escape(label)}</text>')
        return out

    def render(self) -> str:
        head = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
                f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif">']
        if self.seed is not None:
            head.append(f"<!-- seed: {self.seed} -->")
        head.append(f'<rect width="{WIDTH}" height="{HEIGHT}" fill="#fff"/>')
        return "\n".join(head + self._axes() + self._body + ["</svg>"]) + "\n"
