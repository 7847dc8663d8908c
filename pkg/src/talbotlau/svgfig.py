"""Tiny deterministic SVG figures: scatter, lines, error bars, cell maps.

Textual output only, fixed float formatting, no timestamps or random ids,
so identical inputs give byte-identical files.
"""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np


def _nice_ticks(lo: float, hi: float, target: int = 5) -> list[float]:
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
        return [lo]
    raw = (hi - lo) / target
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 5.0, 10.0):
        if raw <= mult * mag:
            step = mult * mag
            break
    first = math.ceil(lo / step) * step
    ticks = []
    t = first
    while t <= hi + 1e-9 * step:
        ticks.append(0.0 if abs(t) < 1e-12 * step else t)
        t += step
    return ticks


class SvgFigure:
    """One panel with linear axes; data coordinates in, pixels out."""

    def __init__(
        self,
        xlim: tuple[float, float],
        ylim: tuple[float, float],
        title: str = "",
        xlabel: str = "",
        ylabel: str = "",
        width: int = 640,
        height: int = 420,
    ):
        self.width = width
        self.height = height
        self.margin = (64, 20, 28, 48)  # left, right, top, bottom
        pad_x = 0.0 if xlim[1] > xlim[0] else 0.5
        pad_y = 0.0 if ylim[1] > ylim[0] else 0.5
        self.xlim = (xlim[0] - pad_x, xlim[1] + pad_x)
        self.ylim = (ylim[0] - pad_y, ylim[1] + pad_y)
        self.title = title
        self.xlabel = xlabel
        self.ylabel = ylabel
        self.elements: list[str] = []

    def _px(self, x: float) -> float:
        l, r, _, _ = self.margin
        frac = (x - self.xlim[0]) / (self.xlim[1] - self.xlim[0])
        return l + frac * (self.width - l - r)

    def _py(self, y: float) -> float:
        _, _, t, b = self.margin
        frac = (y - self.ylim[0]) / (self.ylim[1] - self.ylim[0])
        return self.height - b - frac * (self.height - t - b)

    def polyline(self, xs, ys, color: str = "#1f77b4", width: float = 1.5, dash: str = "") -> None:
        pts = " ".join(f"{self._px(x):.2f},{self._py(y):.2f}" for x, y in zip(xs, ys))
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
        self.elements.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" '
            f'stroke-width="{width}"{dash_attr}/>'
        )

    def circles(self, xs, ys, radius: float = 2.5, color: str = "#d62728") -> None:
        for x, y in zip(xs, ys):
            self.elements.append(
                f'<circle cx="{self._px(x):.2f}" cy="{self._py(y):.2f}" '
                f'r="{radius}" fill="{color}"/>'
            )

    def error_bars(self, xs, ys, yerr, color: str = "#d62728") -> None:
        for x, y, e in zip(xs, ys, yerr):
            px = self._px(x)
            self.elements.append(
                f'<line x1="{px:.2f}" y1="{self._py(y - e):.2f}" '
                f'x2="{px:.2f}" y2="{self._py(y + e):.2f}" stroke="{color}" stroke-width="1"/>'
            )

    def ellipse(self, cx, cy, rx, ry, color: str = "#000000") -> None:
        prx = abs(self._px(cx + rx) - self._px(cx))
        pry = abs(self._py(cy + ry) - self._py(cy))
        self.elements.append(
            f'<ellipse cx="{self._px(cx):.2f}" cy="{self._py(cy):.2f}" '
            f'rx="{prx:.2f}" ry="{pry:.2f}" fill="none" stroke="{color}" stroke-width="1.5"/>'
        )

    def cells(self, x0, y0, x1, y1, values, vmax: float | None = None) -> None:
        """Filled rectangles colored white (0) to deep blue (vmax)."""
        values = np.asarray(values, dtype=float)
        if vmax is None:
            vmax = float(values.max()) if len(values) else 1.0
        vmax = vmax if vmax > 0 else 1.0
        for a, b, c, d, v in zip(x0, y0, x1, y1, values):
            frac = min(max(v / vmax, 0.0), 1.0)
            r = int(round(255 + (26 - 255) * frac))
            g = int(round(255 + (35 - 255) * frac))
            bl = int(round(255 + (126 - 255) * frac))
            px, py = self._px(a), self._py(d)
            w, h = abs(self._px(c) - self._px(a)), abs(self._py(b) - self._py(d))
            self.elements.append(
                f'<rect x="{px:.2f}" y="{py:.2f}" width="{w:.2f}" height="{h:.2f}" '
                f'fill="#{r:02x}{g:02x}{bl:02x}"/>'
            )

    def _axes(self) -> list[str]:
        l, r, t, b = self.margin
        x0, y0 = l, self.height - b
        x1, y1 = self.width - r, t
        out = [
            f'<rect x="{x0}" y="{y1}" width="{x1 - x0}" height="{y0 - y1}" '
            f'fill="none" stroke="#333333" stroke-width="1"/>'
        ]
        for tick in _nice_ticks(*self.xlim):
            px = self._px(tick)
            if not (x0 - 0.5 <= px <= x1 + 0.5):
                continue
            out.append(
                f'<line x1="{px:.2f}" y1="{y0}" x2="{px:.2f}" y2="{y0 + 4}" stroke="#333333"/>'
            )
            out.append(
                f'<text x="{px:.2f}" y="{y0 + 16}" font-size="11" text-anchor="middle" '
                f'fill="#333333">{tick:g}</text>'
            )
        for tick in _nice_ticks(*self.ylim):
            py = self._py(tick)
            if not (y1 - 0.5 <= py <= y0 + 0.5):
                continue
            out.append(
                f'<line x1="{x0 - 4}" y1="{py:.2f}" x2="{x0}" y2="{py:.2f}" stroke="#333333"/>'
            )
            out.append(
                f'<text x="{x0 - 7}" y="{py + 4:.2f}" font-size="11" text-anchor="end" '
                f'fill="#333333">{tick:g}</text>'
            )
        if self.title:
            out.append(
                f'<text x="{(x0 + x1) / 2:.2f}" y="{t - 8}" font-size="13" '
                f'text-anchor="middle" fill="#000000">{escape(self.title)}</text>'
            )
        if self.xlabel:
            out.append(
                f'<text x="{(x0 + x1) / 2:.2f}" y="{self.height - 10}" font-size="12" '
                f'text-anchor="middle" fill="#000000">{escape(self.xlabel)}</text>'
            )
        if self.ylabel:
            out.append(
                f'<text x="14" y="{(y0 + y1) / 2:.2f}" font-size="12" text-anchor="middle" '
                f'transform="rotate(-90 14 {(y0 + y1) / 2:.2f})" '
                f'fill="#000000">{escape(self.ylabel)}</text>'
            )
        return out

    def to_string(self) -> str:
        body = "\n".join(self._axes() + self.elements)
        return (
            '<?xml version="1.0" encoding="UTF-8"?>\n'
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" '
            f'height="{self.height}" viewBox="0 0 {self.width} {self.height}">\n'
            f'<rect width="{self.width}" height="{self.height}" fill="#ffffff"/>\n'
            f"{body}\n</svg>\n"
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_string())
