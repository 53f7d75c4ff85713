"""Deterministic SVG rendering of NLH curves and hazard plots.

Output depends only on the inputs: coordinates are printed with fixed
precision and elements are emitted in input order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from xml.sax.saxutils import escape

import numpy as np

from .engine import NlhCurve

__all__ = ["Series", "series_from_curve", "render_svg"]

_DASHES = ["", "6,4", "2,3", "8,3,2,3"]
_COLOURS = ["#1f4e79", "#a23b2a", "#2f6b3a", "#6b4c9a"]


@dataclass(frozen=True)
class Series:
    """A polyline to draw; ``step`` draws a right-continuous staircase."""

    x: np.ndarray
    y: np.ndarray
    label: str
    dashed: bool = False
    step: bool = False


def series_from_curve(curve: NlhCurve, label: str | None = None) -> Series:
    """Points of a curve joined linearly; undefined values break the line."""
    x = curve.times
    y = np.where(curve.defined, curve.nlh, np.nan)
    name = label or f"Type {curve.plot}"
    return Series(x, y, name, dashed=curve.plot == "B")


def _nice_ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / count
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=10 * mag)
    first = math.ceil(lo / step - 1e-9) * step
    ticks = []
    v = first
    while v <= hi + 1e-9 * step:
        ticks.append(round(v, 12) + 0.0)
        v += step
    return ticks


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _label(v: float) -> str:
    return f"{v:g}"


def render_svg(
    series: list,
    band: float | None = 1.96,
    xlabel: str = "time",
    ylabel: str = "NLH",
    title: str | None = None,
    width: int = 640,
    height: int = 400,
) -> str:
    """Draw one or more series with an optional horizontal band at ``+-band``.

    ``series`` may mix :class:`Series` and :class:`NlhCurve` objects.
    """
    if not series:
        raise ValueError("nothing to draw")
    items = [series_from_curve(s) if isinstance(s, NlhCurve) else s for s in series]
    xs = np.concatenate([s.x[np.isfinite(s.x)] for s in items])
    ys = np.concatenate([s.y[np.isfinite(s.y)] for s in items])
    if xs.size == 0:
        raise ValueError("series have no finite points")
    x0, x1 = float(xs.min()), float(xs.max())
    y_pts = [*ys.tolist()] + ([band, -band] if band is not None else [])
    y0, y1 = (min(y_pts), max(y_pts)) if y_pts else (-1.0, 1.0)
    if x1 <= x0:
        x1 = x0 + 1.0
    pad = 0.05 * (y1 - y0) if y1 > y0 else 1.0
    y0, y1 = y0 - pad, y1 + pad

    left, right, top, bottom = 60, 20, 30 if title else 15, 45
    pw, ph = width - left - right, height - top - bottom

    def px(x):
        return left + (x - x0) / (x1 - x0) * pw

    def py(y):
        return top + (y1 - y) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
    ]
    if title:
        out.append(f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" font-size="14">{escape(title)}</text>')
    out.append(f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
    for t in _nice_ticks(x0, x1):
        X = _fmt(px(t))
        out.append(f'<line x1="{X}" y1="{top + ph}" x2="{X}" y2="{top + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{X}" y="{top + ph + 18}" text-anchor="middle" font-size="11">{_label(t)}</text>')
    for t in _nice_ticks(y0, y1):
        Y = _fmt(py(t))
        out.append(f'<line x1="{left - 5}" y1="{Y}" x2="{left}" y2="{Y}" stroke="black"/>')
        out.append(f'<text x="{left - 8}" y="{Y}" text-anchor="end" dominant-baseline="middle" font-size="11">{_label(t)}</text>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{height - 8}" text-anchor="middle" font-size="12">{escape(xlabel)}</text>')
    out.append(
        f'<text x="14" y="{top + ph / 2:.1f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 14 {top + ph / 2:.1f})">{escape(ylabel)}</text>'
    )
    if y0 < 0 < y1:
        out.append(f'<line x1="{left}" y1="{_fmt(py(0))}" x2="{left + pw}" y2="{_fmt(py(0))}" stroke="#999999"/>')
    if band is not None:
        for b in (band, -band):
            Y = _fmt(py(b))
            out.append(f'<line class="band" x1="{left}" y1="{Y}" x2="{left + pw}" y2="{Y}" stroke="#777777" stroke-dasharray="3,3"/>')

    for i, s in enumerate(items):
        # Type B is dashed; further solid series get dotted patterns
        dash = _DASHES[1] if s.dashed else ("" if i < 2 else _DASHES[2 + i % 2])
        colour = _COLOURS[i % len(_COLOURS)]
        style = f' stroke-dasharray="{dash}"' if dash else ""
        for seg_x, seg_y in _segments(s):
            pts = " ".join(f"{_fmt(px(a))},{_fmt(py(b))}" for a, b in zip(seg_x, seg_y))
            out.append(f'<polyline class="series" fill="none" stroke="{colour}" stroke-width="1.5"{style} points="{pts}"/>')
        ly = top + 14 + 16 * i
        lx = left + pw - 110
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 25}" y2="{ly}" stroke="{colour}" stroke-width="1.5"{style}/>')
        out.append(f'<text class="legend" x="{lx + 30}" y="{ly}" dominant-baseline="middle" font-size="11">{escape(s.label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _segments(s: Series):
    x, y = np.asarray(s.x, dtype=float), np.asarray(s.y, dtype=float)
    if s.step:
        # right-continuous staircase: hold each value until the next x
        x = np.repeat(x, 2)[1:]
        y = np.repeat(y, 2)[:-1]
    ok = np.isfinite(x) & np.isfinite(y)
    start = None
    for i, good in enumerate(np.append(ok, False)):
        if good and start is None:
            start = i
        elif not good and start is not None:
            if i - start >= 1:
                yield x[start:i], y[start:i]
            start = None
