"""Minimal deterministic SVG rendering for radar charts and histograms.

No plotting dependency: output is assembled from formatted strings so
identical inputs always produce identical bytes (golden-file friendly).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _escape(text: str) -> str:
    return (
        text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
    )


def _f(x: float) -> str:
    return f"{x:.2f}"


@dataclass(frozen=True)
class RadarSeries:
    """One polygon: per-axis mean plus confidence band bounds."""

    label: str
    values: tuple[float, ...]
    low: tuple[float, ...]
    high: tuple[float, ...]


def _radar_point(cx: float, cy: float, radius: float, i: int, n: int) -> tuple[float, float]:
    theta = math.radians(-90.0 + 360.0 * i / n)
    return cx + radius * math.cos(theta), cy + radius * math.sin(theta)


def _polygon_points(cx, cy, r, fractions) -> str:
    n = len(fractions)
    pts = [_radar_point(cx, cy, r * max(0.0, min(1.0, f)), i, n) for i, f in enumerate(fractions)]
    return " ".join(f"{_f(x)},{_f(y)}" for x, y in pts)


def radar_chart(
    axes: Sequence[str], series: Sequence[RadarSeries], title: str = ""
) -> str:
    """Radar chart with one polygon and CI band per series, values in [0,1]."""
    if not axes or not series:
        raise ValueError("radar chart needs axes and at least one series")
    for s in series:
        if not len(s.values) == len(s.low) == len(s.high) == len(axes):
            raise ValueError(f"series {s.label}: length does not match axes")
    width, height = 640, 560 + 18 * len(series)
    cx, cy, radius = 320.0, 300.0, 220.0
    n = len(axes)
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    if title:
        out.append(
            f'<text x="{_f(width / 2)}" y="28" text-anchor="middle" '
            f'font-family="sans-serif" font-size="16">{_escape(title)}</text>'
        )
    for ring in (0.2, 0.4, 0.6, 0.8, 1.0):
        out.append(
            f'<polygon points="{_polygon_points(cx, cy, radius, [ring] * n)}" '
            f'fill="none" stroke="#cccccc" stroke-width="1"/>'
        )
        x, y = _radar_point(cx, cy, radius * ring, 0, n)
        out.append(
            f'<text x="{_f(x + 6)}" y="{_f(y + 4)}" font-family="sans-serif" '
            f'font-size="10" fill="#888888">{_f(ring)}</text>'
        )
    for i, name in enumerate(axes):
        x, y = _radar_point(cx, cy, radius, i, n)
        out.append(
            f'<line x1="{_f(cx)}" y1="{_f(cy)}" x2="{_f(x)}" y2="{_f(y)}" '
            f'stroke="#cccccc" stroke-width="1"/>'
        )
        lx, ly = _radar_point(cx, cy, radius + 22, i, n)
        out.append(
            f'<text x="{_f(lx)}" y="{_f(ly + 4)}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="13">{_escape(name)}</text>'
        )
    for idx, s in enumerate(series):
        color = PALETTE[idx % len(PALETTE)]
        band = (
            f'<path d="M {_polygon_points(cx, cy, radius, s.high).replace(" ", " L ")} Z '
            f'M {_polygon_points(cx, cy, radius, s.low).replace(" ", " L ")} Z" '
            f'fill="{color}" fill-opacity="0.15" fill-rule="evenodd" stroke="none"/>'
        )
        out.append(band)
        out.append(
            f'<polygon points="{_polygon_points(cx, cy, radius, s.values)}" '
            f'fill="{color}" fill-opacity="0.08" stroke="{color}" stroke-width="2"/>'
        )
        for i, v in enumerate(s.values):
            x, y = _radar_point(cx, cy, radius * max(0.0, min(1.0, v)), i, n)
            out.append(f'<circle cx="{_f(x)}" cy="{_f(y)}" r="2.5" fill="{color}"/>')
        ly = 556 + 18 * idx
        out.append(f'<rect x="40" y="{ly}" width="12" height="12" fill="{color}"/>')
        out.append(
            f'<text x="58" y="{ly + 10}" font-family="sans-serif" '
            f'font-size="12">{_escape(s.label)}</text>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"


@dataclass(frozen=True)
class HistogramSeries:
    label: str
    counts: tuple[int, ...]


def log_histogram(
    edges: Sequence[float],
    series: Sequence[HistogramSeries],
    title: str = "",
    x_label: str = "volume (mm^3)",
) -> str:
    """Grouped bars over log10-spaced bin edges."""
    if len(edges) < 2 or not series:
        raise ValueError("histogram needs at least one bin and one series")
    n_bins = len(edges) - 1
    for s in series:
        if len(s.counts) != n_bins:
            raise ValueError(f"series {s.label}: expected {n_bins} counts")
    width, height = 640, 420
    left, right, top, bottom = 64.0, 24.0, 48.0, 72.0
    plot_w = width - left - right
    plot_h = height - top - bottom
    lo = math.log10(edges[0])
    hi = math.log10(edges[-1])
    span = hi - lo if hi > lo else 1.0

    def x_of(v: float) -> float:
        return left + (math.log10(v) - lo) / span * plot_w

    max_count = max(max(s.counts) for s in series) or 1
    y_step = max(1, int(math.ceil(max_count / 5)))
    y_top = y_step * 5

    def y_of(c: float) -> float:
        return top + plot_h * (1.0 - c / y_top)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    if title:
        out.append(
            f'<text x="{_f(width / 2)}" y="26" text-anchor="middle" '
            f'font-family="sans-serif" font-size="15">{_escape(title)}</text>'
        )
    for level in range(0, y_top + 1, y_step):
        y = y_of(level)
        out.append(
            f'<line x1="{_f(left)}" y1="{_f(y)}" x2="{_f(width - right)}" y2="{_f(y)}" '
            f'stroke="#dddddd" stroke-width="1"/>'
        )
        out.append(
            f'<text x="{_f(left - 8)}" y="{_f(y + 4)}" text-anchor="end" '
            f'font-family="sans-serif" font-size="11">{level}</text>'
        )
    decade = math.ceil(lo)
    while decade <= hi + 1e-9:
        x = x_of(10.0**decade)
        out.append(
            f'<line x1="{_f(x)}" y1="{_f(top)}" x2="{_f(x)}" y2="{_f(top + plot_h)}" '
            f'stroke="#eeeeee" stroke-width="1"/>'
        )
        out.append(
            f'<text x="{_f(x)}" y="{_f(top + plot_h + 18)}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">10^{decade}</text>'
        )
        decade += 1
    n_series = len(series)
    for b in range(n_bins):
        x0 = x_of(edges[b])
        x1 = x_of(edges[b + 1])
        slot = (x1 - x0) / n_series
        for si, s in enumerate(series):
            if s.counts[b] == 0:
                continue
            color = PALETTE[si % len(PALETTE)]
            bx = x0 + si * slot
            by = y_of(s.counts[b])
            out.append(
                f'<rect x="{_f(bx + 1)}" y="{_f(by)}" width="{_f(max(slot - 2, 1))}" '
                f'height="{_f(top + plot_h - by)}" fill="{color}" fill-opacity="0.8"/>'
            )
    out.append(
        f'<line x1="{_f(left)}" y1="{_f(top + plot_h)}" x2="{_f(width - right)}" '
        f'y2="{_f(top + plot_h)}" stroke="#333333" stroke-width="1"/>'
    )
    out.append(
        f'<text x="{_f(left + plot_w / 2)}" y="{_f(height - 34)}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12">{_escape(x_label)}</text>'
    )
    for si, s in enumerate(series):
        color = PALETTE[si % len(PALETTE)]
        lx = left + 140.0 * si
        ly = height - 16
        out.append(f'<rect x="{_f(lx)}" y="{ly - 10}" width="12" height="12" fill="{color}"/>')
        out.append(
            f'<text x="{_f(lx + 18)}" y="{ly}" font-family="sans-serif" '
            f'font-size="12">{_escape(s.label)}</text>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"
