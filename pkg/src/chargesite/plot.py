"""Static SVG figures: station maps and metric-versus-m curves.

Output is plain text built with fixed number formatting, so identical input
always yields byte-identical files.
"""

from __future__ import annotations

import math
from typing import Mapping, Sequence
from xml.sax.saxutils import escape

WIDTH, HEIGHT = 640, 560
MARGIN = 60

# marker style per station layer
LAYER_STYLE = {
    "pmedian": {"shape": "star", "fill": "#1f4e9c", "label": "P-median"},
    "minmax": {"shape": "dot", "fill": "#d62728", "label": "Min-max"},
}


def _f(x: float) -> str:
    return f"{x:.2f}"


def _star(cx: float, cy: float, r: float) -> str:
    pts = []
    for k in range(10):
        rad = r if k % 2 == 0 else r * 0.45
        ang = -math.pi / 2 + k * math.pi / 5
        pts.append(f"{_f(cx + rad * math.cos(ang))},{_f(cy + rad * math.sin(ang))}")
    return " ".join(pts)


def _header(title: str) -> list[str]:
    return [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.0f}" y="28" text-anchor="middle" font-family="sans-serif" '
        f'font-size="16">{escape(title)}</text>',
    ]


def _nice_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((s * mag for s in (1, 2, 2.5, 5, 10) if s * mag >= raw), default=raw)
    first = math.ceil(lo / step) * step
    ticks = []
    t = first
    while t <= hi + 1e-9 * step:
        ticks.append(round(t, 10))
        t += step
    return ticks


def map_svg(demand: Sequence[tuple[float, float]],
            layers: Mapping[str, Sequence[tuple[float, float]]],
            extent: tuple[float, float, float, float] | None = None,
            title: str = "Charging station siting") -> str:
    """Scatter demand points (lon, lat) and overlay one marker per station per layer.

    ``extent`` is (lon_min, lon_max, lat_min, lat_max); by default it is fitted
    to the data. Each station marker carries ``class="station <layer>"``.
    """
    pts = list(demand) + [p for ps in layers.values() for p in ps]
    if extent is None:
        if not pts:
            raise ValueError("nothing to plot")
        lons = [p[0] for p in pts]
        lats = [p[1] for p in pts]
        extent = (min(lons), max(lons), min(lats), max(lats))
    lon0, lon1, lat0, lat1 = extent
    if lon1 <= lon0:
        lon0, lon1 = lon0 - 0.01, lon1 + 0.01
    if lat1 <= lat0:
        lat0, lat1 = lat0 - 0.01, lat1 + 0.01
    pw, ph = WIDTH - 2 * MARGIN, HEIGHT - 2 * MARGIN

    def xy(lon, lat):
        return (MARGIN + (lon - lon0) / (lon1 - lon0) * pw,
                HEIGHT - MARGIN - (lat - lat0) / (lat1 - lat0) * ph)

    out = _header(title)
    out.append(f'<rect x="{MARGIN}" y="{MARGIN}" width="{pw}" height="{ph}" fill="none" stroke="#888"/>')
    for t in _nice_ticks(lon0, lon1):
        x, _ = xy(t, lat0)
        out.append(f'<text x="{_f(x)}" y="{HEIGHT - MARGIN + 18}" text-anchor="middle" '
                   f'font-family="sans-serif" font-size="11">{t:.2f}</text>')
    for t in _nice_ticks(lat0, lat1):
        _, y = xy(lon0, t)
        out.append(f'<text x="{MARGIN - 6}" y="{_f(y + 4)}" text-anchor="end" '
                   f'font-family="sans-serif" font-size="11">{t:.2f}</text>')
    out.append('<g class="demand-layer">')
    for lon, lat in demand:
        x, y = xy(lon, lat)
        out.append(f'<circle class="demand" cx="{_f(x)}" cy="{_f(y)}" r="1.2" fill="#999" fill-opacity="0.5"/>')
    out.append("</g>")
    legend_y = MARGIN + 14
    for name, stations in layers.items():
        style = LAYER_STYLE.get(name, {"shape": "dot", "fill": "#2ca02c", "label": name})
        out.append(f'<g class="layer-{escape(name)}">')
        for lon, lat in stations:
            x, y = xy(lon, lat)
            if style["shape"] == "star":
                out.append(f'<polygon class="station {escape(name)}" points="{_star(x, y, 7)}" '
                           f'fill="{style["fill"]}" stroke="black" stroke-width="0.5"/>')
            else:
                out.append(f'<circle class="station {escape(name)}" cx="{_f(x)}" cy="{_f(y)}" r="4.5" '
                           f'fill="{style["fill"]}" stroke="black" stroke-width="0.5"/>')
        out.append("</g>")
        out.append(f'<text x="{WIDTH - MARGIN - 4}" y="{legend_y}" text-anchor="end" font-family="sans-serif" '
                   f'font-size="12" fill="{style["fill"]}">{escape(style["label"])} ({len(stations)})</text>')
        legend_y += 16
    out.append("</svg>")
    return "\n".join(out) + "\n"


def curve_svg(xs: Sequence[float], series: Mapping[str, Sequence[float]],
              xlabel: str = "number of stations m", ylabel: str = "distance (km)",
              title: str = "") -> str:
    """Polyline per series against a shared x axis.

    Raises:
        ValueError: no points to draw.
    """
    if not xs or not series:
        raise ValueError("nothing to plot")
    ys_all = [y for ys in series.values() for y in ys if math.isfinite(y)]
    if not ys_all:
        raise ValueError("no finite values to plot")
    x0, x1 = min(xs), max(xs)
    if x1 == x0:
        x0, x1 = x0 - 1, x1 + 1
    y0, y1 = min(ys_all), max(ys_all)
    pad = (y1 - y0) * 0.08 or max(abs(y1) * 0.05, 0.5)
    y0, y1 = y0 - pad, y1 + pad
    pw, ph = WIDTH - 2 * MARGIN, HEIGHT - 2 * MARGIN

    def xy(x, y):
        return (MARGIN + (x - x0) / (x1 - x0) * pw, HEIGHT - MARGIN - (y - y0) / (y1 - y0) * ph)

    out = _header(title)
    out.append(f'<line x1="{MARGIN}" y1="{HEIGHT - MARGIN}" x2="{WIDTH - MARGIN}" y2="{HEIGHT - MARGIN}" stroke="black"/>')
    out.append(f'<line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{HEIGHT - MARGIN}" stroke="black"/>')
    for t in _nice_ticks(x0, x1):
        x, _ = xy(t, y0)
        out.append(f'<text x="{_f(x)}" y="{HEIGHT - MARGIN + 18}" text-anchor="middle" '
                   f'font-family="sans-serif" font-size="11">{t:g}</text>')
    for t in _nice_ticks(y0, y1):
        _, y = xy(x0, t)
        out.append(f'<line x1="{MARGIN - 4}" y1="{_f(y)}" x2="{MARGIN}" y2="{_f(y)}" stroke="black"/>')
        out.append(f'<text x="{MARGIN - 6}" y="{_f(y + 4)}" text-anchor="end" '
                   f'font-family="sans-serif" font-size="11">{t:g}</text>')
    out.append(f'<text x="{WIDTH / 2:.0f}" y="{HEIGHT - 16}" text-anchor="middle" '
               f'font-family="sans-serif" font-size="13">{escape(xlabel)}</text>')
    out.append(f'<text x="18" y="{HEIGHT / 2:.0f}" text-anchor="middle" font-family="sans-serif" '
               f'font-size="13" transform="rotate(-90 18 {HEIGHT / 2:.0f})">{escape(ylabel)}</text>')
    colors = ("#1f4e9c", "#d62728", "#2ca02c", "#9467bd")
    for k, (name, ys) in enumerate(series.items()):
        color = colors[k % len(colors)]
        pts = [xy(x, y) for x, y in zip(xs, ys) if math.isfinite(y)]
        out.append(f'<polyline class="series {escape(name)}" fill="none" stroke="{color}" stroke-width="2" '
                   f'points="{" ".join(f"{_f(a)},{_f(b)}" for a, b in pts)}"/>')
        for a, b in pts:
            out.append(f'<circle class="point {escape(name)}" cx="{_f(a)}" cy="{_f(b)}" r="2.5" fill="{color}"/>')
        out.append(f'<text x="{WIDTH - MARGIN - 4}" y="{MARGIN + 14 + 16 * k}" text-anchor="end" '
                   f'font-family="sans-serif" font-size="12" fill="{color}">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
