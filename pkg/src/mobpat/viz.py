"""Standalone SVG renderings: U-matrix, check-in heat map, flow map, time cube.

Output depends only on the inputs (fixed number formatting, no clocks, no
randomness), so the same call always yields the same bytes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence
from xml.sax.saxutils import escape, quoteattr

import numpy as np

from .ingest import LocationTree
from .matrices import StayInterval

# viridis anchor colours, evenly spaced
_SEQUENTIAL = [
    (68, 1, 84),
    (72, 40, 120),
    (62, 74, 137),
    (49, 104, 142),
    (38, 130, 142),
    (31, 158, 137),
    (53, 183, 121),
    (109, 205, 89),
    (180, 222, 44),
    (253, 231, 37),
]
_DIVERGING = [(59, 76, 192), (141, 176, 254), (221, 221, 221), (244, 154, 123), (180, 4, 38)]
RAMPS = {"sequential": _SEQUENTIAL, "diverging": _DIVERGING}
PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2"]
FONT = "sans-serif"


@dataclass(frozen=True)
class RenderSpec:
    width: int = 640
    height: int = 480
    ramp: str = "sequential"
    margin: int = 40
    legend: bool = True

    def __post_init__(self):
        if self.width < 64 or self.height < 64:
            raise ValueError("width and height must be at least 64 px")
        if self.ramp not in RAMPS:
            raise ValueError(f"ramp must be one of {sorted(RAMPS)}")


def ramp_color(t: float, ramp: str = "sequential") -> str:
    """Colour at position ``t`` in [0, 1] of a piecewise-linear ramp."""
    anchors = RAMPS[ramp]
    t = min(1.0, max(0.0, float(t)))
    pos = t * (len(anchors) - 1)
    i = min(int(pos), len(anchors) - 2)
    f = pos - i
    a, b = anchors[i], anchors[i + 1]
    r, g, bl = (round(a[k] + (b[k] - a[k]) * f) for k in range(3))
    return f"#{r:02x}{g:02x}{bl:02x}"


def normalize(values: np.ndarray) -> np.ndarray:
    """Map to [0, 1] by min-max; a constant array maps to 0."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        return v
    lo, hi = float(v.min()), float(v.max())
    if hi <= lo:
        return np.zeros_like(v)
    return (v - lo) / (hi - lo)


def _f(x: float) -> str:
    s = f"{x:.2f}".rstrip("0").rstrip(".")
    return "0" if s in ("", "-0") else s


class _Svg:
    def __init__(self, width: int, height: int, title: str):
        self.parts = [
            '<?xml version="1.0" encoding="UTF-8" standalone="no"?>',
            f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}" font-family="{FONT}">',
            f"<title>{escape(title)}</title>",
            f'<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>',
        ]

    def add(self, s: str) -> None:
        self.parts.append(s)

    def text(self, x: float, y: float, s: str, size: int = 10, anchor: str = "middle", extra: str = "") -> None:
        self.add(
            f'<text x="{_f(x)}" y="{_f(y)}" font-size="{size}" text-anchor="{anchor}"{extra}>{escape(str(s))}</text>'
        )

    def render(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def _legend(svg: _Svg, spec: RenderSpec, lo: float, hi: float, label: str) -> None:
    x0 = spec.width - spec.margin + 8
    y0 = spec.margin
    h = spec.height - 2 * spec.margin
    steps = 20
    for k in range(steps):
        t = 1 - k / (steps - 1)
        svg.add(
            f'<rect class="legend" x="{_f(x0)}" y="{_f(y0 + k * h / steps)}" width="10" '
            f'height="{_f(h / steps + 0.5)}" fill="{ramp_color(t, spec.ramp)}"/>'
        )
    svg.text(x0 + 5, y0 - 4, _f(hi), 8)
    svg.text(x0 + 5, y0 + h + 10, _f(lo), 8)
    svg.text(x0 + 5, y0 + h + 20, label, 8)


def _grid(
    svg: _Svg,
    values: np.ndarray,
    spec: RenderSpec,
    labels: np.ndarray | None = None,
    outlined: set | None = None,
    cls: str = "cell",
) -> None:
    rows, cols = values.shape
    right = spec.margin + (30 if spec.legend else 0)
    cw = (spec.width - spec.margin - right) / cols
    ch = (spec.height - 2 * spec.margin) / rows
    norm = normalize(values)
    for r in range(rows):
        for c in range(cols):
            x = spec.margin + c * cw
            y = spec.margin + r * ch
            fill = ramp_color(norm[r, c], spec.ramp)
            svg.add(
                f'<rect class="{cls}" data-row="{r}" data-col="{c}" x="{_f(x)}" y="{_f(y)}" '
                f'width="{_f(cw)}" height="{_f(ch)}" fill="{fill}"/>'
            )
            if labels is not None and labels[r, c]:
                colour = "#000000" if norm[r, c] > 0.6 else "#ffffff"
                svg.text(x + cw / 2, y + ch / 2 + 3, int(labels[r, c]), 9, extra=f' fill="{colour}"')
    for r, c in sorted(outlined or ()):
        svg.add(
            f'<rect class="flag" data-row="{r}" data-col="{c}" x="{_f(spec.margin + c * cw + 1)}" '
            f'y="{_f(spec.margin + r * ch + 1)}" width="{_f(cw - 2)}" height="{_f(ch - 2)}" '
            f'fill="none" stroke="#ff0000" stroke-width="2"/>'
        )


def render_umatrix(
    u: np.ndarray,
    hits: np.ndarray | None = None,
    flags: Sequence = (),
    spec: RenderSpec = RenderSpec(),
) -> str:
    """Heat-mapped U-matrix; hit counts as labels, flagged nodes outlined in red.

    ``flags`` holds ``(row, col)`` pairs or ``detect_outstanding`` tuples.
    """
    u = np.atleast_2d(np.asarray(u, dtype=np.float64))
    if u.size == 0:
        raise ValueError("empty U-matrix")
    cells = set()
    for f in flags:
        rc = f[1] if len(f) == 3 else f
        cells.add((int(rc[0]), int(rc[1])))
    svg = _Svg(spec.width, spec.height, "U-matrix")
    _grid(svg, u, spec, None if hits is None else np.asarray(hits), cells)
    if spec.legend:
        _legend(svg, spec, float(u.min()), float(u.max()), "U")
    return svg.render()


def render_heatmap(
    m: np.ndarray,
    spec: RenderSpec = RenderSpec(),
    row_labels: Sequence[str] | None = None,
    col_labels: Sequence[str] | None = None,
    title: str = "heat map",
) -> str:
    """Object x location heat map of counts or seconds."""
    m = np.atleast_2d(np.asarray(m, dtype=np.float64))
    if m.size == 0:
        raise ValueError("empty matrix")
    svg = _Svg(spec.width, spec.height, title)
    _grid(svg, m, spec)
    rows, cols = m.shape
    right = spec.margin + (30 if spec.legend else 0)
    cw = (spec.width - spec.margin - right) / cols
    ch = (spec.height - 2 * spec.margin) / rows
    if row_labels is not None and rows <= 60:
        for r, lab in enumerate(row_labels):
            svg.text(spec.margin - 3, spec.margin + (r + 0.5) * ch + 3, lab, 7, anchor="end")
    if col_labels is not None and cols <= 60:
        for c, lab in enumerate(col_labels):
            svg.text(spec.margin + (c + 0.5) * cw, spec.margin - 4, lab, 7)
    if spec.legend:
        _legend(svg, spec, float(m.min()), float(m.max()), "")
    return svg.render()


def layout(tree: LocationTree, spec: RenderSpec, n: int | None = None) -> dict[int, tuple[float, float]]:
    """Screen positions per location id: scaled coordinates, or a circle in id order."""
    n = len(tree) if n is None else n
    inner_w = spec.width - 2 * spec.margin
    inner_h = spec.height - 2 * spec.margin
    if tree.has_coordinates() and len(tree) >= n:
        xs = np.array([node.x for node in tree.nodes[:n]])
        ys = np.array([node.y for node in tree.nodes[:n]])
        nx = normalize(xs) if xs.max() > xs.min() else np.full(n, 0.5)
        ny = normalize(ys) if ys.max() > ys.min() else np.full(n, 0.5)
        return {
            k + 1: (spec.margin + nx[k] * inner_w, spec.margin + (1 - ny[k]) * inner_h) for k in range(n)
        }
    cx, cy = spec.width / 2, spec.height / 2
    rad = 0.5 * min(inner_w, inner_h)
    return {
        k + 1: (cx + rad * math.cos(2 * math.pi * k / max(n, 1) - math.pi / 2),
                cy + rad * math.sin(2 * math.pi * k / max(n, 1) - math.pi / 2))
        for k in range(n)
    }


MAX_STROKE = 8.0
MIN_STROKE = 0.5


def stroke_width(weight: float, max_weight: float) -> float:
    return max(MIN_STROKE, MAX_STROKE * weight / max_weight) if max_weight > 0 else MIN_STROKE


def render_flowmap(
    flow,
    tree: LocationTree,
    spec: RenderSpec = RenderSpec(),
    title: str | None = None,
) -> str:
    """Locations as circles, transitions as arrows whose width tracks the count."""
    w = np.asarray(flow.weights)
    n = w.shape[0]
    pos = layout(tree, spec, n)
    names = tree.names if len(tree) >= n else [str(k + 1) for k in range(n)]
    svg = _Svg(spec.width, spec.height, title or flow.label or "flow map")
    svg.add(
        '<defs><marker id="arrow" viewBox="0 0 10 10" refX="9" refY="5" markerWidth="4" '
        'markerHeight="4" orient="auto"><path d="M0,0 L10,5 L0,10 z" fill="#1f77b4"/></marker></defs>'
    )
    wmax = float(w.max()) if w.size else 0.0
    edges = [(int(w[a, b]), a + 1, b + 1) for a in range(n) for b in range(n) if w[a, b] > 0]
    edges.sort()  # light edges first so heavy ones draw on top
    radius = 6.0
    for weight, a, b in edges:
        sw = _f(stroke_width(weight, wmax))
        x1, y1 = pos[a]
        x2, y2 = pos[b]
        attrs = f'class="edge" data-from="{a}" data-to="{b}" data-weight="{weight}" stroke="#1f77b4" ' \
                f'stroke-width="{sw}" stroke-opacity="0.8" fill="none" marker-end="url(#arrow)"'
        if a == b:
            d = (f"M{_f(x1 - 4)},{_f(y1 - radius)} C{_f(x1 - 24)},{_f(y1 - 40)} "
                 f"{_f(x1 + 24)},{_f(y1 - 40)} {_f(x1 + 4)},{_f(y1 - radius)}")
            svg.add(f'<path {attrs} d="{d}"><title>{a}-&gt;{b}: {weight}</title></path>')
        else:
            dx, dy = x2 - x1, y2 - y1
            dist = math.hypot(dx, dy) or 1.0
            # bend slightly so a->b and b->a stay apart
            mx, my = (x1 + x2) / 2 - dy * 0.12, (y1 + y2) / 2 + dx * 0.12
            ex, ey = x2 - dx / dist * radius, y2 - dy / dist * radius
            svg.add(
                f'<path {attrs} d="M{_f(x1)},{_f(y1)} Q{_f(mx)},{_f(my)} {_f(ex)},{_f(ey)}">'
                f"<title>{a}-&gt;{b}: {weight}</title></path>"
            )
    for lid in range(1, n + 1):
        x, y = pos[lid]
        svg.add(f'<circle class="node" data-id="{lid}" cx="{_f(x)}" cy="{_f(y)}" r="{_f(radius)}" fill="#d62728"/>')
        svg.text(x, y + radius + 10, names[lid - 1], 8)
    return svg.render()


def trajectory_vertices(stays: Sequence[StayInterval]) -> list[tuple[int, int]]:
    """``(location_id, time)`` vertices of a space-time path.

    Consecutive stays at one location merge; the path visits each stay's
    start and ends at the last stay's end.
    """
    merged: list[list[int]] = []
    for s in sorted(stays, key=lambda s: (s.t_start, s.t_end)):
        if merged and merged[-1][0] == s.location_id:
            merged[-1][2] = max(merged[-1][2], s.t_end)
        else:
            merged.append([s.location_id, s.t_start, s.t_end])
    if not merged:
        return []
    verts = [(m[0], m[1]) for m in merged]
    verts.append((merged[-1][0], merged[-1][2]))
    return verts


ISO_ANGLE = math.radians(30)


def render_timecube(
    stays_by_object: Mapping[str, Sequence[StayInterval]],
    tree: LocationTree,
    spec: RenderSpec = RenderSpec(),
    title: str = "time cube",
) -> str:
    """Isometric space-time cube: ground plane = location coordinates, up = time."""
    svg = _Svg(spec.width, spec.height, title)
    n = len(tree)
    if tree.has_coordinates():
        coords = {node.location_id: (node.x, node.y) for node in tree.nodes}
    else:
        coords = {k + 1: (math.cos(2 * math.pi * k / max(n, 1)), math.sin(2 * math.pi * k / max(n, 1))) for k in range(n)}
    xs = [c[0] for c in coords.values()] or [0.0]
    ys = [c[1] for c in coords.values()] or [0.0]
    x_lo, x_span = min(xs), (max(xs) - min(xs)) or 1.0
    y_lo, y_span = min(ys), (max(ys) - min(ys)) or 1.0
    times = [t for stays in stays_by_object.values() for s in stays for t in (s.t_start, s.t_end)]
    t_lo = min(times) if times else 0
    t_span = (max(times) - t_lo) if times and max(times) > t_lo else 1

    cos_a, sin_a = math.cos(ISO_ANGLE), math.sin(ISO_ANGLE)
    side = 0.42 * min(spec.width, spec.height - 2 * spec.margin)
    height = spec.height - 2 * spec.margin - side
    ox = spec.width / 2
    oy = spec.height - spec.margin - side * sin_a

    def project(u: float, v: float, z: float) -> tuple[float, float]:
        # u, v, z in [0, 1]
        return ox + (u - v) * side * cos_a, oy + (u + v) * side * sin_a - z * height

    corners = [(0, 0), (1, 0), (1, 1), (0, 1)]
    base = " ".join(f"{_f(px)},{_f(py)}" for px, py in (project(u, v, 0) for u, v in corners))
    svg.add(f'<polygon class="floor" points="{base}" fill="#f4f4f4" stroke="#999999" stroke-width="0.5"/>')
    for label, end in (("x", (1, 0, 0)), ("y", (0, 1, 0)), ("time", (0, 0, 1))):
        x0, y0 = project(0, 0, 0)
        x1, y1 = project(*end)
        svg.add(f'<line class="axis" x1="{_f(x0)}" y1="{_f(y0)}" x2="{_f(x1)}" y2="{_f(y1)}" stroke="#333333" stroke-width="1"/>')
        svg.text(x1, y1 - 4, label, 10)
    svg.text(spec.width / 2, spec.margin / 2 + 4, title, 12)

    for k, obj in enumerate(sorted(stays_by_object)):
        verts = trajectory_vertices(stays_by_object[obj])
        if not verts:
            continue
        pts = []
        for lid, t in verts:
            cx, cy = coords.get(lid, (x_lo, y_lo))
            px, py = project((cx - x_lo) / x_span, (cy - y_lo) / y_span, (t - t_lo) / t_span)
            pts.append(f"{_f(px)},{_f(py)}")
        colour = PALETTE[k % len(PALETTE)]
        svg.add(
            f'<polyline class="trajectory" data-object={quoteattr(obj)} points="{" ".join(pts)}" '
            f'fill="none" stroke="{colour}" stroke-width="1.5"/>'
        )
        if spec.legend:
            svg.text(spec.margin, spec.margin + 12 * k, obj, 9, anchor="start", extra=f' fill="{colour}"')
    return svg.render()
