"""Hand-rolled deterministic SVG output for 2-D trajectory plots.

No plotting library: element ordering, float formatting, and colors are all
fixed here so identical inputs produce byte-identical files.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
WIDTH, HEIGHT, PAD = 640.0, 480.0, 48.0


@dataclass(frozen=True)
class Curve:
    points: np.ndarray            # (n, 2) data coordinates
    color: str
    dashed: bool = False
    width: float = 1.5


@dataclass(frozen=True)
class Marker:
    center: np.ndarray            # (2,) data coordinates
    radius: float                 # data units
    color: str
    label: str = ""


def _fmt(x: float) -> str:
    return f"{x:.3f}"


def _bbox(curves, markers):
    xs, ys = [], []
    for c in curves:
        pts = np.asarray(c.points, dtype=float)
        if pts.size:
            xs += [pts[:, 0].min(), pts[:, 0].max()]
            ys += [pts[:, 1].min(), pts[:, 1].max()]
    for m in markers:
        xs += [m.center[0] - m.radius, m.center[0] + m.radius]
        ys += [m.center[1] - m.radius, m.center[1] + m.radius]
    if not xs:
        return -1.0, 1.0, -1.0, 1.0
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(ys), max(ys)
    dx = max(x_hi - x_lo, 1e-9)
    dy = max(y_hi - y_lo, 1e-9)
    return x_lo - 0.05 * dx, x_hi + 0.05 * dx, y_lo - 0.05 * dy, y_hi + 0.05 * dy


def trajectory_svg(curves: list[Curve], markers: list[Marker] = (), title: str = "") -> str:
    """Render trajectories (solid or dashed polylines) plus circular markers
    into a standalone SVG document string."""
    x_lo, x_hi, y_lo, y_hi = _bbox(curves, markers)
    sx = (WIDTH - 2 * PAD) / (x_hi - x_lo)
    sy = (HEIGHT - 2 * PAD) / (y_hi - y_lo)

    def to_px(p):
        return (PAD + (p[0] - x_lo) * sx, HEIGHT - PAD - (p[1] - y_lo) * sy)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{int(WIDTH)}" height="{int(HEIGHT)}" '
        f'viewBox="0 0 {int(WIDTH)} {int(HEIGHT)}">',
        f'<rect x="0" y="0" width="{int(WIDTH)}" height="{int(HEIGHT)}" fill="#ffffff"/>',
        f'<rect x="{_fmt(PAD)}" y="{_fmt(PAD)}" width="{_fmt(WIDTH - 2 * PAD)}" '
        f'height="{_fmt(HEIGHT - 2 * PAD)}" fill="none" stroke="#999999" stroke-width="1"/>',
    ]
    for lbl, (x, y), anchor in (
        (f"({x_lo:.2f}, {y_lo:.2f})", (PAD, HEIGHT - PAD + 16.0), "start"),
        (f"({x_hi:.2f}, {y_hi:.2f})", (WIDTH - PAD, PAD - 6.0), "end"),
    ):
        parts.append(
            f'<text x="{_fmt(x)}" y="{_fmt(y)}" font-family="monospace" font-size="11" '
            f'fill="#666666" text-anchor="{anchor}">{lbl}</text>'
        )
    if title:
        parts.append(
            f'<text x="{_fmt(WIDTH / 2)}" y="{_fmt(PAD - 20.0)}" font-family="monospace" '
            f'font-size="13" fill="#222222" text-anchor="middle">{title}</text>'
        )
    for m in markers:
        cx, cy = to_px(m.center)
        for r_data, opacity in ((m.radius, "0.9"), (2.0 * m.radius, "0.4")):
            parts.append(
                f'<circle cx="{_fmt(cx)}" cy="{_fmt(cy)}" r="{_fmt(r_data * sx)}" fill="none" '
                f'stroke="{m.color}" stroke-width="1" stroke-opacity="{opacity}"/>'
            )
        parts.append(
            f'<circle cx="{_fmt(cx)}" cy="{_fmt(cy)}" r="2.5" fill="{m.color}"/>'
        )
        if m.label:
            parts.append(
                f'<text x="{_fmt(cx + 6.0)}" y="{_fmt(cy - 6.0)}" font-family="monospace" '
                f'font-size="11" fill="{m.color}">{m.label}</text>'
            )
    for c in curves:
        pts = np.asarray(c.points, dtype=float)
        if pts.shape[0] == 0:
            continue
        coords = " ".join(f"{_fmt(px)},{_fmt(py)}" for px, py in (to_px(p) for p in pts))
        dash = ' stroke-dasharray="6,4"' if c.dashed else ""
        parts.append(
            f'<polyline points="{coords}" fill="none" stroke="{c.color}" '
            f'stroke-width="{_fmt(c.width)}"{dash}/>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def max_chord_deviation(points: np.ndarray) -> float:
    """Largest distance of interior vertices from the straight chord joining
    the polyline endpoints, as a fraction of the chord length."""
    pts = np.asarray(points, dtype=float)
    if pts.shape[0] < 3:
        return 0.0
    a, b = pts[0], pts[-1]
    chord = b - a
    length = float(np.linalg.norm(chord))
    if length == 0.0:
        return float(np.max(np.linalg.norm(pts - a, axis=1)))
    unit = chord / length
    rel = pts[1:-1] - a
    along = rel @ unit
    perp = rel - np.outer(along, unit)
    return float(np.max(np.linalg.norm(perp, axis=1))) / length
