"""Minimal SVG rendering of trajectories, one panel per channel."""

from xml.sax.saxutils import escape

import numpy as np

from .errors import InvalidInputError

PANEL_W = 720
PANEL_H = 90
MARGIN_L = 70
MARGIN_R = 20
GAP = 14
COLORS = ("#1f5fa8", "#c4462b")


def _polyline(values, rate_hz, t_max, lo, hi, y0, color, dashed=False):
    n = len(values)
    if n == 0:
        return ""
    t = np.arange(n) / rate_hz
    xs = MARGIN_L + t / t_max * (PANEL_W - MARGIN_L - MARGIN_R)
    span = hi - lo if hi > lo else 1.0
    ys = y0 + PANEL_H - (np.asarray(values) - lo) / span * PANEL_H
    pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))
    dash = ' stroke-dasharray="4 3"' if dashed else ""
    return f'<polyline fill="none" stroke="{color}" stroke-width="1.2"{dash} points="{pts}"/>'


def render_svg(trajectories, reference=None, labels=("estimate", "reference")):
    """Return SVG text with per-channel panels; ``reference`` trajectories are
    matched by name and drawn dashed underneath."""
    if not trajectories:
        raise InvalidInputError("nothing to plot")
    ref = {t.name: t for t in (reference or [])}
    t_max = max(len(t.values) / t.rate_hz for t in list(trajectories) + list(ref.values()))
    t_max = t_max if t_max > 0 else 1.0
    height = len(trajectories) * (PANEL_H + GAP) + 40
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{PANEL_W}" height="{height}" '
        f'viewBox="0 0 {PANEL_W} {height}" font-family="sans-serif" font-size="11">',
        f'<rect width="{PANEL_W}" height="{height}" fill="white"/>',
    ]
    for i, traj in enumerate(trajectories):
        y0 = 10 + i * (PANEL_H + GAP)
        other = ref.get(traj.name)
        vals = [np.asarray(traj.values, dtype=float)]
        if other is not None:
            vals.append(np.asarray(other.values, dtype=float))
        lo = min(float(v.min()) for v in vals if v.size)
        hi = max(float(v.max()) for v in vals if v.size)
        parts.append(
            f'<rect x="{MARGIN_L}" y="{y0}" width="{PANEL_W - MARGIN_L - MARGIN_R}" '
            f'height="{PANEL_H}" fill="none" stroke="#999"/>'
        )
        parts.append(f'<text x="6" y="{y0 + PANEL_H / 2 + 4:.1f}">{escape(traj.name)}</text>')
        if other is not None:
            parts.append(_polyline(other.values, other.rate_hz, t_max, lo, hi, y0, COLORS[1], dashed=True))
        parts.append(_polyline(traj.values, traj.rate_hz, t_max, lo, hi, y0, COLORS[0]))
    y_axis = 10 + len(trajectories) * (PANEL_H + GAP) + 4
    parts.append(f'<text x="{MARGIN_L}" y="{y_axis}">0 s</text>')
    parts.append(f'<text x="{PANEL_W - MARGIN_R}" y="{y_axis}" text-anchor="end">{t_max:.2f} s</text>')
    legend = f'<text x="{PANEL_W / 2:.0f}" y="{y_axis}" text-anchor="middle">'
    legend += f'<tspan fill="{COLORS[0]}">{escape(labels[0])}</tspan>'
    if ref:
        legend += f' / <tspan fill="{COLORS[1]}">{escape(labels[1])} (dashed)</tspan>'
    parts.append(legend + "</text>")
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
