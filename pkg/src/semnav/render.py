"""Minimal static SVG rendering of worlds, trajectories and heatmaps."""

from __future__ import annotations

import math

import numpy as np

_TRAJ_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
                "#17becf", "#8c564b", "#e377c2"]


class SvgCanvas:
    """Accumulates SVG elements in world coordinates (y flipped at write)."""

    def __init__(self, bounds, size: int = 640):
        (self.xmin, self.ymin), (self.xmax, self.ymax) = bounds
        span = max(self.xmax - self.xmin, self.ymax - self.ymin, 1e-9)
        self.scale = size / span
        self.width = (self.xmax - self.xmin) * self.scale
        self.height = (self.ymax - self.ymin) * self.scale
        self.elems = []

    def _pt(self, p):
        return ((p[0] - self.xmin) * self.scale,
                (self.ymax - p[1]) * self.scale)

    def polygon(self, verts, fill="none", stroke="#000", width=1.5, opacity=1.0):
        pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in map(self._pt, verts))
        self.elems.append(
            f'<polygon points="{pts}" fill="{fill}" stroke="{stroke}" '
            f'stroke-width="{width}" fill-opacity="{opacity}"/>')

    def polyline(self, pts, stroke="#1f77b4", width=1.5):
        s = " ".join(f"{x:.2f},{y:.2f}" for x, y in map(self._pt, pts))
        self.elems.append(
            f'<polyline points="{s}" fill="none" stroke="{stroke}" '
            f'stroke-width="{width}"/>')

    def circle(self, center, r, fill="#000", stroke="none"):
        cx, cy = self._pt(center)
        self.elems.append(
            f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="{r * self.scale:.2f}" '
            f'fill="{fill}" stroke="{stroke}"/>')

    def rect(self, lo, hi, fill):
        x0, y0 = self._pt((lo[0], hi[1]))
        x1, y1 = self._pt((hi[0], lo[1]))
        self.elems.append(
            f'<rect x="{x0:.2f}" y="{y0:.2f}" width="{x1 - x0:.2f}" '
            f'height="{y1 - y0:.2f}" fill="{fill}" stroke="none"/>')

    def write(self, path):
        with open(path, "w") as f:
            f.write(f'<svg xmlns="http://www.w3.org/2000/svg" '
                    f'width="{self.width:.0f}" height="{self.height:.0f}" '
                    f'viewBox="0 0 {self.width:.0f} {self.height:.0f}">\n')
            f.write('<rect width="100%" height="100%" fill="#ffffff"/>\n')
            f.write("\n".join(self.elems))
            f.write("\n</svg>\n")


def render_world(scen, trajectories=(), path="world.svg"):
    """World overview with familiar/unknown obstacles and trajectory overlays."""
    v = scen.workspace.vertices
    pad = 0.05 * max(np.ptp(v[:, 0]), np.ptp(v[:, 1]))
    canvas = SvgCanvas(((v[:, 0].min() - pad, v[:, 1].min() - pad),
                        (v[:, 0].max() + pad, v[:, 1].max() + pad)))
    canvas.polygon(scen.workspace.vertices, stroke="#000", width=2.0)
    canvas.polygon(scen.enclosing_freespace.vertices, stroke="#999", width=1.0)
    for p in scen.familiar_polys:
        canvas.polygon(p.vertices, fill="#7f7f7f", stroke="#444", opacity=0.7)
    for p in scen.unknown_obstacles:
        canvas.polygon(p.vertices, fill="#d62728", stroke="#7a1414", opacity=0.7)
    for i, traj in enumerate(trajectories):
        pos = traj.positions
        if len(pos) >= 2:
            canvas.polyline(pos, stroke=_TRAJ_COLORS[i % len(_TRAJ_COLORS)])
        if len(pos):
            canvas.circle(pos[0], 0.04, fill=_TRAJ_COLORS[i % len(_TRAJ_COLORS)])
    canvas.circle(scen.goal, 0.06, fill="#2ca02c")
    canvas.write(path)


def _heat_color(t: float) -> str:
    """Blue (low) to white to red (high) for t in [0, 1]."""
    t = min(max(t, 0.0), 1.0)
    if t < 0.5:
        f = t / 0.5
        r, g, b = int(255 * f), int(255 * f), 255
    else:
        f = (t - 0.5) / 0.5
        r, g, b = 255, int(255 * (1 - f)), int(255 * (1 - f))
    return f"#{r:02x}{g:02x}{b:02x}"


def render_heatmap(rows, n: int, bounds, path="heatmap.svg"):
    """log det(D_x Phi) heatmap from grid_eval rows; off-domain cells black."""
    (xmin, ymin), (xmax, ymax) = bounds
    vals = np.array([r[2] for r in rows])
    finite = vals[np.isfinite(vals) & (vals > 0)]
    logs = np.log10(finite) if len(finite) else np.array([0.0])
    lo, hi = float(logs.min()), float(logs.max())
    span = max(hi - lo, 1e-12)
    canvas = SvgCanvas(bounds)
    dx = (xmax - xmin) / (n - 1) if n > 1 else xmax - xmin
    dy = (ymax - ymin) / (n - 1) if n > 1 else ymax - ymin
    for x, y, det, *_ in rows:
        if math.isfinite(det) and det > 0:
            color = _heat_color((math.log10(det) - lo) / span)
        else:
            color = "#000000"
        canvas.rect((x - dx / 2, y - dy / 2), (x + dx / 2, y + dy / 2), color)
    canvas.write(path)
