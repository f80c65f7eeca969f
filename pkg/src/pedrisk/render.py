"""Static SVG snapshots and speed-profile plots from run traces."""

from __future__ import annotations

import math

import numpy as np

SIGMA_LEVELS = (0.2, 1.0, 3.0)
REGION_FILL = {"road": "#cfcfcf", "sidewalk": "#e8e2c8", "crosswalk": "#f7f7f7"}
SCALE = 8.0   # pixels per meter


def _f(x: float) -> str:
    return f"{x:.3f}"


def ellipse_axes(cov, k: float) -> tuple[float, float, float]:
    """Semi-axes and rotation (degrees) of the k-sigma level set of a 2D Gaussian."""
    cov = np.asarray(cov, dtype=float)
    lam, vec = np.linalg.eigh(0.5 * (cov + cov.T))
    lam = np.maximum(lam, 0.0)
    major = vec[:, 1]
    angle = math.degrees(math.atan2(major[1], major[0]))
    return k * math.sqrt(lam[1]), k * math.sqrt(lam[0]), angle


def _polygon(points, fill, stroke="none") -> str:
    pts = " ".join(f"{_f(x)},{_f(y)}" for x, y in points)
    return f'<polygon points="{pts}" fill="{fill}" stroke="{stroke}" stroke-width="0.05"/>'


def _box(x, y, heading, length, width, fill) -> str:
    c, s = math.cos(heading), math.sin(heading)
    hl, hw = length / 2, width / 2
    corners = [(x + c * a - s * b, y + s * a + c * b) for a, b in ((hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw))]
    return _polygon(corners, fill, "#222222")


def render_tick(header: dict, tick: dict, trail: list | None = None, sigmas=SIGMA_LEVELS) -> str:
    """SVG of one tick: regions, ego, obstacles, pedestrians, trails and uncertainty ellipses."""
    sc = header["scenario"]
    xmin, ymin, xmax, ymax = sc["bounds"]
    w, h = (xmax - xmin) * SCALE, (ymax - ymin) * SCALE
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_f(w)}" height="{_f(h)}" '
           f'viewBox="0 0 {_f(w)} {_f(h)}">',
           f'<g transform="translate({_f(-xmin * SCALE)},{_f(ymax * SCALE)}) scale({_f(SCALE)},{_f(-SCALE)})">']
    order = {"road": 0, "sidewalk": 1, "crosswalk": 2}
    for r in sorted(sc["regions"], key=lambda r: order.get(r["kind"], 3)):
        out.append(_polygon(r["polygon"], REGION_FILL.get(r["kind"], "#ffffff")))
    out.append(_polygon(sc["ego"]["goal"], "none", "#2a9d2a"))

    if trail:
        pts = " ".join(f"{_f(t['ego']['x'])},{_f(t['ego']['y'])}" for t in trail)
        out.append(f'<polyline class="trail" points="{pts}" fill="none" stroke="#1f5fbf" stroke-width="0.1"/>')

    path = tick.get("plan", {}).get("path", [])
    if path:
        pts = " ".join(f"{_f(x)},{_f(y)}" for x, y in path)
        out.append(f'<polyline class="plan" points="{pts}" fill="none" stroke="#d08a00" stroke-width="0.08"/>')

    for aid, mx, my, sxx, sxy, syy in tick.get("predictions", {}).get("agents", []):
        for k in sigmas:
            rx, ry, ang = ellipse_axes([[sxx, sxy], [sxy, syy]], k)
            out.append(f'<ellipse class="ue" cx="{_f(mx)}" cy="{_f(my)}" rx="{_f(rx)}" ry="{_f(ry)}" '
                       f'transform="rotate({_f(ang)} {_f(mx)} {_f(my)})" fill="none" stroke="#c03030" '
                       f'stroke-width="0.03" stroke-opacity="0.6"/>')

    for oid, x, y, heading, _ in tick.get("obstacles", []):
        spec = next((o for o in sc["obstacles"] if o["id"] == oid), {})
        out.append(_box(x, y, heading, spec.get("length", 4.5), spec.get("width", 1.8), "#888888"))

    e = tick["ego"]
    out.append(_box(e["x"], e["y"], e["heading"], sc["ego"].get("length", 4.5), sc["ego"].get("width", 1.8),
                    "#1f5fbf"))
    radius = header.get("config", {}).get("spawn", {}).get("radius", 0.25)
    for pid, x, y, _, _, arrived in tick.get("peds", []):
        fill = "#777777" if arrived else "#202020"
        out.append(f'<circle class="ped" cx="{_f(x)}" cy="{_f(y)}" r="{_f(radius)}" fill="{fill}"/>')
    out.append("</g>")
    out.append(f'<text x="4" y="12" font-size="10" font-family="monospace">t={tick["t"]:.1f}s '
               f'v={e["v"]:.2f}m/s R*={tick.get("plan", {}).get("r_star", 0.0):.4f}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_speed_profile(ticks: list, width: float = 480.0, height: float = 200.0) -> str:
    """Line plot of ego speed over time."""
    t = [k["t"] for k in ticks]
    v = [k["ego"]["v"] for k in ticks]
    t_max = max(t) if t and max(t) > 0 else 1.0
    v_max = max(max(v) if v else 0.0, 1.0) * 1.1
    pad = 30.0

    def px(ti, vi):
        return pad + (width - 2 * pad) * ti / t_max, height - pad - (height - 2 * pad) * vi / v_max

    pts = " ".join(f"{_f(a)},{_f(b)}" for a, b in (px(ti, vi) for ti, vi in zip(t, v)))
    x0, y0 = px(0, 0)
    x1, _ = px(t_max, 0)
    _, y1 = px(0, v_max)
    return "\n".join([
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_f(width)}" height="{_f(height)}">',
        f'<line x1="{_f(x0)}" y1="{_f(y0)}" x2="{_f(x1)}" y2="{_f(y0)}" stroke="black"/>',
        f'<line x1="{_f(x0)}" y1="{_f(y0)}" x2="{_f(x0)}" y2="{_f(y1)}" stroke="black"/>',
        f'<text x="{_f(x1 - 40)}" y="{_f(y0 + 20)}" font-size="10">t [s]</text>',
        f'<text x="2" y="{_f(y1 + 10)}" font-size="10">v [m/s]</text>',
        f'<polyline points="{pts}" fill="none" stroke="#1f5fbf" stroke-width="1.5"/>',
        "</svg>",
    ]) + "\n"
