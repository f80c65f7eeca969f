"""Planar geometry used by the scenario, pedestrian and planner code.

Points are ``(..., 2)`` float arrays in meters. Polygons are ``(M, 2)`` vertex
arrays without a repeated closing vertex.
"""

from __future__ import annotations

import math

import numpy as np


def as_points(points) -> np.ndarray:
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(1, 2)
    return arr


def signed_area(poly) -> float:
    p = np.asarray(poly, dtype=float)
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def polygon_centroid(poly) -> np.ndarray:
    p = np.asarray(poly, dtype=float)
    x, y = p[:, 0], p[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    a = cross.sum() / 2.0
    if abs(a) < 1e-15:
        return p.mean(axis=0)
    cx = ((x + xn) * cross).sum() / (6.0 * a)
    cy = ((y + yn) * cross).sum() / (6.0 * a)
    return np.array([cx, cy])


def _orient(a, b, c) -> float:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def _on_segment(a, b, c) -> bool:
    return (min(a[0], b[0]) - 1e-12 <= c[0] <= max(a[0], b[0]) + 1e-12
            and min(a[1], b[1]) - 1e-12 <= c[1] <= max(a[1], b[1]) + 1e-12)


def segments_intersect(p1, p2, q1, q2) -> bool:
    """True when closed segments p1p2 and q1q2 share at least one point."""
    d1 = _orient(q1, q2, p1)
    d2 = _orient(q1, q2, p2)
    d3 = _orient(p1, p2, q1)
    d4 = _orient(p1, p2, q2)
    if ((d1 > 0 > d2) or (d1 < 0 < d2)) and ((d3 > 0 > d4) or (d3 < 0 < d4)):
        return True
    if d1 == 0 and _on_segment(q1, q2, p1):
        return True
    if d2 == 0 and _on_segment(q1, q2, p2):
        return True
    if d3 == 0 and _on_segment(p1, p2, q1):
        return True
    if d4 == 0 and _on_segment(p1, p2, q2):
        return True
    return False


def is_simple(poly) -> bool:
    """O(n^2) check that no two non-adjacent edges touch."""
    p = np.asarray(poly, dtype=float)
    n = len(p)
    if n < 3:
        return False
    for i in range(n):
        a1, a2 = p[i], p[(i + 1) % n]
        if np.allclose(a1, a2):
            return False
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or j == (i + 1) % n:
                continue
            if segments_intersect(a1, a2, p[j], p[(j + 1) % n]):
                return False
    return True


def points_in_polygon(points, poly) -> np.ndarray:
    """Even-odd containment test, vectorized over points.

    Points exactly on an edge may land on either side.
    """
    pts = as_points(points)
    p = np.asarray(poly, dtype=float)
    x = pts[:, 0][:, None]
    y = pts[:, 1][:, None]
    x1, y1 = p[:, 0][None, :], p[:, 1][None, :]
    x2, y2 = np.roll(p[:, 0], -1)[None, :], np.roll(p[:, 1], -1)[None, :]
    straddle = (y1 > y) != (y2 > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
    crossings = straddle & (x < xint)
    return (crossings.sum(axis=1) % 2) == 1


def point_in_polygon(point, poly) -> bool:
    return bool(points_in_polygon(point, poly)[0])


def closest_on_segments(points, a, b):
    """Distances and closest points from each point to each segment.

    Returns ``(dist (N, S), closest (N, S, 2), t (N, S))``. Zero-length
    segments degrade to their start point.
    """
    pts = as_points(points)
    a = np.asarray(a, dtype=float).reshape(-1, 2)
    b = np.asarray(b, dtype=float).reshape(-1, 2)
    ab = b - a
    denom = np.einsum("ij,ij->i", ab, ab)
    ap = pts[:, None, :] - a[None, :, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.einsum("nsj,sj->ns", ap, ab) / denom[None, :]
    t = np.where(denom[None, :] > 0, np.clip(t, 0.0, 1.0), 0.0)
    closest = a[None, :, :] + t[..., None] * ab[None, :, :]
    diff = pts[:, None, :] - closest
    dist = np.hypot(diff[..., 0], diff[..., 1])
    return dist, closest, t


def distance_to_polygon(point, poly) -> float:
    """Euclidean distance from a point to a polygon area (0 inside)."""
    p = np.asarray(poly, dtype=float)
    if point_in_polygon(point, p):
        return 0.0
    dist, _, _ = closest_on_segments(point, p, np.roll(p, -1, axis=0))
    return float(dist.min())


def rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def box_corners(center, heading: float, half_length: float, half_width: float) -> np.ndarray:
    local = np.array([[half_length, half_width], [-half_length, half_width],
                      [-half_length, -half_width], [half_length, -half_width]])
    return np.asarray(center, dtype=float) + local @ rotation(heading).T


def box_disc_overlap(center, heading, half_length, half_width, disc_centers, radius) -> np.ndarray:
    """Oriented box versus discs; vectorized over disc centers."""
    pts = as_points(disc_centers) - np.asarray(center, dtype=float)
    c, s = math.cos(heading), math.sin(heading)
    lx = pts[:, 0] * c + pts[:, 1] * s
    ly = -pts[:, 0] * s + pts[:, 1] * c
    dx = np.maximum(np.abs(lx) - half_length, 0.0)
    dy = np.maximum(np.abs(ly) - half_width, 0.0)
    return dx * dx + dy * dy <= np.asarray(radius, dtype=float) ** 2


def boxes_overlap(c1, h1, hl1, hw1, c2, h2, hl2, hw2) -> bool:
    """Separating-axis test for two oriented rectangles."""
    p1 = box_corners(c1, h1, hl1, hw1)
    p2 = box_corners(c2, h2, hl2, hw2)
    for h in (h1, h2):
        for axis in (np.array([math.cos(h), math.sin(h)]), np.array([-math.sin(h), math.cos(h)])):
            a, b = p1 @ axis, p2 @ axis
            if a.max() < b.min() or b.max() < a.min():
                return False
    return True


def wrap_angle(a):
    return (np.asarray(a) + np.pi) % (2 * np.pi) - np.pi


class Polyline:
    """Arc-length parameterized polyline with a smoothed tangent.

    Positions interpolate linearly between vertices. Headings interpolate
    between vertex tangents so Frenet offsets stay continuous across vertices.
    Queries beyond either end extrapolate along the end tangent.
    """

    def __init__(self, points):
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
            raise ValueError("polyline needs at least two 2D points")
        seg = np.diff(pts, axis=0)
        seglen = np.hypot(seg[:, 0], seg[:, 1])
        keep = np.concatenate([[True], seglen > 1e-12])
        pts = pts[keep]
        if len(pts) < 2:
            raise ValueError("polyline has zero length")
        self.points = pts
        seg = np.diff(pts, axis=0)
        self.seglen = np.hypot(seg[:, 0], seg[:, 1])
        self.s = np.concatenate([[0.0], np.cumsum(self.seglen)])
        seg_heading = np.unwrap(np.arctan2(seg[:, 1], seg[:, 0]))
        self.seg_heading = seg_heading
        vh = np.empty(len(pts))
        vh[0] = seg_heading[0]
        vh[-1] = seg_heading[-1]
        vh[1:-1] = 0.5 * (seg_heading[:-1] + seg_heading[1:])
        self.vertex_heading = vh

    @property
    def length(self) -> float:
        return float(self.s[-1])

    def position(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        x = np.interp(s, self.s, self.points[:, 0])
        y = np.interp(s, self.s, self.points[:, 1])
        out = np.stack([x, y], axis=-1)
        before = s < 0
        after = s > self.length
        if np.any(before) or np.any(after):
            h0, h1 = self.seg_heading[0], self.seg_heading[-1]
            d0 = np.array([math.cos(h0), math.sin(h0)])
            d1 = np.array([math.cos(h1), math.sin(h1)])
            out = np.where(before[..., None], self.points[0] + s[..., None] * d0, out)
            out = np.where(after[..., None], self.points[-1] + (s - self.length)[..., None] * d1, out)
        return out

    def heading(self, s) -> np.ndarray:
        return np.interp(np.asarray(s, dtype=float), self.s, self.vertex_heading)

    def curvature(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if len(self.s) == 2:
            return np.zeros_like(s)
        dh = np.diff(self.vertex_heading) / self.seglen
        idx = np.clip(np.searchsorted(self.s, s, side="right") - 1, 0, len(dh) - 1)
        inside = (s >= 0) & (s <= self.length)
        return np.where(inside, dh[idx], 0.0)

    def frenet_to_cartesian(self, s, d):
        """Map (s, d) to Cartesian points; d is positive to the left."""
        s = np.asarray(s, dtype=float)
        d = np.asarray(d, dtype=float)
        base = self.position(s)
        h = self.heading(s)
        normal = np.stack([-np.sin(h), np.cos(h)], axis=-1)
        return base + d[..., None] * normal, h

    def project(self, point) -> tuple[float, float]:
        """Arc length and signed lateral offset of the closest point."""
        p = np.asarray(point, dtype=float).reshape(2)
        dist, closest, t = closest_on_segments(p, self.points[:-1], self.points[1:])
        i = int(np.argmin(dist[0]))
        s = float(self.s[i] + t[0, i] * self.seglen[i])
        seg = self.points[i + 1] - self.points[i]
        rel = p - self.points[i]
        side = seg[0] * rel[1] - seg[1] * rel[0]
        d = float(dist[0, i]) * (1.0 if side >= 0 else -1.0)
        # extrapolated projection beyond the ends
        if i == 0 and t[0, i] == 0.0 or i == len(self.seglen) - 1 and t[0, i] == 1.0:
            h = self.seg_heading[i]
            tangent = np.array([math.cos(h), math.sin(h)])
            anchor = self.points[0] if t[0, i] == 0.0 else self.points[-1]
            base_s = 0.0 if t[0, i] == 0.0 else self.length
            along = float(np.dot(p - anchor, tangent))
            s = base_s + along
            d = float(tangent[0] * (p - anchor)[1] - tangent[1] * (p - anchor)[0])
        return s, d

    def cut(self, s0: float, length: float) -> np.ndarray:
        """Vertices of the sub-polyline covering [s0, s0 + length]."""
        s1 = s0 + length
        inner = self.s[(self.s > s0) & (self.s < s1)]
        ss = np.concatenate([[s0], inner, [s1]]) if length > 0 else np.array([s0])
        return self.position(ss)
