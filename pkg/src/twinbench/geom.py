"""Planar geometry helpers: headings, poses, and arc-length polylines."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi


def norm_heading(h: float) -> float:
    """Normalize an angle to (-pi, pi]."""
    h = math.fmod(h, TWO_PI)
    if h > math.pi:
        h -= TWO_PI
    elif h <= -math.pi:
        h += TWO_PI
    return h


@dataclass
class Pose:
    x: float
    y: float
    heading: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError("pose coordinates must be finite")
        self.heading = norm_heading(float(self.heading))

    def distance_to(self, other: "Pose") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)

    def to_dict(self) -> dict:
        return {"x": self.x, "y": self.y, "heading": self.heading}

    @classmethod
    def from_dict(cls, d: dict) -> "Pose":
        return cls(d["x"], d["y"], d.get("heading", 0.0))


class Polyline:
    """Arc-length parameterized polyline (>= 2 points)."""

    def __init__(self, points):
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[0] < 2 or pts.shape[1] != 2:
            raise ValueError("polyline needs >= 2 planar points")
        self.points = pts
        seg = np.diff(pts, axis=0)
        self._seg_len = np.hypot(seg[:, 0], seg[:, 1])
        if np.any(self._seg_len <= 0):
            raise ValueError("polyline has zero-length segment")
        self._cum = np.concatenate([[0.0], np.cumsum(self._seg_len)])
        self.length = float(self._cum[-1])

    def _locate(self, s: float) -> tuple[int, float]:
        s = min(max(s, 0.0), self.length)
        i = int(np.searchsorted(self._cum, s, side="right") - 1)
        i = min(i, len(self._seg_len) - 1)
        return i, (s - self._cum[i]) / self._seg_len[i]

    def point_at(self, s: float) -> tuple[float, float]:
        i, t = self._locate(s)
        p = self.points[i] + t * (self.points[i + 1] - self.points[i])
        return float(p[0]), float(p[1])

    def heading_at(self, s: float) -> float:
        i, _ = self._locate(s)
        d = self.points[i + 1] - self.points[i]
        return math.atan2(d[1], d[0])

    def offset_point_at(self, s: float, lateral: float) -> tuple[float, float]:
        """Point displaced `lateral` meters to the left of travel direction."""
        x, y = self.point_at(s)
        h = self.heading_at(s)
        return x - lateral * math.sin(h), y + lateral * math.cos(h)

    def project(self, x: float, y: float) -> tuple[float, float]:
        """Closest (arc position, signed lateral offset); left of travel is positive."""
        p = np.array([x, y])
        best_s, best_d2, best_lat = 0.0, float("inf"), 0.0
        for i in range(len(self._seg_len)):
            a, b = self.points[i], self.points[i + 1]
            ab = b - a
            t = float(np.dot(p - a, ab) / np.dot(ab, ab))
            t = min(max(t, 0.0), 1.0)
            q = a + t * ab
            d2 = float(np.dot(p - q, p - q))
            if d2 < best_d2:
                best_d2 = d2
                best_s = self._cum[i] + t * self._seg_len[i]
                cross = ab[0] * (p[1] - a[1]) - ab[1] * (p[0] - a[0])
                best_lat = math.copysign(math.sqrt(d2), cross) if d2 > 0 else 0.0
        return float(best_s), float(best_lat)
