"""
Planar geometry helpers shared by energy, learning, sampler and scene.

Footprints are oriented rectangles in the floor plane: `length` runs along the
heading (cos yaw, sin yaw), `width` along the perpendicular.
"""

import math
from typing import Sequence, Tuple

import numpy as np
from shapely.geometry import Point, Polygon
from shapely.ops import nearest_points


def wrap_angle(theta: float) -> float:
    """Wrap to [-pi, pi)."""
    wrapped = math.fmod(theta + math.pi, 2.0 * math.pi)
    if wrapped < 0:
        wrapped += 2.0 * math.pi
    wrapped -= math.pi
    # fmod can land exactly on +pi after the shift for inputs like 3*pi - eps
    return -math.pi if wrapped >= math.pi else wrapped


def rotate(vec: Sequence[float], yaw: float) -> Tuple[float, float]:
    c, s = math.cos(yaw), math.sin(yaw)
    return (c * vec[0] - s * vec[1], s * vec[0] + c * vec[1])


def to_local(origin: Sequence[float], yaw: float, point: Sequence[float]) -> Tuple[float, float]:
    """Coordinates of `point` in the frame at `origin` whose x axis is the heading `yaw`."""
    return rotate((point[0] - origin[0], point[1] - origin[1]), -yaw)


def to_world(origin: Sequence[float], yaw: float, local: Sequence[float]) -> Tuple[float, float]:
    dx, dy = rotate(local, yaw)
    return (origin[0] + dx, origin[1] + dy)


def footprint_corners(center: Sequence[float], yaw: float, length: float, width: float) -> np.ndarray:
    hl, hw = 0.5 * length, 0.5 * width
    local = ((hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw))
    return np.array([to_world(center, yaw, p) for p in local])


def footprint_polygon(center: Sequence[float], yaw: float, length: float, width: float) -> Polygon:
    return Polygon(footprint_corners(center, yaw, length, width))


def planar_gap(poly_a: Polygon, poly_b: Polygon) -> float:
    """Shortest distance between two footprints, 0 when they touch or overlap."""
    return float(poly_a.distance(poly_b))


def contains_point(poly: Polygon, xy: Sequence[float]) -> bool:
    return bool(poly.covers(Point(xy[0], xy[1])))


def nearest_interior(poly: Polygon, xy: Sequence[float], inset: float = 1e-6) -> Tuple[float, float]:
    """Closest point of `poly` (shrunk by `inset`) to `xy`."""
    target = poly.buffer(-inset) if poly.area > 0 else poly
    if target.is_empty:
        target = poly
    nearest = nearest_points(target, Point(xy[0], xy[1]))[0]
    return (float(nearest.x), float(nearest.y))


def axis_extent(yaw: float, length: float, width: float) -> Tuple[float, float]:
    """Half extents of the axis-aligned box around a rotated footprint."""
    c, s = abs(math.cos(yaw)), abs(math.sin(yaw))
    return (0.5 * (length * c + width * s), 0.5 * (length * s + width * c))
