"""T-intersection geometry: routes, arc-length parametrization, conflicts.

Coordinate frame: origin at the intersection centre.  The horizontal street
runs along x (eastbound lane centre at y = -w/2, westbound at y = +w/2); the
minor stem joins from the south along y (northbound approach at x = +w/2,
southbound exit at x = -w/2), with lane width w.  The paved intersection box
is the square |x|, |y| <= w.

Every route is a chain of line and circular-arc segments parametrized by arc
length, so a participant's physical state needs only (route, position,
velocity).  Collision checks and driver rules work on the Cartesian poses
recovered from the arc length.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "LineSegment",
    "ArcSegment",
    "Route",
    "Layout",
    "build_layout",
    "route_crossings",
    "rectangles_overlap",
    "rectangle_circle_overlap",
]


@dataclass(frozen=True)
class LineSegment:
    start: tuple[float, float]
    end: tuple[float, float]

    @property
    def length(self) -> float:
        return math.hypot(self.end[0] - self.start[0], self.end[1] - self.start[1])

    def point(self, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        t = s / self.length
        x = self.start[0] + t * (self.end[0] - self.start[0])
        y = self.start[1] + t * (self.end[1] - self.start[1])
        return x, y

    def heading(self, s: np.ndarray) -> np.ndarray:
        h = math.atan2(self.end[1] - self.start[1], self.end[0] - self.start[0])
        return np.broadcast_to(h, np.shape(s)).copy()


@dataclass(frozen=True)
class ArcSegment:
    """Circular arc from angle_start to angle_end around centre.

    ``ccw`` selects the travel direction; angles are standard math
    convention, radians.
    """

    center: tuple[float, float]
    radius: float
    angle_start: float
    angle_end: float
    ccw: bool

    @property
    def sweep(self) -> float:
        d = self.angle_end - self.angle_start
        if self.ccw and d < 0:
            d += 2 * math.pi
        if not self.ccw and d > 0:
            d -= 2 * math.pi
        return d

    @property
    def length(self) -> float:
        return abs(self.sweep) * self.radius

    def _angle(self, s: np.ndarray) -> np.ndarray:
        return self.angle_start + np.sign(self.sweep) * s / self.radius

    def point(self, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        a = self._angle(s)
        return (
            self.center[0] + self.radius * np.cos(a),
            self.center[1] + self.radius * np.sin(a),
        )

    def heading(self, s: np.ndarray) -> np.ndarray:
        a = self._angle(s)
        if self.ccw:
            return a + math.pi / 2
        return a - math.pi / 2


class Route:
    """Arc-length parametrized path through the intersection."""

    def __init__(self, name: str, segments: Sequence[LineSegment | ArcSegment]):
        self.name = name
        self.segments = list(segments)
        lengths = [seg.length for seg in self.segments]
        self._cuts = np.concatenate([[0.0], np.cumsum(lengths)])
        self.length = float(self._cuts[-1])

    def _locate(self, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        s = np.clip(np.asarray(s, dtype=float), 0.0, self.length)
        seg = np.clip(np.searchsorted(self._cuts, s, side="right") - 1, 0, len(self.segments) - 1)
        return seg, s - self._cuts[seg]

    def point_at(self, s) -> np.ndarray:
        """(x, y) at arc length ``s`` (scalar or array), clamped to the route."""
        s_arr = np.atleast_1d(np.asarray(s, dtype=float))
        seg_idx, local = self._locate(s_arr)
        x = np.empty_like(s_arr)
        y = np.empty_like(s_arr)
        for i, seg in enumerate(self.segments):
            mask = seg_idx == i
            if mask.any():
                x[mask], y[mask] = seg.point(local[mask])
        out = np.stack([x, y], axis=-1)
        return out[0] if np.isscalar(s) or np.ndim(s) == 0 else out

    def heading_at(self, s) -> np.ndarray:
        s_arr = np.atleast_1d(np.asarray(s, dtype=float))
        seg_idx, local = self._locate(s_arr)
        h = np.empty_like(s_arr)
        for i, seg in enumerate(self.segments):
            mask = seg_idx == i
            if mask.any():
                h[mask] = seg.heading(local[mask])
        return h[0] if np.isscalar(s) or np.ndim(s) == 0 else h

    def polyline(self, step: float = 0.25) -> tuple[np.ndarray, np.ndarray]:
        """(arcs, points) sampled every ``step`` metres, endpoint included."""
        n = max(int(math.ceil(self.length / step)), 1)
        arcs = np.linspace(0.0, self.length, n + 1)
        return arcs, self.point_at(arcs)

    def project(self, x: float, y: float, step: float = 0.25) -> tuple[float, float]:
        """(arc length, lateral distance) of the closest point on the route."""
        arcs, pts = self._projection_cache(step)
        a = pts[:-1]
        d = pts[1:] - a
        seg_len2 = np.einsum("ij,ij->i", d, d)
        q = np.array([x, y])
        t = np.clip(np.einsum("ij,ij->i", q - a, d) / seg_len2, 0.0, 1.0)
        closest = a + t[:, None] * d
        dist2 = np.einsum("ij,ij->i", q - closest, q - closest)
        k = int(np.argmin(dist2))
        arc = arcs[k] + t[k] * (arcs[k + 1] - arcs[k])
        return float(arc), float(math.sqrt(dist2[k]))

    def _projection_cache(self, step: float):
        cached = getattr(self, "_proj_cache", None)
        if cached is None or cached[2] != step:
            arcs, pts = self.polyline(step)
            self._proj_cache = (arcs, pts, step)
            cached = self._proj_cache
        return cached[0], cached[1]


def _segment_intersections(pa: np.ndarray, pb: np.ndarray) -> list[tuple[int, float, int, float]]:
    """All transversal intersections between two polylines.

    Returns (segment index in a, param t, segment index in b, param u).
    Parallel overlaps (merging lanes) are intentionally not reported.
    """
    a0, a1 = pa[:-1], pa[1:]
    b0, b1 = pb[:-1], pb[1:]
    r = a1 - a0
    s = b1 - b0
    # cross products over the full NxM pair grid
    rxs = r[:, None, 0] * s[None, :, 1] - r[:, None, 1] * s[None, :, 0]
    qp = b0[None, :, :] - a0[:, None, :]
    qpxs = qp[..., 0] * s[None, :, 1] - qp[..., 1] * s[None, :, 0]
    qpxr = qp[..., 0] * r[:, None, 1] - qp[..., 1] * r[:, None, 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = qpxs / rxs
        u = qpxr / rxs
    hits = (np.abs(rxs) > 1e-12) & (t >= 0.0) & (t <= 1.0) & (u >= 0.0) & (u <= 1.0)
    out = []
    for i, j in zip(*np.nonzero(hits)):
        out.append((int(i), float(t[i, j]), int(j), float(u[i, j])))
    return out


def route_crossings(ra: Route, rb: Route, step: float = 0.25, merge_within: float = 1.0) -> list[tuple[float, float]]:
    """Arc-length pairs where two routes cross transversally.

    Nearby raw intersections (within ``merge_within`` metres on route a) are
    merged; results are sorted by the arc on route a.
    """
    arcs_a, pa = ra.polyline(step)
    arcs_b, pb = rb.polyline(step)
    raw = []
    for i, t, j, u in _segment_intersections(pa, pb):
        sa = arcs_a[i] + t * (arcs_a[i + 1] - arcs_a[i])
        sb = arcs_b[j] + u * (arcs_b[j + 1] - arcs_b[j])
        raw.append((sa, sb))
    raw.sort()
    merged: list[tuple[float, float]] = []
    for sa, sb in raw:
        if merged and abs(sa - merged[-1][0]) < merge_within:
            continue
        merged.append((sa, sb))
    return merged


# -- footprint overlap -------------------------------------------------------


def rectangles_overlap(
    c1: np.ndarray, h1: np.ndarray, half1: tuple[float, float],
    c2: np.ndarray, h2: np.ndarray, half2: tuple[float, float],
) -> np.ndarray:
    """Separating-axis test between oriented rectangles (vectorized).

    ``c`` are (..., 2) centres, ``h`` headings in radians, ``half`` the
    (half-length, half-width) extents.  Touching boundaries do not count as
    overlap.
    """
    c1 = np.asarray(c1, dtype=float)
    c2 = np.asarray(c2, dtype=float)
    h1 = np.asarray(h1, dtype=float)
    h2 = np.asarray(h2, dtype=float)
    d = c2 - c1
    u1 = np.stack([np.cos(h1), np.sin(h1)], axis=-1)
    v1 = np.stack([-np.sin(h1), np.cos(h1)], axis=-1)
    u2 = np.stack([np.cos(h2), np.sin(h2)], axis=-1)
    v2 = np.stack([-np.sin(h2), np.cos(h2)], axis=-1)

    overlap = None
    for axis in (u1, v1, u2, v2):
        proj_d = np.abs(np.einsum("...i,...i->...", d, axis))
        ext1 = half1[0] * np.abs(np.einsum("...i,...i->...", u1, axis)) + half1[1] * np.abs(
            np.einsum("...i,...i->...", v1, axis)
        )
        ext2 = half2[0] * np.abs(np.einsum("...i,...i->...", u2, axis)) + half2[1] * np.abs(
            np.einsum("...i,...i->...", v2, axis)
        )
        sep = proj_d < ext1 + ext2
        overlap = sep if overlap is None else (overlap & sep)
    return overlap


def rectangle_circle_overlap(
    c_rect: np.ndarray, h: np.ndarray, half: tuple[float, float],
    c_circ: np.ndarray, radius: float,
) -> np.ndarray:
    """Oriented rectangle vs disc overlap (vectorized)."""
    c_rect = np.asarray(c_rect, dtype=float)
    c_circ = np.asarray(c_circ, dtype=float)
    h = np.asarray(h, dtype=float)
    d = c_circ - c_rect
    cos_h, sin_h = np.cos(h), np.sin(h)
    local_x = d[..., 0] * cos_h + d[..., 1] * sin_h
    local_y = -d[..., 0] * sin_h + d[..., 1] * cos_h
    dx = np.maximum(np.abs(local_x) - half[0], 0.0)
    dy = np.maximum(np.abs(local_y) - half[1], 0.0)
    return dx * dx + dy * dy < radius * radius


# -- the concrete T intersection ---------------------------------------------

EGO_ROUTE = "ego-left-turn"
CAR_ROUTES = (
    "straight-from-left",
    "straight-from-right",
    "turn-right-from-left",
    "turn-left-from-right",
)
PED_ROUTES = ("crosswalk-south", "crosswalk-west", "crosswalk-east")


class Layout:
    """Routes plus precomputed conflict data for the rule-based drivers."""

    def __init__(
        self,
        routes: dict[str, Route],
        goal_arc: float,
        box_half: float,
        crosswalk_offset: float,
    ):
        self.routes = routes
        self.goal_arc = goal_arc
        self.box_half = box_half
        self.crosswalk_offset = crosswalk_offset

        # transversal conflicts between every vehicle-route pair (arc_self, arc_other)
        self.vehicle_conflicts: dict[tuple[str, str], list[tuple[float, float]]] = {}
        vehicle_names = (EGO_ROUTE, *CAR_ROUTES)
        for a in vehicle_names:
            for b in vehicle_names:
                if a != b:
                    self.vehicle_conflicts[(a, b)] = route_crossings(routes[a], routes[b])

        # crosswalk conflicts per vehicle route: arc on the vehicle route
        self.crosswalk_conflicts: dict[tuple[str, str], list[float]] = {}
        for v in vehicle_names:
            for p in PED_ROUTES:
                arcs = [sa for sa, _ in route_crossings(routes[v], routes[p])]
                if arcs:
                    self.crosswalk_conflicts[(v, p)] = arcs

        # arc interval of each crosswalk route that lies on the roadway
        self.roadway_span: dict[str, tuple[float, float]] = {
            p: self._roadway_interval(routes[p]) for p in PED_ROUTES
        }

    def _on_roadway(self, pts: np.ndarray) -> np.ndarray:
        on_street = np.abs(pts[:, 1]) <= self.box_half
        on_stem = (np.abs(pts[:, 0]) <= self.box_half) & (pts[:, 1] <= self.box_half)
        return on_street | on_stem

    def _roadway_interval(self, route: Route) -> tuple[float, float]:
        arcs, pts = route.polyline(step=0.05)
        mask = self._on_roadway(pts)
        if not mask.any():
            return (math.inf, -math.inf)
        idx = np.flatnonzero(mask)
        return float(arcs[idx[0]]), float(arcs[idx[-1]])

    def first_conflict(self, route_self: str, route_other: str) -> tuple[float, float] | None:
        pts = self.vehicle_conflicts.get((route_self, route_other), [])
        return pts[0] if pts else None


def build_layout(
    lane_width: float = 3.5,
    ego_approach: float = 25.0,
    ego_route_length: float = 66.0,
    goal_distance: float = 20.0,
    car_approach: float = 40.5,
    car_route_length: float = 64.0,
    ped_route_length: float = 30.0,
    crosswalk_setback: float = 0.75,
) -> Layout:
    """Construct the default T intersection.

    Route lengths are exact by construction: the final straight of each
    route absorbs whatever length the approach and turn do not use, so the
    discretization grids tile the routes without remainder.
    """
    w = lane_width
    half = w / 2.0
    box = w  # paved square: |x|, |y| <= lane_width
    xoff = box + crosswalk_setback

    def line(p, q):
        return LineSegment(tuple(p), tuple(q))

    routes: dict[str, Route] = {}

    # ego: northbound on the stem, left turn, westbound exit
    turn = ArcSegment(center=(-box, -box), radius=box + half, angle_start=0.0,
                      angle_end=math.pi / 2, ccw=True)
    exit_len = ego_route_length - ego_approach - turn.length
    if exit_len <= goal_distance:
        raise ValueError("ego route too short for the configured goal distance")
    routes[EGO_ROUTE] = Route(EGO_ROUTE, [
        line((half, -box - ego_approach), (half, -box)),
        turn,
        line((-box, half), (-box - exit_len, half)),
    ])
    goal_arc = ego_approach + turn.length + goal_distance

    # cars on the horizontal street; all approaches have the same length and
    # the exits are trimmed so each route is exactly car_route_length long
    spawn = box + car_approach
    exit_straight = car_route_length - car_approach - 2 * box
    routes["straight-from-left"] = Route("straight-from-left", [
        line((-spawn, -half), (box + exit_straight, -half)),
    ])
    routes["straight-from-right"] = Route("straight-from-right", [
        line((spawn, half), (-(box + exit_straight), half)),
    ])

    turn_r = ArcSegment(center=(-box, -box), radius=half, angle_start=math.pi / 2,
                        angle_end=0.0, ccw=False)
    exit_r = car_route_length - car_approach - turn_r.length
    routes["turn-right-from-left"] = Route("turn-right-from-left", [
        line((-spawn, -half), (-box, -half)),
        turn_r,
        line((-half, -box), (-half, -box - exit_r)),
    ])

    turn_l = ArcSegment(center=(box, -box), radius=box + half, angle_start=math.pi / 2,
                        angle_end=math.pi, ccw=True)
    exit_l = car_route_length - car_approach - turn_l.length
    routes["turn-left-from-right"] = Route("turn-left-from-right", [
        line((spawn, half), (box, half)),
        turn_l,
        line((-half, -box), (-half, -box - exit_l)),
    ])

    # crosswalks: one per approach, offset outside the paved box; each path
    # includes the sidewalk run-up on both sides so its length is exact
    run = (ped_route_length - 2 * xoff) / 2.0 + xoff  # half-span of the path
    routes["crosswalk-south"] = Route("crosswalk-south", [
        line((-run, -xoff), (run, -xoff)),
    ])
    routes["crosswalk-west"] = Route("crosswalk-west", [
        line((-xoff, -run), (-xoff, run)),
    ])
    routes["crosswalk-east"] = Route("crosswalk-east", [
        line((xoff, run), (xoff, -run)),
    ])

    return Layout(routes, goal_arc=goal_arc, box_half=box, crosswalk_offset=xoff)
