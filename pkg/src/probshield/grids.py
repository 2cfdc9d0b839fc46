"""Discretization grids and multilinear interpolation weights.

A participant's physical state is (route, longitudinal position, longitudinal
velocity), or absent.  The route is a categorical axis matched exactly;
position and velocity are continuous axes with sorted breakpoints, so a
continuous state maps to at most four (grid point, weight) pairs per
participant.  Joint weights over several participants are the products of
the per-participant weights.

Grid state indices are laid out as::

    [absent?] + route_0 block + route_1 block + ...

with each route block ordered position-major (index = i_pos * n_vel + i_vel).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "ParticipantGrid",
    "ProductGrid",
    "line_weights",
    "line_weights_vec",
    "uniform_projection_weights",
]


def line_weights(points: np.ndarray, x: float) -> tuple[int, int, float, float, bool]:
    """Hat-function weights of ``x`` on a sorted breakpoint array.

    Returns (i_lo, i_hi, w_lo, w_hi, clamped); exact on breakpoints
    (w_lo == 1).  Out-of-hull queries are clamped to the boundary and
    flagged.
    """
    n = len(points)
    if x <= points[0]:
        return 0, 0, 1.0, 0.0, bool(x < points[0])
    if x >= points[-1]:
        return n - 1, n - 1, 1.0, 0.0, bool(x > points[-1])
    hi = int(np.searchsorted(points, x, side="right"))
    lo = hi - 1
    span = points[hi] - points[lo]
    w_hi = (x - points[lo]) / span
    return lo, hi, 1.0 - w_hi, w_hi, False


def line_weights_vec(points: np.ndarray, x: np.ndarray):
    """Vectorized :func:`line_weights`: arrays (lo, hi, w_lo, w_hi, clamped)."""
    x = np.asarray(x, dtype=float)
    n = len(points)
    xc = np.clip(x, points[0], points[-1])
    hi = np.clip(np.searchsorted(points, xc, side="right"), 1, n - 1)
    lo = hi - 1
    span = points[hi] - points[lo]
    w_hi = (xc - points[lo]) / span
    w_lo = 1.0 - w_hi
    clamped = (x < points[0]) | (x > points[-1])
    return lo, hi, w_lo, w_hi, clamped


def uniform_projection_weights(points: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Expected hat weights of a Uniform(lo, hi) sample on a breakpoint grid.

    Integrates each hat function exactly over [lo, hi], so projecting a
    uniformly distributed continuous value onto the grid preserves total
    mass.  Requires [lo, hi] inside the grid hull.
    """
    points = np.asarray(points, dtype=float)
    if lo < points[0] - 1e-12 or hi > points[-1] + 1e-12 or hi <= lo:
        raise ValueError("interval must be nondegenerate and inside the grid hull")
    w = np.zeros(len(points))
    for k in range(len(points) - 1):
        a = max(lo, points[k])
        b = min(hi, points[k + 1])
        if b <= a:
            continue
        span = points[k + 1] - points[k]
        up = ((b - points[k]) ** 2 - (a - points[k]) ** 2) / (2.0 * span)
        w[k + 1] += up
        w[k] += (b - a) - up
    return w / (hi - lo)


@dataclass(frozen=True)
class ParticipantGrid:
    """Breakpoint grid for one traffic participant."""

    name: str
    routes: tuple[str, ...]
    pos: tuple[np.ndarray, ...]  # per-route position breakpoints
    vel: tuple[np.ndarray, ...]  # per-route velocity breakpoints
    has_absent: bool

    def __post_init__(self):
        if len(self.pos) != len(self.routes) or len(self.vel) != len(self.routes):
            raise ValueError("need one position and one velocity axis per route")
        for axis in (*self.pos, *self.vel):
            if len(axis) < 2:
                raise ValueError("continuous axes need at least 2 breakpoints")
            if not np.all(np.diff(axis) > 0):
                raise ValueError("breakpoints must be strictly increasing")

    # -- index layout ---------------------------------------------------

    @property
    def absent_index(self) -> int:
        if not self.has_absent:
            raise ValueError(f"{self.name} grid has no absent state")
        return 0

    def route_offset(self, r: int) -> int:
        base = 1 if self.has_absent else 0
        for k in range(r):
            base += len(self.pos[k]) * len(self.vel[k])
        return base

    @property
    def num_states(self) -> int:
        return self.route_offset(len(self.routes))

    def route_index(self, route: str) -> int:
        try:
            return self.routes.index(route)
        except ValueError:
            raise KeyError(f"route {route!r} not in {self.name} grid {self.routes}") from None

    def index(self, route: str, i_pos: int, i_vel: int) -> int:
        r = self.route_index(route)
        return self.route_offset(r) + i_pos * len(self.vel[r]) + i_vel

    def decode(self, idx: int) -> tuple[str | None, float, float]:
        """(route, position, velocity) of a grid point; (None, nan, nan) if absent."""
        if self.has_absent and idx == 0:
            return None, float("nan"), float("nan")
        for r in range(len(self.routes)):
            lo = self.route_offset(r)
            hi = self.route_offset(r + 1)
            if lo <= idx < hi:
                rel = idx - lo
                nv = len(self.vel[r])
                return self.routes[r], float(self.pos[r][rel // nv]), float(self.vel[r][rel % nv])
        raise IndexError(f"grid index {idx} out of range [0, {self.num_states})")

    # -- continuous-state mapping ----------------------------------------

    def interp(
        self, route: str | None, position: float, velocity: float
    ) -> tuple[np.ndarray, np.ndarray, bool]:
        """Grid indices and multilinear weights of a continuous state.

        ``route is None`` means the participant is absent: all weight goes to
        the absent pseudo-state.  Weights are >= 0 and sum to 1.
        """
        if route is None:
            return np.array([self.absent_index]), np.array([1.0]), False
        r = self.route_index(route)
        pl, ph, wpl, wph, cp = line_weights(self.pos[r], position)
        vl, vh, wvl, wvh, cv = line_weights(self.vel[r], velocity)
        base = self.route_offset(r)
        nv = len(self.vel[r])
        idx = np.array(
            [
                base + pl * nv + vl,
                base + pl * nv + vh,
                base + ph * nv + vl,
                base + ph * nv + vh,
            ]
        )
        w = np.array([wpl * wvl, wpl * wvh, wph * wvl, wph * wvh])
        keep = w > 0.0
        return idx[keep], w[keep], cp or cv

    def nearest(self, route: str | None, position: float, velocity: float) -> int:
        """Nearest-cell index (discretization, as opposed to interpolation)."""
        if route is None:
            return self.absent_index
        r = self.route_index(route)
        ip = int(np.clip(np.searchsorted(self.pos[r], position), 1, len(self.pos[r]) - 1))
        if abs(self.pos[r][ip - 1] - position) <= abs(self.pos[r][ip] - position):
            ip -= 1
        iv = int(np.clip(np.searchsorted(self.vel[r], velocity), 1, len(self.vel[r]) - 1))
        if abs(self.vel[r][iv - 1] - velocity) <= abs(self.vel[r][iv] - velocity):
            iv -= 1
        return self.route_offset(r) + ip * len(self.vel[r]) + iv

    # -- serialization ----------------------------------------------------

    def to_arrays(self, prefix: str) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for r, route in enumerate(self.routes):
            out[f"{prefix}_pos_{r}"] = self.pos[r]
            out[f"{prefix}_vel_{r}"] = self.vel[r]
        return out

    def meta(self) -> dict:
        return {"name": self.name, "routes": list(self.routes), "has_absent": self.has_absent}

    @classmethod
    def from_arrays(cls, meta: dict, arrays, prefix: str) -> "ParticipantGrid":
        routes = tuple(meta["routes"])
        pos = tuple(np.asarray(arrays[f"{prefix}_pos_{r}"]) for r in range(len(routes)))
        vel = tuple(np.asarray(arrays[f"{prefix}_vel_{r}"]) for r in range(len(routes)))
        return cls(meta["name"], routes, pos, vel, meta["has_absent"])


@dataclass(frozen=True)
class ProductGrid:
    """Joint grid over the ego vehicle and one other participant."""

    ego: ParticipantGrid
    other: ParticipantGrid

    @property
    def num_states(self) -> int:
        return self.ego.num_states * self.other.num_states

    def joint_index(self, ego_idx: int, other_idx: int) -> int:
        return ego_idx * self.other.num_states + other_idx

    def split_index(self, idx: int) -> tuple[int, int]:
        return divmod(idx, self.other.num_states)

    def interp_pair(
        self,
        ego_state: tuple[str | None, float, float],
        other_state: tuple[str | None, float, float],
    ) -> tuple[np.ndarray, np.ndarray, bool]:
        """Joint indices/weights as the product of per-participant weights."""
        ei, ew, ec = self.ego.interp(*ego_state)
        oi, ow, oc = self.other.interp(*other_state)
        idx = (ei[:, None] * self.other.num_states + oi[None, :]).ravel()
        w = (ew[:, None] * ow[None, :]).ravel()
        return idx, w, ec or oc
