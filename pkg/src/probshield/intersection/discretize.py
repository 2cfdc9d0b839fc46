"""Default discretization grids for the intersection participants.

Position resolution is 2 m for everyone; velocity resolution is 2 m/s for
vehicles (0 to the 10 m/s speed cap) and 1 m/s for the pedestrian (0 to
2 m/s, the support of its speed model).  With the default geometry this
yields 204 ego states, 793 car states (including absent) and 145 pedestrian
states (including absent).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..grids import ParticipantGrid, ProductGrid
from .geometry import CAR_ROUTES, EGO_ROUTE, PED_ROUTES
from .scenario import ScenarioConfig, TrafficState

__all__ = [
    "GridSpec",
    "ego_grid",
    "car_grid",
    "pedestrian_grid",
    "product_grid",
    "discretize",
]


@dataclass(frozen=True)
class GridSpec:
    position_resolution: float = 2.0
    vehicle_velocity_resolution: float = 2.0
    pedestrian_velocity_resolution: float = 1.0

    def __post_init__(self):
        for v in (self.position_resolution, self.vehicle_velocity_resolution,
                  self.pedestrian_velocity_resolution):
            if v <= 0:
                raise ValueError("grid resolutions must be positive")


def _axis(limit: float, resolution: float) -> np.ndarray:
    # 1e-9 slack so a route length that is an exact multiple of the
    # resolution (up to floating point) keeps its last breakpoint
    n = int(np.floor(limit / resolution + 1e-9)) + 1
    return np.arange(n) * resolution


def ego_grid(cfg: ScenarioConfig, spec: GridSpec = GridSpec()) -> ParticipantGrid:
    layout = cfg.build_layout()
    pos = _axis(layout.routes[EGO_ROUTE].length, spec.position_resolution)
    vel = _axis(cfg.ego_max_speed, spec.vehicle_velocity_resolution)
    return ParticipantGrid("ego", (EGO_ROUTE,), (pos,), (vel,), has_absent=False)


def car_grid(cfg: ScenarioConfig, spec: GridSpec = GridSpec()) -> ParticipantGrid:
    layout = cfg.build_layout()
    pos = tuple(
        _axis(layout.routes[r].length, spec.position_resolution) for r in CAR_ROUTES
    )
    vel_axis = _axis(cfg.car_max_speed, spec.vehicle_velocity_resolution)
    vel = tuple(vel_axis for _ in CAR_ROUTES)
    return ParticipantGrid("car", CAR_ROUTES, pos, vel, has_absent=True)


def pedestrian_grid(cfg: ScenarioConfig, spec: GridSpec = GridSpec()) -> ParticipantGrid:
    layout = cfg.build_layout()
    pos = tuple(
        _axis(layout.routes[r].length, spec.position_resolution) for r in PED_ROUTES
    )
    top_speed = max(cfg.ped_base_speed + d for d in cfg.ped_speed_variation)
    vel_axis = _axis(top_speed, spec.pedestrian_velocity_resolution)
    vel = tuple(vel_axis for _ in PED_ROUTES)
    return ParticipantGrid("pedestrian", PED_ROUTES, pos, vel, has_absent=True)


def product_grid(cfg: ScenarioConfig, participant: str, spec: GridSpec = GridSpec()) -> ProductGrid:
    """Joint grid for the ego plus one hazard ("car" or "pedestrian")."""
    if participant == "car":
        other = car_grid(cfg, spec)
    elif participant == "pedestrian":
        other = pedestrian_grid(cfg, spec)
    else:
        raise ValueError(f"unknown participant {participant!r}")
    return ProductGrid(ego_grid(cfg, spec), other)


def discretize(state: TrafficState, grid: ProductGrid) -> int:
    """Nearest-cell joint index of a continuous traffic state."""
    ego_idx = grid.ego.nearest(state.ego.route, state.ego.position, state.ego.velocity)
    other = getattr(state, grid.other.name)
    other_idx = grid.other.nearest(other.route, other.position, other.velocity)
    return grid.joint_index(ego_idx, other_idx)
