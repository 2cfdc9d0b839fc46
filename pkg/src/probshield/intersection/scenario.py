"""Scenario configuration and the traffic state types.

All tunables of the intersection case study live here.  The defaults define
the reference scenario: 0.5 s time step, four longitudinal-acceleration
maneuvers, a 0.7 per-step appearance probability for absent participants,
and the geometry whose discretization yields 204 / 793 / 145 physical states
for ego, car and pedestrian.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Mapping

from .geometry import CAR_ROUTES, EGO_ROUTE, PED_ROUTES, Layout, build_layout

__all__ = [
    "ACTIONS",
    "HARD_BRAKE",
    "SCENARIOS",
    "PhysicalState",
    "ABSENT",
    "TrafficState",
    "StepEvents",
    "GeometryConfig",
    "DriverParams",
    "ScenarioConfig",
]

#: Longitudinal acceleration maneuvers (m/s^2): hard brake, brake, hold, accelerate.
ACTIONS = (-4.0, -2.0, 0.0, 2.0)
#: Index of the hard-braking action, used as the composite-shield fallback.
HARD_BRAKE = 0

SCENARIOS = ("pedestrian-only", "car-only", "car-and-pedestrian")


@dataclass(frozen=True)
class PhysicalState:
    """(route, longitudinal position, longitudinal velocity) or absent."""

    route: str | None
    position: float = 0.0
    velocity: float = 0.0

    @property
    def is_absent(self) -> bool:
        return self.route is None


#: Distinguished value for a participant that is not in the scene.
ABSENT = PhysicalState(None, math.nan, math.nan)


@dataclass(frozen=True)
class TrafficState:
    ego: PhysicalState
    car: PhysicalState
    pedestrian: PhysicalState
    step_count: int = 0

    def __post_init__(self):
        if self.ego.is_absent:
            raise ValueError("the ego vehicle is never absent")


@dataclass(frozen=True)
class StepEvents:
    collision: bool = False
    goal_reached: bool = False

    @property
    def terminal(self) -> bool:
        return self.collision or self.goal_reached


@dataclass(frozen=True)
class GeometryConfig:
    lane_width: float = 3.5
    crosswalk_setback: float = 0.75
    ego_approach: float = 25.0
    ego_route_length: float = 66.0
    goal_distance: float = 20.0
    car_approach: float = 40.5
    car_route_length: float = 64.0
    ped_route_length: float = 30.0


@dataclass(frozen=True)
class DriverParams:
    """Rule-based driver: yield, gap acceptance by time to collision, IDM."""

    idm_desired_speed: float = 8.0
    idm_time_headway: float = 1.5
    idm_max_accel: float = 1.0
    idm_comfort_decel: float = 2.0
    idm_jam_distance: float = 2.0
    idm_exponent: float = 4.0
    ttc_threshold: float = 4.5
    # stop with the front bumper this far before the line / conflict
    stop_line_setback: float = 2.5
    yield_setback: float = 3.0
    accel_min: float = -4.0
    accel_max: float = 2.0


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str = "car-and-pedestrian"
    dt: float = 0.5
    appearance_prob: float = 0.7
    initial_presence_prob: float = 0.7
    ego_initial_speed: float = 5.0
    ego_max_speed: float = 10.0
    car_max_speed: float = 10.0
    car_spawn_speed_max: float = 8.0
    ped_base_speed: float = 1.0
    ped_speed_variation: tuple[float, ...] = (-1.0, 0.0, 1.0)
    car_accel_noise: tuple[float, ...] = (-1.0, 0.0, 1.0)
    vehicle_length: float = 4.0
    vehicle_width: float = 2.0
    ped_radius: float = 0.3
    max_steps: int = 200
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    driver: DriverParams = field(default_factory=DriverParams)

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}; expected one of {SCENARIOS}")
        if self.dt <= 0:
            raise ValueError("time step must be positive")
        if not (0.0 <= self.appearance_prob <= 1.0):
            raise ValueError("appearance probability must be in [0, 1]")

    @property
    def has_car(self) -> bool:
        return self.scenario in ("car-only", "car-and-pedestrian")

    @property
    def has_pedestrian(self) -> bool:
        return self.scenario in ("pedestrian-only", "car-and-pedestrian")

    def build_layout(self) -> Layout:
        g = self.geometry
        return build_layout(
            lane_width=g.lane_width,
            ego_approach=g.ego_approach,
            ego_route_length=g.ego_route_length,
            goal_distance=g.goal_distance,
            car_approach=g.car_approach,
            car_route_length=g.car_route_length,
            ped_route_length=g.ped_route_length,
            crosswalk_setback=g.crosswalk_setback,
        )

    # -- config files -----------------------------------------------------

    @classmethod
    def from_dict(cls, doc: Mapping) -> "ScenarioConfig":
        doc = dict(doc)
        geometry = GeometryConfig(**doc.pop("geometry", {}))
        driver = DriverParams(**doc.pop("driver", {}))
        for key in ("ped_speed_variation", "car_accel_noise"):
            if key in doc:
                doc[key] = tuple(doc[key])
        return cls(geometry=geometry, driver=driver, **doc)

    @classmethod
    def from_file(cls, path) -> "ScenarioConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def with_scenario(self, scenario: str) -> "ScenarioConfig":
        return replace(self, scenario=scenario)


# re-exported route names so callers rarely need the geometry module
EGO_ROUTE_NAME = EGO_ROUTE
CAR_ROUTE_NAMES = CAR_ROUTES
PED_ROUTE_NAMES = PED_ROUTES
