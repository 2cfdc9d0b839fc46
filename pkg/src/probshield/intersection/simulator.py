"""Discrete-time simulation of the unsignalized T intersection.

One step integrates the ego vehicle under the chosen maneuver, moves the
other car under its rule-based policy plus uniform acceleration noise, and
advances the pedestrian at 1 m/s plus uniform speed variation (resampled
every step).  Absent participants appear at the start of their route with
probability 0.7 per step; participants that run off the end of their route
return to absent.  Events are evaluated on the post-step state, collision
before goal.

Velocities integrate with clamping at zero (no reversing), and positions
advance by the trapezoid of the clamped velocities, which coincides with
x + v*dt + a*dt^2/2 whenever no clamp is active.
"""

from __future__ import annotations

import numpy as np

from .driver import rule_driver_action
from .geometry import (
    CAR_ROUTES,
    EGO_ROUTE,
    PED_ROUTES,
    Layout,
    rectangle_circle_overlap,
    rectangles_overlap,
)
from .scenario import (
    ABSENT,
    ACTIONS,
    PhysicalState,
    ScenarioConfig,
    StepEvents,
    TrafficState,
)

__all__ = [
    "integrate_motion",
    "initial_state",
    "step_state",
    "collision",
    "goal_reached",
    "IntersectionSimulator",
]


def integrate_motion(position, velocity, accel, dt, v_max):
    """Point-mass update with velocity clamped into [0, v_max].

    Returns (new_position, new_velocity); broadcasts over arrays.
    """
    v_new = np.clip(np.asarray(velocity, dtype=float) + np.asarray(accel, dtype=float) * dt, 0.0, v_max)
    x_new = np.asarray(position, dtype=float) + 0.5 * (velocity + v_new) * dt
    return x_new, v_new


def _spawn_car(cfg: ScenarioConfig, rng: np.random.Generator) -> PhysicalState:
    route = CAR_ROUTES[rng.integers(len(CAR_ROUTES))]
    velocity = rng.uniform(0.0, cfg.car_spawn_speed_max)
    return PhysicalState(route, 0.0, float(velocity))


def _ped_speed(cfg: ScenarioConfig, rng: np.random.Generator) -> float:
    variation = cfg.ped_speed_variation[rng.integers(len(cfg.ped_speed_variation))]
    return max(0.0, cfg.ped_base_speed + variation)


def _spawn_ped(cfg: ScenarioConfig, rng: np.random.Generator) -> PhysicalState:
    route = PED_ROUTES[rng.integers(len(PED_ROUTES))]
    return PhysicalState(route, 0.0, _ped_speed(cfg, rng))


def initial_state(cfg: ScenarioConfig, rng: np.random.Generator) -> TrafficState:
    """Ego at its route start; car/pedestrian present per scenario and config."""
    ego = PhysicalState(EGO_ROUTE, 0.0, cfg.ego_initial_speed)
    car = ABSENT
    ped = ABSENT
    if cfg.has_car and rng.random() < cfg.initial_presence_prob:
        car = _spawn_car(cfg, rng)
    if cfg.has_pedestrian and rng.random() < cfg.initial_presence_prob:
        ped = _spawn_ped(cfg, rng)
    return TrafficState(ego=ego, car=car, pedestrian=ped, step_count=0)


def _vehicle_pose(layout: Layout, phys: PhysicalState) -> tuple[np.ndarray, float]:
    route = layout.routes[phys.route]
    return route.point_at(phys.position), float(route.heading_at(phys.position))


def collision(state: TrafficState, cfg: ScenarioConfig, layout: Layout) -> bool:
    """Footprint overlap between the ego and any present participant."""
    half = (cfg.vehicle_length / 2.0, cfg.vehicle_width / 2.0)
    ego_xy, ego_h = _vehicle_pose(layout, state.ego)
    if not state.car.is_absent:
        car_xy, car_h = _vehicle_pose(layout, state.car)
        if bool(rectangles_overlap(ego_xy, ego_h, half, car_xy, car_h, half)):
            return True
    if not state.pedestrian.is_absent:
        ped_xy = layout.routes[state.pedestrian.route].point_at(state.pedestrian.position)
        if bool(rectangle_circle_overlap(ego_xy, ego_h, half, ped_xy, cfg.ped_radius)):
            return True
    return False


def goal_reached(state: TrafficState, layout: Layout) -> bool:
    return state.ego.position >= layout.goal_arc


def step_state(
    state: TrafficState,
    action: int,
    cfg: ScenarioConfig,
    rng: np.random.Generator,
    layout: Layout,
) -> tuple[TrafficState, StepEvents]:
    """Advance one time step under ego maneuver ``action`` (index into ACTIONS).

    Random draws happen in a fixed order (car first, then pedestrian) so a
    seeded generator reproduces trajectories exactly.
    """
    if not (0 <= action < len(ACTIONS)):
        raise ValueError(f"action index {action} outside {list(range(len(ACTIONS)))}")
    dt = cfg.dt

    ego_pos, ego_vel = integrate_motion(
        state.ego.position, state.ego.velocity, ACTIONS[action], dt, cfg.ego_max_speed
    )
    ego = PhysicalState(EGO_ROUTE, float(ego_pos), float(ego_vel))

    # other car: rule policy plus uniform acceleration noise
    car = state.car
    if cfg.has_car:
        if car.is_absent:
            if rng.random() < cfg.appearance_prob:
                car = _spawn_car(cfg, rng)
        else:
            accel = rule_driver_action(state, cfg.driver, layout, cfg)
            accel += cfg.car_accel_noise[rng.integers(len(cfg.car_accel_noise))]
            pos, vel = integrate_motion(car.position, car.velocity, accel, dt, cfg.car_max_speed)
            if pos > layout.routes[car.route].length:
                car = ABSENT
            else:
                car = PhysicalState(car.route, float(pos), float(vel))

    # pedestrian: fixed base speed with per-step variation
    ped = state.pedestrian
    if cfg.has_pedestrian:
        if ped.is_absent:
            if rng.random() < cfg.appearance_prob:
                ped = _spawn_ped(cfg, rng)
        else:
            speed = _ped_speed(cfg, rng)
            pos = ped.position + speed * dt
            if pos > layout.routes[ped.route].length:
                ped = ABSENT
            else:
                ped = PhysicalState(ped.route, float(pos), speed)

    nxt = TrafficState(ego=ego, car=car, pedestrian=ped, step_count=state.step_count + 1)
    hit = collision(nxt, cfg, layout)
    events = StepEvents(collision=hit, goal_reached=(not hit) and goal_reached(nxt, layout))
    return nxt, events


class IntersectionSimulator:
    """Stateful wrapper owning the layout, the RNG and the current state."""

    def __init__(self, cfg: ScenarioConfig, seed: int | np.random.SeedSequence = 0):
        self.cfg = cfg
        self.layout = cfg.build_layout()
        self.rng = np.random.default_rng(seed)
        self.state: TrafficState | None = None

    @property
    def num_actions(self) -> int:
        return len(ACTIONS)

    def reset(self) -> TrafficState:
        self.state = initial_state(self.cfg, self.rng)
        return self.state

    def step(self, action: int) -> tuple[TrafficState, StepEvents]:
        if self.state is None:
            raise RuntimeError("call reset() before step()")
        self.state, events = step_state(self.state, action, self.cfg, self.rng, self.layout)
        return self.state, events
