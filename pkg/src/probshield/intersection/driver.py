"""Rule-based longitudinal drivers: yield, TTC gap acceptance, IDM.

The other car follows a fixed priority ladder: yield to a crossing
pedestrian, hold for gap acceptance (time to collision) when turning left,
otherwise Intelligent Driver Model toward its route.  The rule-based ego
baseline applies the same primitives from the minor road: it additionally
yields to conflicting vehicles because it has no priority.

All primitives broadcast over numpy arrays so the discretized-MDP builder
can evaluate them on whole grids; the simulator calls them with scalars.
"""

from __future__ import annotations

import math

import numpy as np

from .geometry import CAR_ROUTES, EGO_ROUTE, Layout
from .scenario import ACTIONS, DriverParams, ScenarioConfig, TrafficState

__all__ = [
    "idm_accel",
    "hold_before",
    "ttc_to_point",
    "rule_driver_action",
    "ego_rule_action",
    "quantize_accel",
]

_TINY_GAP = 0.1
_EPS_SPEED = 0.05


def idm_accel(v, p: DriverParams, v_lead=None, gap=None):
    """IDM acceleration; free road when no leader is given.

    ``gap`` is the net bumper-to-bumper distance to the leader.  Broadcasts
    over arrays.
    """
    v = np.asarray(v, dtype=float)
    free = p.idm_max_accel * (1.0 - (v / p.idm_desired_speed) ** p.idm_exponent)
    if v_lead is None:
        return free
    v_lead = np.asarray(v_lead, dtype=float)
    gap = np.maximum(np.asarray(gap, dtype=float), _TINY_GAP)
    dv = v - v_lead
    s_star = p.idm_jam_distance + np.maximum(
        0.0,
        v * p.idm_time_headway
        + v * dv / (2.0 * math.sqrt(p.idm_max_accel * p.idm_comfort_decel)),
    )
    return free - p.idm_max_accel * (s_star / gap) ** 2


def hold_before(v, distance, p: DriverParams):
    """Deceleration profile that settles the vehicle just before ``distance``.

    Modeled as IDM against a stopped virtual leader placed one jam distance
    past the hold point, so the equilibrium position is the hold point
    itself.
    """
    return idm_accel(v, p, v_lead=0.0, gap=np.asarray(distance, dtype=float) + p.idm_jam_distance)


def ttc_to_point(arc, velocity, conflict_arc):
    """Time for a participant to reach a conflict point along its route.

    Infinite when the point is already passed or the participant is (nearly)
    stopped.  Broadcasts over arrays.
    """
    arc = np.asarray(arc, dtype=float)
    velocity = np.asarray(velocity, dtype=float)
    dist = np.asarray(conflict_arc, dtype=float) - arc
    with np.errstate(divide="ignore", invalid="ignore"):
        ttc = np.where((dist > 0.0) & (velocity > _EPS_SPEED), dist / np.maximum(velocity, _EPS_SPEED), np.inf)
    return ttc


def quantize_accel(desired: float) -> int:
    """Largest maneuver not exceeding the desired acceleration (safe rounding)."""
    best = 0
    for i, a in enumerate(ACTIONS):
        if a <= desired + 1e-9:
            best = i
        else:
            break
    return best


def _pedestrian_crossing(layout: Layout, ped, vehicle_route: str, vehicle_arc: float,
                         p: DriverParams) -> float | None:
    """Distance to the nearest crosswalk conflict demanding a yield, else None."""
    if ped.is_absent:
        return None
    arcs = layout.crosswalk_conflicts.get((vehicle_route, ped.route))
    if not arcs:
        return None
    lo, hi = layout.roadway_span[ped.route]
    if not (lo <= ped.position <= hi):
        return None  # pedestrian not on the roadway
    ahead = [a for a in arcs if a > vehicle_arc]
    if not ahead:
        return None  # conflict already passed; clear the crosswalk
    return min(ahead) - vehicle_arc


def rule_driver_action(state: TrafficState, params: DriverParams, layout: Layout,
                       cfg: ScenarioConfig) -> float:
    """Rule-based acceleration of the other car (noise not included).

    Priority: yield to a crossing pedestrian, TTC gap acceptance at the stop
    line when turning left, IDM otherwise.  Output is clamped to
    [accel_min, accel_max].
    """
    car = state.car
    if car.is_absent:
        raise ValueError("rule driver queried for an absent car")
    route = layout.routes[car.route]

    candidates: list[float] = []

    # 1. always yield to a crossing pedestrian
    dist = _pedestrian_crossing(layout, state.pedestrian, car.route, car.position, params)
    if dist is not None:
        candidates.append(float(hold_before(car.velocity, dist - params.yield_setback, params)))

    # 2. left turns give priority: hold at the stop line unless the TTC of the
    #    conflicting vehicle (the ego) exceeds the acceptance threshold
    if car.route == "turn-left-from-right":
        conflict = layout.first_conflict(car.route, EGO_ROUTE)
        stop_arc = cfg.geometry.car_approach - params.stop_line_setback
        if conflict is not None and car.position < cfg.geometry.car_approach:
            arc_car, arc_ego = conflict
            ego_cleared = state.ego.position > arc_ego + cfg.vehicle_length
            ttc = float(ttc_to_point(state.ego.position, state.ego.velocity, arc_ego))
            if not ego_cleared and ttc <= params.ttc_threshold:
                candidates.append(float(hold_before(car.velocity, stop_arc - car.position, params)))

    # 3. IDM toward the route; the ego is a leader when it occupies the car's
    #    lane ahead of it
    leader_v = None
    leader_gap = None
    ego_xy = layout.routes[EGO_ROUTE].point_at(state.ego.position)
    arc_on_route, lateral = route.project(float(ego_xy[0]), float(ego_xy[1]))
    if lateral < cfg.geometry.lane_width / 2.0 and arc_on_route > car.position:
        leader_v = state.ego.velocity
        leader_gap = arc_on_route - car.position - cfg.vehicle_length
    candidates.append(float(idm_accel(car.velocity, params, leader_v, leader_gap)))

    return float(np.clip(min(candidates), params.accel_min, params.accel_max))


def ego_rule_action(state: TrafficState, params: DriverParams, layout: Layout,
                    cfg: ScenarioConfig) -> int:
    """Rule-based ego baseline: the car's rule ladder applied from the minor road.

    Returns an index into ACTIONS.  The ego has no priority, so it holds at
    its stop line whenever a present car's TTC to their mutual conflict
    point is below the acceptance threshold.
    """
    ego = state.ego
    candidates: list[float] = []

    dist = _pedestrian_crossing(layout, state.pedestrian, EGO_ROUTE, ego.position, params)
    if dist is not None:
        candidates.append(float(hold_before(ego.velocity, dist - params.yield_setback, params)))

    car = state.car
    if not car.is_absent and ego.position < cfg.geometry.ego_approach:
        conflict = layout.first_conflict(EGO_ROUTE, car.route)
        if conflict is not None:
            arc_ego, arc_car = conflict
            car_cleared = car.position > arc_car + cfg.vehicle_length
            ttc = float(ttc_to_point(car.position, car.velocity, arc_car))
            if not car_cleared and ttc <= params.ttc_threshold:
                stop_arc = cfg.geometry.ego_approach - params.stop_line_setback
                candidates.append(float(hold_before(ego.velocity, stop_arc - ego.position, params)))

    leader_v = None
    leader_gap = None
    if not car.is_absent:
        car_xy = layout.routes[car.route].point_at(car.position)
        arc_on_route, lateral = layout.routes[EGO_ROUTE].project(float(car_xy[0]), float(car_xy[1]))
        if lateral < cfg.geometry.lane_width / 2.0 and arc_on_route > ego.position:
            leader_v = car.velocity
            leader_gap = arc_on_route - ego.position - cfg.vehicle_length
    candidates.append(float(idm_accel(ego.velocity, params, leader_v, leader_gap)))

    return quantize_accel(min(candidates))
