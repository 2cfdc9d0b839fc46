"""Explicit discretized MDPs for the two-agent sub-problems.

The joint state space is the product of the ego grid and one hazard grid
(car or pedestrian, including its absent pseudo-state).  Transition
probabilities are estimated from each cell centre by enumerating the
hazard's stochastic choices -- the acceleration-noise set, the appearance
Bernoulli and the spawn route/velocity distribution -- and spreading each
continuous successor over grid points with the same multilinear weights the
shield uses at query time.  Cells are labelled ``collision`` and ``goal``
by the geometric predicates evaluated at cell centres; labelled cells are
absorbing.
"""

from __future__ import annotations

import warnings

import numpy as np
import scipy.sparse as sp

from ..grids import ParticipantGrid, ProductGrid, line_weights_vec, uniform_projection_weights
from ..mdp import LabelledMdp
from .driver import hold_before, idm_accel, ttc_to_point
from .geometry import EGO_ROUTE, Layout, rectangle_circle_overlap, rectangles_overlap
from .scenario import ACTIONS, ScenarioConfig

__all__ = ["build_joint_mdp", "car_rule_accel_table", "PROPOSITIONS"]

PROPOSITIONS = ("collision", "goal")

_EXIT_SLACK = 1e-9  # cell centres may sit one ulp past the route end


def _ego_axes(grid: ProductGrid):
    eg = grid.ego
    return eg.pos[0], eg.vel[0]


def _ego_successors(cfg: ScenarioConfig, grid: ProductGrid) -> list[tuple[np.ndarray, np.ndarray]]:
    """Per action: (indices (E, 4), weights (E, 4)) of the ego's next cell."""
    epos, evel = _ego_axes(grid)
    n_ev = len(evel)
    dt = cfg.dt
    out = []
    for a_val in ACTIONS:
        vn = np.clip(evel + a_val * dt, 0.0, cfg.ego_max_speed)
        vlo, vhi, wvlo, wvhi, _ = line_weights_vec(evel, vn)
        xn = epos[:, None] + 0.5 * (evel[None, :] + vn[None, :]) * dt
        plo, phi, wplo, wphi, _ = line_weights_vec(epos, xn)
        idx = np.stack(
            [
                plo * n_ev + vlo[None, :],
                plo * n_ev + vhi[None, :],
                phi * n_ev + vlo[None, :],
                phi * n_ev + vhi[None, :],
            ],
            axis=-1,
        )
        w = np.stack(
            [
                wplo * wvlo[None, :],
                wplo * wvhi[None, :],
                wphi * wvlo[None, :],
                wphi * wvhi[None, :],
            ],
            axis=-1,
        )
        E = len(epos) * n_ev
        out.append((idx.reshape(E, 4).astype(np.int64), w.reshape(E, 4)))
    return out


def car_rule_accel_table(cfg: ScenarioConfig, layout: Layout, grid: ProductGrid) -> np.ndarray:
    """Rule-based car acceleration at every (ego cell, present car cell).

    Shape (E, C - 1); columns follow the car grid's route-block layout.  The
    pedestrian is absent in this sub-problem, so only the TTC gate and the
    IDM terms are active.  Mirrors :func:`driver.rule_driver_action`.
    """
    epos, evel = _ego_axes(grid)
    car = grid.other
    p = cfg.driver
    ego_route = layout.routes[EGO_ROUTE]
    ego_xy = ego_route.point_at(epos)

    blocks = []
    for r, route_name in enumerate(car.routes):
        route = layout.routes[route_name]
        cpos, cvel = car.pos[r], car.vel[r]
        # ego projected onto this car route, per ego position cell
        proj = np.array([route.project(float(x), float(y)) for x, y in ego_xy])
        proj_arc, lateral = proj[:, 0], proj[:, 1]

        # IDM with the ego as leader where it occupies the car's lane ahead
        shape = (len(epos), len(evel), len(cpos), len(cvel))
        lead_ok = (lateral[:, None] < cfg.geometry.lane_width / 2.0) & (
            proj_arc[:, None] > cpos[None, :]
        )  # (n_ep, n_cp)
        gap = proj_arc[:, None] - cpos[None, :] - cfg.vehicle_length
        idm_lead = idm_accel(
            cvel[None, None, None, :],
            p,
            v_lead=evel[None, :, None, None],
            gap=gap[:, None, :, None],
        )
        free = idm_accel(cvel, p)  # (n_cv,)
        u = np.where(
            lead_ok[:, None, :, None],
            idm_lead,
            np.broadcast_to(free[None, None, None, :], shape),
        )

        if route_name == "turn-left-from-right":
            conflict = layout.first_conflict(route_name, EGO_ROUTE)
            if conflict is not None:
                arc_car, arc_ego = conflict
                cleared = epos > arc_ego + cfg.vehicle_length  # (n_ep,)
                ttc = ttc_to_point(epos[:, None], evel[None, :], arc_ego)  # (n_ep, n_ev)
                hold_needed = (~cleared[:, None]) & (ttc <= p.ttc_threshold)
                gate = cpos < cfg.geometry.car_approach  # (n_cp,)
                stop_arc = cfg.geometry.car_approach - p.stop_line_setback
                hold = hold_before(cvel[None, :], stop_arc - cpos[:, None], p)  # (n_cp, n_cv)
                u = np.where(
                    hold_needed[:, :, None, None] & gate[None, None, :, None],
                    np.minimum(u, hold[None, None, :, :]),
                    u,
                )

        u = np.clip(u, p.accel_min, p.accel_max)
        blocks.append(u.reshape(len(epos) * len(evel), len(cpos) * len(cvel)))
    return np.concatenate(blocks, axis=1)


def _label_masks(cfg: ScenarioConfig, layout: Layout, grid: ProductGrid):
    """(collision, goal) boolean masks over the joint state space."""
    epos, evel = _ego_axes(grid)
    other = grid.other
    n_ev = len(evel)
    E = len(epos) * n_ev
    C = other.num_states

    ego_route = layout.routes[EGO_ROUTE]
    ego_xy = ego_route.point_at(epos)
    ego_h = ego_route.heading_at(epos)
    half = (cfg.vehicle_length / 2.0, cfg.vehicle_width / 2.0)

    # collision depends on positions only; broadcast over velocity axes
    hit_pos = np.zeros((len(epos), C), dtype=bool)
    for r, route_name in enumerate(other.routes):
        route = layout.routes[route_name]
        cpos, cvel = other.pos[r], other.vel[r]
        oxy = route.point_at(cpos)
        if other.name == "car":
            oh = route.heading_at(cpos)
            hits = rectangles_overlap(
                ego_xy[:, None, :], ego_h[:, None], half,
                oxy[None, :, :], oh[None, :], half,
            )
        else:
            hits = rectangle_circle_overlap(
                ego_xy[:, None, :], ego_h[:, None], half,
                oxy[None, :, :], cfg.ped_radius,
            )
        base = other.route_offset(r)
        block = np.repeat(hits[:, :, None], len(cvel), axis=2).reshape(len(epos), -1)
        hit_pos[:, base:base + block.shape[1]] = block

    collision = np.repeat(hit_pos, n_ev, axis=0).reshape(E, C).ravel()
    goal_pos = epos >= layout.goal_arc
    goal = np.repeat(np.repeat(goal_pos, n_ev), C)

    both = collision & goal
    if both.any():
        warnings.warn(
            f"{int(both.sum())} cells are labelled both collision and goal; "
            "the until tie rule decides their status"
        )
    return collision, goal


def _append_outer(
    buffers: tuple[list, list, list],
    rows: np.ndarray,
    ego_idx: np.ndarray,
    ego_w: np.ndarray,
    other_idx: np.ndarray,
    other_w: np.ndarray,
    C: int,
) -> None:
    """Accumulate COO entries for the outer product of two successor spreads."""
    r, c, v = buffers
    n_e = ego_idx.shape[1]
    n_o = other_idx.shape[1]
    cols = ego_idx[:, :, None] * C + other_idx[:, None, :]
    vals = ego_w[:, :, None] * other_w[:, None, :]
    r.append(np.repeat(rows, n_e * n_o))
    c.append(cols.ravel())
    v.append(vals.ravel())


def build_joint_mdp(
    cfg: ScenarioConfig,
    grid: ProductGrid,
    layout: Layout | None = None,
) -> LabelledMdp:
    """Discretized two-agent MDP on the given joint grid.

    The hazard is selected by ``grid.other``; collision and goal cells are
    absorbing; every built row is normalized to unit mass (a deviation
    beyond 1e-9 before normalization raises).
    """
    if grid.other.name not in ("car", "pedestrian"):
        raise ValueError(f"unsupported hazard grid {grid.other.name!r}")
    if layout is None:
        layout = cfg.build_layout()

    other = grid.other
    E = grid.ego.num_states
    C = other.num_states
    S = E * C

    collision, goal = _label_masks(cfg, layout, grid)
    terminal = collision | goal
    terminal_2d = terminal.reshape(E, C)

    ego_succ = _ego_successors(cfg, grid)

    # hazard successor spreads, laid out per (ego cell, present hazard cell)
    if other.name == "car":
        hazard_entries = _car_entries(cfg, layout, grid, terminal_2d)
    else:
        hazard_entries = _ped_entries(cfg, layout, grid, terminal_2d)
    absent_idx, absent_w = _appearance_entries(cfg, other)

    matrices = []
    for a in range(len(ACTIONS)):
        e_idx, e_w = ego_succ[a]
        buffers: tuple[list, list, list] = ([], [], [])

        # -- present hazard blocks
        for e_sel, c_sel, h_idx, h_w in hazard_entries:
            rows = e_sel.astype(np.int64) * C + c_sel
            _append_outer(buffers, rows, e_idx[e_sel], e_w[e_sel], h_idx, h_w, C)

        # -- absent hazard column
        e_all = np.arange(E, dtype=np.int64)
        live = ~terminal_2d[:, other.absent_index]
        e_live = e_all[live]
        rows = e_live * C + other.absent_index
        n_app = len(absent_idx)
        _append_outer(
            buffers,
            rows,
            e_idx[e_live],
            e_w[e_live],
            np.broadcast_to(absent_idx, (len(e_live), n_app)),
            np.broadcast_to(absent_w, (len(e_live), n_app)),
            C,
        )

        mat = sp.coo_matrix(
            (
                np.concatenate(buffers[2]),
                (np.concatenate(buffers[0]), np.concatenate(buffers[1])),
            ),
            shape=(S, S),
        ).tocsr()
        mat.sum_duplicates()
        _normalize_rows(mat, expected_live=~terminal, action=a)
        matrices.append(mat)

    return LabelledMdp.from_csr(
        matrices,
        propositions=PROPOSITIONS,
        label_masks={"collision": collision, "goal": goal},
        terminal_states=np.flatnonzero(terminal),
    )


def _car_entries(cfg: ScenarioConfig, layout: Layout, grid: ProductGrid, terminal_2d: np.ndarray):
    """Blocks of (ego cell ids, car cell ids, successor idx (N, 4), weights).

    One block per (route, noise); rows are the non-terminal (ego, car) pairs.
    Noise probabilities are folded into the weights.
    """
    other = grid.other
    u_all = car_rule_accel_table(cfg, layout, grid)
    dt = cfg.dt
    noise_p = 1.0 / len(cfg.car_accel_noise)

    blocks = []
    col_base = 0
    for r, route_name in enumerate(other.routes):
        route = layout.routes[route_name]
        cpos, cvel = other.pos[r], other.vel[r]
        n_block = len(cpos) * len(cvel)
        offset = other.route_offset(r)

        pair_live = ~terminal_2d[:, offset:offset + n_block]
        e_sel, c_loc = np.nonzero(pair_live)
        c_sel = c_loc + offset
        u = u_all[:, col_base:col_base + n_block][e_sel, c_loc]
        v0 = cvel[c_loc % len(cvel)]
        x0 = cpos[c_loc // len(cvel)]

        for noise in cfg.car_accel_noise:
            vn = np.clip(v0 + (u + noise) * dt, 0.0, cfg.car_max_speed)
            xn = x0 + 0.5 * (v0 + vn) * dt
            exited = xn > route.length + _EXIT_SLACK
            vlo, vhi, wvl, wvh, _ = line_weights_vec(cvel, vn)
            plo, phi, wpl, wph, _ = line_weights_vec(cpos, xn)
            idx = np.stack(
                [
                    offset + plo * len(cvel) + vlo,
                    offset + plo * len(cvel) + vhi,
                    offset + phi * len(cvel) + vlo,
                    offset + phi * len(cvel) + vhi,
                ],
                axis=-1,
            ).astype(np.int64)
            w = np.stack([wpl * wvl, wpl * wvh, wph * wvl, wph * wvh], axis=-1)
            # exited cars return to absent with the whole mass
            idx[exited] = other.absent_index
            w[exited] = 0.0
            w[exited, 0] = 1.0
            blocks.append((e_sel, c_sel, idx, w * noise_p))
        col_base += n_block
    return blocks


def _ped_entries(cfg: ScenarioConfig, layout: Layout, grid: ProductGrid, terminal_2d: np.ndarray):
    """Pedestrian analogue of :func:`_car_entries`.

    The walk model does not depend on the ego or on the stored velocity, so
    the spread is computed per cell and tiled over the live pairs.
    """
    other = grid.other
    dt = cfg.dt
    speeds = [max(0.0, cfg.ped_base_speed + d) for d in cfg.ped_speed_variation]
    speed_p = 1.0 / len(speeds)

    blocks = []
    for r, route_name in enumerate(other.routes):
        route = layout.routes[route_name]
        cpos, cvel = other.pos[r], other.vel[r]
        n_block = len(cpos) * len(cvel)
        offset = other.route_offset(r)

        pair_live = ~terminal_2d[:, offset:offset + n_block]
        e_sel, c_loc = np.nonzero(pair_live)
        c_sel = c_loc + offset
        x0 = cpos[c_loc // len(cvel)]

        for s in speeds:
            xn = x0 + s * dt
            exited = xn > route.length + _EXIT_SLACK
            vlo, vhi, wvl, wvh, _ = line_weights_vec(cvel, np.full_like(xn, s))
            plo, phi, wpl, wph, _ = line_weights_vec(cpos, xn)
            idx = np.stack(
                [
                    offset + plo * len(cvel) + vlo,
                    offset + plo * len(cvel) + vhi,
                    offset + phi * len(cvel) + vlo,
                    offset + phi * len(cvel) + vhi,
                ],
                axis=-1,
            ).astype(np.int64)
            w = np.stack([wpl * wvl, wpl * wvh, wph * wvl, wph * wvh], axis=-1)
            idx[exited] = other.absent_index
            w[exited] = 0.0
            w[exited, 0] = 1.0
            blocks.append((e_sel, c_sel, idx, w * speed_p))
    return blocks


def _appearance_entries(cfg: ScenarioConfig, other: ParticipantGrid):
    """Successor spread of the absent pseudo-state (appearance model)."""
    p_appear = cfg.appearance_prob
    idx = [other.absent_index]
    w = [1.0 - p_appear]
    route_p = p_appear / len(other.routes)
    for r in range(len(other.routes)):
        offset = other.route_offset(r)
        cvel = other.vel[r]
        if other.name == "car":
            vel_w = uniform_projection_weights(cvel, 0.0, cfg.car_spawn_speed_max)
        else:
            speeds = [max(0.0, cfg.ped_base_speed + d) for d in cfg.ped_speed_variation]
            vel_w = np.zeros(len(cvel))
            for s in speeds:
                lo, hi, wl, wh, _ = line_weights_vec(cvel, np.array([s]))
                vel_w[lo[0]] += wl[0] / len(speeds)
                vel_w[hi[0]] += wh[0] / len(speeds)
        for j, vw in enumerate(vel_w):
            if vw > 0.0:
                idx.append(offset + 0 * len(cvel) + j)  # spawn at position 0
                w.append(route_p * vw)
    return np.array(idx, dtype=np.int64), np.array(w)


def _normalize_rows(mat: sp.csr_matrix, expected_live: np.ndarray, action: int) -> None:
    sums = np.asarray(mat.sum(axis=1)).ravel()
    has_mass = sums > 0.0
    if not np.array_equal(has_mass, expected_live):
        missing = np.flatnonzero(expected_live & ~has_mass)
        extra = np.flatnonzero(~expected_live & has_mass)
        raise ValueError(
            f"action {action}: row coverage mismatch "
            f"(missing {missing[:5].tolist()}, unexpected {extra[:5].tolist()})"
        )
    off = np.abs(sums[has_mass] - 1.0)
    if off.size and off.max() > 1e-9:
        bad = np.flatnonzero(has_mass)[int(np.argmax(off))]
        raise ValueError(
            f"action {action}: probability mass of state {bad} deviates by {off.max():.3e}"
        )
    scale = np.ones_like(sums)
    scale[has_mass] = 1.0 / sums[has_mass]
    mat.data *= np.repeat(scale, np.diff(mat.indptr))
