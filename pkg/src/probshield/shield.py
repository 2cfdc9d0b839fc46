"""Action shields derived from model-checking results.

A shield pairs a probability table P(s, a) with a threshold: an action is
acceptable in a state when its satisfaction probability clears the threshold
(strict inequality), optionally after subtracting a conservatism margin that
accounts for discretization error.  Continuous states are handled by
multilinear interpolation over the shield's grid, and several single-hazard
shields compose by intersecting their acceptable sets, falling back to a
designated always-safe action when the intersection is empty.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .checker import ProbTable
from .grids import ParticipantGrid, ProductGrid

__all__ = [
    "Shield",
    "CompositeShield",
    "acceptable_actions",
    "safest_policy",
    "interpolate",
    "compose",
    "save_bundle",
    "load_bundle",
]


class QueryStats:
    """Mutable counters attached to an otherwise immutable shield."""

    __slots__ = ("queries", "clamped")

    def __init__(self):
        self.queries = 0
        self.clamped = 0


def _participant_tuple(phys) -> tuple[str | None, float, float]:
    return (phys.route, phys.position, phys.velocity)


@dataclass(frozen=True)
class Shield:
    """Threshold monitor over one model-checking result.

    ``margin`` is subtracted from interpolated/raw probabilities before the
    threshold comparison; the safest policy always uses raw probabilities.
    """

    prob: ProbTable
    lam: float
    margin: float = 0.0
    grid: ProductGrid | None = None
    stats: QueryStats = field(default_factory=QueryStats, compare=False, repr=False)

    def __post_init__(self):
        if not (0.0 < self.lam < 1.0):
            raise ValueError(f"lambda must be in (0, 1), got {self.lam}")
        if self.margin < 0.0:
            raise ValueError(f"margin must be >= 0, got {self.margin}")
        if self.lam + self.margin >= 1.0:
            raise ValueError("lambda + margin must stay below 1")

    @property
    def num_actions(self) -> int:
        return self.prob.num_actions

    # -- discrete-state queries ------------------------------------------

    def acceptable_actions(self, s: int) -> set[int]:
        row = self.prob.values[s]
        return set(np.flatnonzero(row - self.margin > self.lam).tolist())

    def safest_policy(self) -> np.ndarray:
        """argmax_a P(s, a) per state; ties resolved to the lowest index."""
        return np.argmax(self.prob.values, axis=1)

    # -- continuous-state queries ------------------------------------------

    def monitored_participant(self, ts):
        if self.grid is None:
            raise ValueError("shield has no grid; continuous queries unavailable")
        return getattr(ts, self.grid.other.name)

    def action_probs(self, ts) -> np.ndarray:
        """Interpolated P(s_cont, a) for every action."""
        other = self.monitored_participant(ts)
        idx, w, clamped = self.grid.interp_pair(
            _participant_tuple(ts.ego), _participant_tuple(other)
        )
        self.stats.queries += 1
        if clamped:
            self.stats.clamped += 1
        return w @ self.prob.values[idx]

    def acceptable_actions_continuous(self, ts) -> set[int]:
        probs = self.action_probs(ts)
        return set(np.flatnonzero(probs - self.margin > self.lam).tolist())

    def safest_action_continuous(self, ts) -> int:
        return int(np.argmax(self.action_probs(ts)))


def acceptable_actions(shield: Shield, s: int) -> set[int]:
    """Actions whose (margin-reduced) probability strictly exceeds lambda."""
    return shield.acceptable_actions(s)


def safest_policy(shield: Shield) -> np.ndarray:
    return shield.safest_policy()


def interpolate(grid: ProductGrid, prob: ProbTable, s_cont, a: int) -> float:
    """Multilinearly interpolated P(s_cont, a) on a joint grid."""
    other = getattr(s_cont, grid.other.name)
    idx, w, _ = grid.interp_pair(
        _participant_tuple(s_cont.ego), _participant_tuple(other)
    )
    return float(w @ prob.values[idx, a])


@dataclass(frozen=True)
class CompositeShield:
    """Intersection of per-hazard shields with a hard fallback action.

    A part whose monitored participant is absent imposes no constraint.  An
    empty intersection yields the singleton fallback action (hard braking in
    the intersection scenario), so composite queries never return an empty
    set.
    """

    parts: tuple[Shield, ...]
    fallback_action: int

    def __post_init__(self):
        if not self.parts:
            raise ValueError("composite shield needs at least one part")
        counts = {p.num_actions for p in self.parts}
        if len(counts) != 1:
            raise ValueError(f"parts disagree on the action space: {counts}")
        if not (0 <= self.fallback_action < self.parts[0].num_actions):
            raise ValueError("fallback action out of range")

    @property
    def num_actions(self) -> int:
        return self.parts[0].num_actions

    def acceptable(self, ts) -> set[int]:
        allowed = set(range(self.num_actions))
        for part in self.parts:
            if part.monitored_participant(ts).is_absent:
                continue
            allowed &= part.acceptable_actions_continuous(ts)
        if not allowed:
            return {self.fallback_action}
        return allowed

    def fallback(self, ts) -> int:
        return self.fallback_action


def compose(cs: CompositeShield, s_cont) -> set[int]:
    """Acceptable actions of the composite shield at a continuous state."""
    return cs.acceptable(s_cont)


# -- bundle files ----------------------------------------------------------


def save_bundle(path, shield: Shield, extra_meta: dict | None = None) -> None:
    """Persist grid breakpoints, probability table, lambda and margin together."""
    if shield.grid is None:
        raise ValueError("only grid-backed shields are saved as bundles")
    meta = {
        "format": "prob-shield-bundle-v1",
        "lam": shield.lam,
        "margin": shield.margin,
        "iterations_run": shield.prob.iterations_run,
        "final_residual": shield.prob.final_residual,
        "converged": shield.prob.converged,
        "ego": shield.grid.ego.meta(),
        "other": shield.grid.other.meta(),
    }
    if extra_meta:
        meta["extra"] = extra_meta
    arrays = {"prob_values": shield.prob.values}
    arrays.update(shield.grid.ego.to_arrays("ego"))
    arrays.update(shield.grid.other.to_arrays("other"))
    np.savez_compressed(path, meta=np.array(json.dumps(meta)), **arrays)


def load_bundle(path) -> Shield:
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        if meta.get("format") != "prob-shield-bundle-v1":
            raise ValueError(f"{path} is not a shield bundle")
        ego = ParticipantGrid.from_arrays(meta["ego"], data, "ego")
        other = ParticipantGrid.from_arrays(meta["other"], data, "other")
        prob = ProbTable(
            values=np.asarray(data["prob_values"]),
            iterations_run=meta["iterations_run"],
            final_residual=meta["final_residual"],
            converged=meta["converged"],
        )
    return Shield(prob=prob, lam=meta["lam"], margin=meta["margin"], grid=ProductGrid(ego, other))
