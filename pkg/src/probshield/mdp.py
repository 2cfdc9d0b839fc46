"""Finite labelled MDP with sparse transitions.

The MDP is the shared substrate of the toolkit: the model checker sweeps it,
the intersection builder produces it, and the learner treats it as a
generative model in tests.  States and actions are dense integer indices.
Transitions are stored as one scipy CSR matrix per action; states listed in
``terminal_states`` carry no outgoing rows and are treated as absorbing
(implicit self-loop).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

#: Outgoing probability mass of every non-terminal (s, a) must equal 1
#: within this tolerance.
MASS_TOLERANCE = 1e-9


@dataclass(frozen=True)
class ValidationReport:
    """Everything wrong with an MDP; empty report means the MDP is valid."""

    bad_mass: list[tuple[int, int, float]] = field(default_factory=list)
    dangling: list[tuple[int, int, int]] = field(default_factory=list)
    undeclared_labels: list[tuple[int, str]] = field(default_factory=list)
    terminal_with_outgoing: list[int] = field(default_factory=list)
    invalid_probability: list[tuple[int, int, int, float]] = field(default_factory=list)

    def is_empty(self) -> bool:
        return not (
            self.bad_mass
            or self.dangling
            or self.undeclared_labels
            or self.terminal_with_outgoing
            or self.invalid_probability
        )

    def summary(self) -> str:
        if self.is_empty():
            return "valid"
        parts = []
        if self.bad_mass:
            parts.append(f"{len(self.bad_mass)} state-action pairs with mass != 1")
        if self.dangling:
            parts.append(f"{len(self.dangling)} dangling successor indices")
        if self.undeclared_labels:
            parts.append(f"{len(self.undeclared_labels)} undeclared labels")
        if self.terminal_with_outgoing:
            parts.append(f"{len(self.terminal_with_outgoing)} terminal states with outgoing transitions")
        if self.invalid_probability:
            parts.append(f"{len(self.invalid_probability)} probabilities outside [0,1]")
        return "; ".join(parts)


class LabelledMdp:
    """Explicit finite MDP with atomic-proposition labels per state.

    Immutable after construction; safe for concurrent reads.  Use
    :meth:`from_records` for record-style input (tolerates out-of-range
    successor indices so :func:`validate` can report them) or
    :meth:`from_csr` when transition matrices are already assembled.
    """

    def __init__(
        self,
        num_states: int,
        num_actions: int,
        matrices: Sequence[sp.csr_matrix],
        propositions: Sequence[str],
        label_masks: Mapping[str, np.ndarray],
        terminal_states: Iterable[int] = (),
        invalid_records: Sequence[tuple[int, int, int, float]] = (),
    ):
        if num_states <= 0 or num_actions <= 0:
            raise ValueError("num_states and num_actions must be positive")
        if len(matrices) != num_actions:
            raise ValueError("need one transition matrix per action")
        self.num_states = int(num_states)
        self.num_actions = int(num_actions)
        self._mats = [m.tocsr() for m in matrices]
        for m in self._mats:
            if m.shape != (num_states, num_states):
                raise ValueError(f"transition matrix shape {m.shape} != ({num_states}, {num_states})")
        self.propositions = tuple(propositions)
        seen = set()
        for name in self.propositions:
            if not name:
                raise ValueError("proposition names must be nonempty")
            if name in seen:
                raise ValueError(f"duplicate proposition {name!r}")
            seen.add(name)
        self._label_masks = {
            name: np.asarray(mask, dtype=bool) for name, mask in label_masks.items()
        }
        for name, mask in self._label_masks.items():
            if mask.shape != (num_states,):
                raise ValueError(f"label mask for {name!r} has shape {mask.shape}")
        self.terminal_states = frozenset(int(s) for s in terminal_states)
        # Records whose successor index fell outside [0, num_states); kept
        # aside so validate() can report them instead of crashing here.
        self._invalid_records = list(invalid_records)

    # -- constructors --------------------------------------------------

    @classmethod
    def from_records(
        cls,
        num_states: int,
        num_actions: int,
        transitions: Iterable[tuple[int, int, int, float]],
        propositions: Sequence[str] = (),
        labels: Mapping[int, Iterable[str]] | None = None,
        terminal_states: Iterable[int] = (),
    ) -> "LabelledMdp":
        """Build from (state, action, successor, probability) records."""
        rows: list[list[int]] = [[] for _ in range(num_actions)]
        cols: list[list[int]] = [[] for _ in range(num_actions)]
        vals: list[list[float]] = [[] for _ in range(num_actions)]
        invalid = []
        for s, a, sp_, p in transitions:
            s, a, sp_ = int(s), int(a), int(sp_)
            if not (0 <= s < num_states) or not (0 <= a < num_actions):
                raise IndexError(f"transition source ({s}, {a}) out of range")
            if not (0 <= sp_ < num_states):
                invalid.append((s, a, sp_, float(p)))
                continue
            rows[a].append(s)
            cols[a].append(sp_)
            vals[a].append(float(p))
        mats = [
            sp.coo_matrix(
                (vals[a], (rows[a], cols[a])), shape=(num_states, num_states)
            ).tocsr()
            for a in range(num_actions)
        ]
        prop_tuple = tuple(propositions)
        masks = {name: np.zeros(num_states, dtype=bool) for name in prop_tuple}
        extra: dict[str, np.ndarray] = {}
        if labels:
            for s, names in labels.items():
                for name in names:
                    if name in masks:
                        masks[name][s] = True
                    else:
                        extra.setdefault(name, np.zeros(num_states, dtype=bool))[s] = True
        masks.update(extra)  # undeclared names kept so validate() can flag them
        return cls(
            num_states,
            num_actions,
            mats,
            prop_tuple,
            masks,
            terminal_states,
            invalid_records=invalid,
        )

    @classmethod
    def from_csr(
        cls,
        matrices: Sequence[sp.csr_matrix],
        propositions: Sequence[str],
        label_masks: Mapping[str, np.ndarray],
        terminal_states: Iterable[int] = (),
    ) -> "LabelledMdp":
        """Build from pre-assembled per-action CSR matrices (fast path)."""
        num_states = matrices[0].shape[0]
        return cls(num_states, len(matrices), matrices, propositions, label_masks, terminal_states)

    # -- queries --------------------------------------------------------

    def transition_matrix(self, a: int) -> sp.csr_matrix:
        return self._mats[a]

    def successors(self, s: int, a: int) -> list[tuple[int, float]]:
        """Sparse successor distribution of (s, a); terminal states self-loop."""
        if not (0 <= s < self.num_states):
            raise IndexError(f"state {s} out of range [0, {self.num_states})")
        if not (0 <= a < self.num_actions):
            raise IndexError(f"action {a} out of range [0, {self.num_actions})")
        if s in self.terminal_states:
            return [(s, 1.0)]
        m = self._mats[a]
        lo, hi = m.indptr[s], m.indptr[s + 1]
        return [(int(j), float(p)) for j, p in zip(m.indices[lo:hi], m.data[lo:hi])]

    def labels_of(self, s: int) -> set[str]:
        if not (0 <= s < self.num_states):
            raise IndexError(f"state {s} out of range [0, {self.num_states})")
        return {name for name, mask in self._label_masks.items() if mask[s]}

    def label_mask(self, name: str) -> np.ndarray:
        """Boolean per-state mask for one proposition (all-False if absent)."""
        mask = self._label_masks.get(name)
        if mask is None:
            return np.zeros(self.num_states, dtype=bool)
        return mask

    def states_with(self, name: str) -> frozenset[int]:
        return frozenset(np.flatnonzero(self.label_mask(name)).tolist())

    def terminal_mask(self) -> np.ndarray:
        mask = np.zeros(self.num_states, dtype=bool)
        if self.terminal_states:
            mask[list(self.terminal_states)] = True
        return mask

    # -- serialization ---------------------------------------------------

    def to_json_dict(self) -> dict:
        records = list(self._invalid_records)
        for a, m in enumerate(self._mats):
            coo = m.tocoo()
            records.extend(
                (int(s), a, int(j), float(p))
                for s, j, p in zip(coo.row, coo.col, coo.data)
            )
        records.sort()
        return {
            "num_states": self.num_states,
            "num_actions": self.num_actions,
            "propositions": list(self.propositions),
            "labels": {
                str(s): sorted(self.labels_of(s))
                for s in range(self.num_states)
                if self.labels_of(s)
            },
            "terminal_states": sorted(self.terminal_states),
            "transitions": [
                {"s": s, "a": a, "sp": j, "p": p} for s, a, j, p in records
            ],
        }

    def to_json(self) -> str:
        # json round-trips doubles exactly (shortest-repr encoding), which is
        # stronger than a fixed significant-digit count.
        return json.dumps(self.to_json_dict(), indent=1)

    @classmethod
    def from_json_dict(cls, doc: dict) -> "LabelledMdp":
        labels = {int(s): names for s, names in doc.get("labels", {}).items()}
        return cls.from_records(
            doc["num_states"],
            doc["num_actions"],
            [(r["s"], r["a"], r["sp"], r["p"]) for r in doc["transitions"]],
            propositions=doc.get("propositions", ()),
            labels=labels,
            terminal_states=doc.get("terminal_states", ()),
        )

    @classmethod
    def from_json(cls, text: str) -> "LabelledMdp":
        return cls.from_json_dict(json.loads(text))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path) -> "LabelledMdp":
        with open(path) as fh:
            return cls.from_json(fh.read())


def validate(mdp: LabelledMdp) -> ValidationReport:
    """Check probability mass, successor ranges and label declarations."""
    bad_mass: list[tuple[int, int, float]] = []
    invalid_prob: list[tuple[int, int, int, float]] = []
    terminal = mdp.terminal_mask()
    for a in range(mdp.num_actions):
        m = mdp.transition_matrix(a)
        mass = np.asarray(m.sum(axis=1)).ravel()
        bad = np.flatnonzero(np.abs(mass - 1.0) > MASS_TOLERANCE)
        for s in bad:
            if terminal[s]:
                continue  # reported separately if mass > 0
            bad_mass.append((int(s), a, float(mass[s])))
        coo = m.tocoo()
        out = (coo.data < 0.0) | (coo.data > 1.0 + MASS_TOLERANCE)
        for s, j, p in zip(coo.row[out], coo.col[out], coo.data[out]):
            invalid_prob.append((int(s), a, int(j), float(p)))

    dangling = [(s, a, j) for s, a, j, _ in mdp._invalid_records]

    terminal_with_out = []
    for s in sorted(mdp.terminal_states):
        if any(
            mdp.transition_matrix(a).indptr[s] != mdp.transition_matrix(a).indptr[s + 1]
            for a in range(mdp.num_actions)
        ):
            terminal_with_out.append(s)

    declared = set(mdp.propositions)
    undeclared = []
    for name in mdp._label_masks:
        if name not in declared:
            for s in np.flatnonzero(mdp._label_masks[name]):
                undeclared.append((int(s), name))

    return ValidationReport(
        bad_mass=bad_mass,
        dangling=dangling,
        undeclared_labels=undeclared,
        terminal_with_outgoing=terminal_with_out,
        invalid_probability=invalid_prob,
    )
