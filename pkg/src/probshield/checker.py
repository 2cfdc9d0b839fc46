"""Maximum reachability probabilities by value iteration.

``max_reach`` computes P(s, a) = the maximum, over all policies, of the
probability of satisfying the reachability problem after taking action ``a``
in state ``s``.  Sweeps are Jacobi style (the new table is computed entirely
from the previous one) so results are deterministic regardless of evaluation
order.  Target and avoid states are re-pinned on every sweep, which is
equivalent at the fixed point and prevents floating-point drift.

``evaluate_policy`` is the exact linear-algebra oracle used to test shields:
it solves the fixed point of a fixed memoryless policy directly instead of
iterating.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .ltl import ProblemKind, ReachabilityProblem
from .mdp import LabelledMdp, validate

__all__ = ["ProbTable", "CheckerConfig", "max_reach", "evaluate_policy", "residual"]

# Direct dense solves below this state count; sparse/iterative above.
_DENSE_SOLVE_LIMIT = 600


@dataclass
class ProbTable:
    """Per-(state, action) satisfaction probabilities plus run metadata."""

    values: np.ndarray  # (num_states, num_actions), entries in [0, 1]
    iterations_run: int
    final_residual: float
    converged: bool

    @property
    def num_states(self) -> int:
        return self.values.shape[0]

    @property
    def num_actions(self) -> int:
        return self.values.shape[1]

    def state_values(self) -> np.ndarray:
        """max_a P(s, a) per state."""
        return self.values.max(axis=1)


@dataclass(frozen=True)
class CheckerConfig:
    tolerance: float = 1e-6
    max_iterations: int = 10_000

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


def residual(prev: ProbTable, next_: ProbTable) -> float:
    """Sup-norm of the elementwise difference between two tables."""
    if prev.values.shape != next_.values.shape:
        raise ValueError(
            f"table shapes differ: {prev.values.shape} vs {next_.values.shape}"
        )
    return float(np.max(np.abs(next_.values - prev.values)))


def _check_problem(mdp: LabelledMdp, problem: ReachabilityProblem) -> None:
    for name, states in (("target", problem.target_states), ("avoid", problem.avoid_states)):
        for s in states:
            if not (0 <= s < mdp.num_states):
                raise ValueError(f"{name} state {s} outside MDP with {mdp.num_states} states")


def _iterate(
    mdp: LabelledMdp,
    pin_one: np.ndarray,
    pin_zero: np.ndarray,
    combine: Callable[[np.ndarray], np.ndarray],
    cfg: CheckerConfig,
) -> tuple[np.ndarray, int, float]:
    """Run pinned value iteration; ``combine`` folds the (S, A) table to (S,).

    Both the maximizing and the minimizing iteration start from the
    characteristic vector of the pinned-one set, so the iterates ascend
    monotonically to the least fixed point; monotonicity and boundedness are
    asserted on every sweep.
    """
    S, A = mdp.num_states, mdp.num_actions
    mats = [mdp.transition_matrix(a) for a in range(A)]
    terminal = mdp.terminal_mask()

    table = np.zeros((S, A))
    table[pin_one, :] = 1.0

    iterations = 0
    res = np.inf
    for iterations in range(1, cfg.max_iterations + 1):
        v = combine(table)
        nxt = np.empty_like(table)
        for a in range(A):
            nxt[:, a] = mats[a] @ v
        # absorbing convention: terminal states keep their current value
        if terminal.any():
            nxt[terminal, :] = table[terminal, :]
        nxt[pin_one, :] = 1.0
        nxt[pin_zero, :] = 0.0

        if np.min(nxt - table) < -1e-12:
            raise AssertionError("value iteration lost monotonicity")
        if nxt.min() < -1e-12 or nxt.max() > 1.0 + 1e-12:
            raise AssertionError("value iteration left [0, 1]")
        np.clip(nxt, 0.0, 1.0, out=nxt)

        res = float(np.max(np.abs(nxt - table)))
        table = nxt
        if res < cfg.tolerance:
            break
    return table, iterations, res


def max_reach(
    mdp: LabelledMdp,
    problem: ReachabilityProblem,
    cfg: CheckerConfig = CheckerConfig(),
) -> ProbTable:
    """Maximum probability of satisfying ``problem`` for every (s, a).

    REACH / CONSTRAINED_REACH maximize the probability of hitting the target
    set while avoid states are pinned to 0.  SAFE is solved through the
    standard duality: the minimal probability of ever reaching the avoid set
    is computed with a minimizing iteration, and the result is its
    complement.

    If the residual does not fall below ``cfg.tolerance`` the table is still
    returned, with ``converged=False``; the caller decides.
    """
    report = validate(mdp)
    if not report.is_empty():
        raise ValueError(f"refusing to check an invalid MDP: {report.summary()}")
    _check_problem(mdp, problem)

    S = mdp.num_states
    target = np.zeros(S, dtype=bool)
    avoid = np.zeros(S, dtype=bool)
    if problem.target_states:
        target[list(problem.target_states)] = True
    if problem.avoid_states:
        avoid[list(problem.avoid_states)] = True

    if problem.kind is ProblemKind.SAFE:
        # minimizing iteration toward the avoid set, then complement
        table, iterations, res = _iterate(
            mdp, pin_one=avoid, pin_zero=np.zeros(S, dtype=bool),
            combine=lambda t: t.min(axis=1), cfg=cfg,
        )
        values = 1.0 - table
    else:
        table, iterations, res = _iterate(
            mdp, pin_one=target, pin_zero=avoid,
            combine=lambda t: t.max(axis=1), cfg=cfg,
        )
        values = table

    return ProbTable(
        values=values,
        iterations_run=iterations,
        final_residual=res,
        converged=res < cfg.tolerance,
    )


def _policy_matrix(mdp: LabelledMdp, policy: np.ndarray) -> sp.csr_matrix:
    """Row s of the result is the successor distribution of (s, policy[s])."""
    S = mdp.num_states
    rows, cols, vals = [], [], []
    for a in range(mdp.num_actions):
        sel = np.flatnonzero(policy == a)
        if sel.size == 0:
            continue
        m = mdp.transition_matrix(a)
        sub = m[sel]
        coo = sub.tocoo()
        rows.append(sel[coo.row])
        cols.append(coo.col)
        vals.append(coo.data)
    if rows:
        return sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(S, S),
        ).tocsr()
    return sp.csr_matrix((S, S))


def _can_reach(P: sp.csr_matrix, targets: np.ndarray, forbidden: np.ndarray) -> np.ndarray:
    """States with a positive-probability path to ``targets`` avoiding ``forbidden``."""
    reach = targets.copy()
    frontier = targets.copy()
    while frontier.any():
        preds = np.asarray(P @ frontier.astype(np.float64)) > 0.0
        new = preds & ~reach & ~forbidden
        reach |= new
        frontier = new
    return reach


def _reach_under_policy(
    mdp: LabelledMdp,
    policy: np.ndarray,
    target: np.ndarray,
    zero: np.ndarray,
) -> np.ndarray:
    """Exact per-state probability of reaching ``target`` before ``zero``."""
    S = mdp.num_states
    P = _policy_matrix(mdp, policy)
    # terminal states self-loop; their reach probability is their pin value
    pinned = target | zero
    terminal = mdp.terminal_mask()

    # Prob0 precomputation: states that cannot reach the target have value 0,
    # which removes the singular block of (I - P) created by safe cycles.
    can = _can_reach(P, target, forbidden=zero)
    v = np.zeros(S)
    v[target] = 1.0
    free = can & ~pinned & ~terminal
    idx = np.flatnonzero(free)
    if idx.size == 0:
        return v

    b = np.asarray(P[idx][:, np.flatnonzero(target)].sum(axis=1)).ravel()
    # inflow into other value-carrying non-free states is zero by construction
    A_free = P[idx][:, idx]
    if idx.size <= _DENSE_SOLVE_LIMIT:
        M = np.eye(idx.size) - A_free.toarray()
        try:
            sol = np.linalg.solve(M, b)
        except np.linalg.LinAlgError:
            warnings.warn("direct policy-evaluation solve was singular; falling back to iteration")
            sol = _power_solve(A_free, b)
    else:
        M = sp.identity(idx.size, format="csr") - A_free.tocsr()
        try:
            sol = spla.spsolve(M, b)
        except Exception:
            warnings.warn("sparse policy-evaluation solve failed; falling back to iteration")
            sol = _power_solve(A_free, b)
    v[idx] = np.clip(sol, 0.0, 1.0)
    return v


def _power_solve(A: sp.spmatrix, b: np.ndarray, tol: float = 1e-10, max_iter: int = 1_000_000) -> np.ndarray:
    x = np.zeros_like(b)
    for _ in range(max_iter):
        nxt = A @ x + b
        if np.max(np.abs(nxt - x)) < tol:
            return nxt
        x = nxt
    warnings.warn("iterative policy evaluation did not reach tolerance")
    return x


def evaluate_policy(
    mdp: LabelledMdp,
    problem: ReachabilityProblem,
    policy: np.ndarray | Sequence[int] | Callable[[int], int],
) -> np.ndarray:
    """Exact per-state satisfaction probability of a fixed memoryless policy.

    Solves v = P_pi v with v pinned to 1 on the target set and 0 on the
    avoid set; for SAFE problems the complement of the reach-avoid
    probability is returned.
    """
    report = validate(mdp)
    if not report.is_empty():
        raise ValueError(f"refusing to evaluate on an invalid MDP: {report.summary()}")
    _check_problem(mdp, problem)

    S = mdp.num_states
    if callable(policy):
        pol = np.array([policy(s) for s in range(S)], dtype=np.int64)
    else:
        pol = np.asarray(policy, dtype=np.int64)
        if pol.shape != (S,):
            raise ValueError(f"policy shape {pol.shape} != ({S},)")
    if pol.min() < 0 or pol.max() >= mdp.num_actions:
        raise ValueError("policy selects out-of-range actions")

    target = np.zeros(S, dtype=bool)
    avoid = np.zeros(S, dtype=bool)
    if problem.target_states:
        target[list(problem.target_states)] = True
    if problem.avoid_states:
        avoid[list(problem.avoid_states)] = True

    if problem.kind is ProblemKind.SAFE:
        reach_bad = _reach_under_policy(mdp, pol, target=avoid, zero=np.zeros(S, dtype=bool))
        return 1.0 - reach_bad
    return _reach_under_policy(mdp, pol, target=target, zero=avoid)
