"""Numerical engines for PCTL queries on labelled DTMCs.

Every engine returns a vector indexed by state.  Probabilities are exact
zeros and ones on the sets found by graph analysis (:func:`prob01`) and
solved as a linear system elsewhere.  Reachability rewards use ``np.inf``
where the target can be missed with positive probability; conditional
rewards use ``np.nan`` where the conditioning event has probability zero.

Reward convention: the reward accumulated until the first visit to a target
state counts the state rewards of every state *before* the target and the
transition rewards of every step taken, but not the target's own state
reward.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConditioningError, SolverError
from .model import LabeledDtmc, RewardStructure, as_mask


@dataclass(frozen=True)
class SolverConfig:
    """``method`` is ``"direct"``, ``"iterative"`` (Gauss-Seidel) or ``"auto"``.

    ``auto`` picks direct elimination up to ``direct_limit`` unknowns.
    """

    method: str = "auto"
    tolerance: float = 1e-10
    max_iterations: int = 1_000_000
    direct_limit: int = 500

    def __post_init__(self):
        if self.method not in ("auto", "direct", "iterative"):
            raise ValueError(f"unknown solver method {self.method!r}")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")


DEFAULT = SolverConfig()
RewardArg = Union[RewardStructure, str]


# -- graph analysis ---------------------------------------------------------

def _backward_reach(matrix: sp.csr_matrix, start: np.ndarray, through: np.ndarray) -> np.ndarray:
    """States with a positive-probability path into ``start`` whose states
    before the end all lie in ``through``."""
    pred = matrix.T.tocsr()
    seen = start.copy()
    frontier = np.flatnonzero(start)
    while frontier.size:
        cand = np.unique(pred[frontier].indices)
        cand = cand[~seen[cand] & through[cand]]
        seen[cand] = True
        frontier = cand
    return seen


def _prob01(matrix, safe: np.ndarray, target: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    can_reach = _backward_reach(matrix, target, safe)
    s0 = ~can_reach
    s1 = ~_backward_reach(matrix, s0, safe & ~target)
    return s0, s1


def prob01(model: LabeledDtmc, target, safe=None) -> Tuple[frozenset, frozenset]:
    """States reaching ``target`` with probability 0 and with probability 1.

    With ``safe`` given, reachability is through ``safe`` states only
    (the ``safe U target`` problem).
    """
    t = as_mask(model, target)
    s = np.ones(model.n_states, bool) if safe is None else as_mask(model, safe)
    s0, s1 = _prob01(model.matrix, s, t)
    return frozenset(np.flatnonzero(s0).tolist()), frozenset(np.flatnonzero(s1).tolist())


# -- linear solvers ---------------------------------------------------------

def _solve(a: sp.csr_matrix, b: np.ndarray, config: SolverConfig) -> np.ndarray:
    """Solve ``x = a x + b`` for a substochastic ``a`` with spectral radius < 1."""
    n = b.shape[0]
    if n == 0:
        return np.zeros(0)
    system = (sp.identity(n, format="csr") - a).tocsr()
    method = config.method
    if method == "auto":
        method = "direct" if n <= config.direct_limit else "iterative"
    if method == "direct":
        x = spla.spsolve(system.tocsc(), b) if n > 1 else b / system.toarray()[0]
        x = np.atleast_1d(np.asarray(x, dtype=float))
    else:
        x = _gauss_seidel(system, b, config)
    scale = max(1.0, float(np.max(np.abs(x))) if n else 1.0)
    residual = float(np.max(np.abs(system @ x - b))) / scale if n else 0.0
    if not np.all(np.isfinite(x)) or residual > config.tolerance:
        raise SolverError("linear solve did not reach tolerance", residual)
    return x


def _gauss_seidel(system: sp.csr_matrix, b: np.ndarray, config: SolverConfig) -> np.ndarray:
    lower = sp.tril(system, format="csr")
    upper = sp.triu(system, k=1, format="csr")
    x = np.zeros_like(b)
    prev_delta = np.inf
    for _ in range(config.max_iterations):
        x_new = spla.spsolve_triangular(lower, b - upper @ x, lower=True)
        delta = float(np.max(np.abs(x_new - x)))
        x = x_new
        # error ~ delta * rho / (1 - rho), rho estimated from successive updates
        rho = min(delta / prev_delta, 0.999999) if prev_delta > 0 else 0.0
        prev_delta = delta
        if delta * max(1.0, rho / (1.0 - rho)) <= 0.1 * config.tolerance * max(1.0, float(np.max(np.abs(x)))):
            return x
    residual = float(np.max(np.abs(system @ x - b)))
    raise SolverError(f"Gauss-Seidel hit {config.max_iterations} iterations", residual)


def _absorb_value(matrix, unknown: np.ndarray, known_values: np.ndarray,
                  extra: np.ndarray, config: SolverConfig) -> np.ndarray:
    """x = known_values off ``unknown``; on ``unknown``, x = extra + P x."""
    x = known_values.astype(float).copy()
    idx = np.flatnonzero(unknown)
    if idx.size:
        sub = matrix[idx]
        a = sub[:, idx]
        b = extra[idx] + sub @ np.where(unknown, 0.0, known_values)
        x[idx] = _solve(a, b, config)
    return x


# -- probability engines ----------------------------------------------------

def _until(matrix, safe, target, config) -> np.ndarray:
    s0, s1 = _prob01(matrix, safe, target)
    known = s1.astype(float)
    maybe = ~(s0 | s1)
    x = _absorb_value(matrix, maybe, known, np.zeros(len(known)), config)
    return np.clip(x, 0.0, 1.0)


def reach_prob(model: LabeledDtmc, target, config: SolverConfig = DEFAULT) -> np.ndarray:
    """Probability of eventually reaching ``target`` from each state."""
    t = as_mask(model, target)
    return _until(model.matrix, np.ones(model.n_states, bool), t, config)


def until_prob(model: LabeledDtmc, safe, target, config: SolverConfig = DEFAULT) -> np.ndarray:
    """Probability of ``safe U target`` from each state."""
    return _until(model.matrix, as_mask(model, safe), as_mask(model, target), config)


def next_prob(model: LabeledDtmc, target) -> np.ndarray:
    return model.matrix @ as_mask(model, target).astype(float)


def nested_reach_prob(model: LabeledDtmc, first, then, config: SolverConfig = DEFAULT) -> np.ndarray:
    """Probability of ``F (first & F then)``.

    At the first visit to a ``first`` state the path succeeds exactly when
    it later (or immediately) reaches ``then``, so the answer is the
    ``then``-reachability probability evaluated at the first ``first`` hit.
    """
    a = as_mask(model, first)
    y = reach_prob(model, then, config)
    matrix = model.matrix
    can_reach = _backward_reach(matrix, a, np.ones(model.n_states, bool))
    known = np.where(a, y, 0.0)
    unknown = can_reach & ~a
    x = _absorb_value(matrix, unknown, known, np.zeros(model.n_states), config)
    return np.clip(x, 0.0, 1.0)


# -- reward engines ---------------------------------------------------------

def _reward(model: LabeledDtmc, reward: RewardArg) -> RewardStructure:
    return model.reward(reward) if isinstance(reward, str) or reward is None else reward


def bounded_cumulative(model: LabeledDtmc, reward: RewardArg, t: int) -> np.ndarray:
    """Expected reward accumulated over the first ``t`` steps."""
    if t < 0:
        raise ValueError("step bound must be non-negative")
    r = _reward(model, reward).expected_step(model.matrix)
    v = np.zeros(model.n_states)
    for _ in range(int(t)):
        v = r + model.matrix @ v
    return v


def _reach_reward(matrix, step_reward, target, config) -> np.ndarray:
    n = matrix.shape[0]
    _, s1 = _prob01(matrix, np.ones(n, bool), target)
    x = np.full(n, np.inf)
    x[target] = 0.0
    unknown = s1 & ~target
    idx = np.flatnonzero(unknown)
    if idx.size:
        x[idx] = _solve(matrix[idx][:, idx], step_reward[idx], config)
    return x


def reach_reward(model: LabeledDtmc, reward: RewardArg, target,
                 config: SolverConfig = DEFAULT) -> np.ndarray:
    """Expected reward until the first ``target`` visit (``inf`` if it may be missed)."""
    r = _reward(model, reward)
    return _reach_reward(model.matrix, r.expected_step(model.matrix), as_mask(model, target), config)


def _conditioned(matrix, y: np.ndarray, live: np.ndarray, target: np.ndarray) -> sp.csr_matrix:
    """Doob transform P~(s,s') = P(s,s') y(s') / y(s) on live non-target rows."""
    rows = np.flatnonzero(live & ~target)
    sub = matrix[rows].multiply(y[np.newaxis, :]).tocsr()
    sums = np.asarray(sub.sum(axis=1)).ravel()
    sub = sp.diags(1.0 / sums) @ sub
    sel = sp.csr_matrix((np.ones(rows.size), (rows, np.arange(rows.size))),
                        shape=(matrix.shape[0], rows.size))
    return (sel @ sub).tocsr()


def _conditional_reach_reward(matrix, reward: RewardStructure, target, config) -> np.ndarray:
    n = matrix.shape[0]
    s0, _ = _prob01(matrix, np.ones(n, bool), target)
    y = _until(matrix, np.ones(n, bool), target, config)
    live = ~s0
    ptilde = _conditioned(matrix, y, live, target)
    step = reward.state_rewards + np.asarray(
        ptilde.multiply(reward.transition_rewards).sum(axis=1)).ravel()
    x = np.full(n, np.nan)
    x[target] = 0.0
    idx = np.flatnonzero(live & ~target)
    if idx.size:
        x[idx] = _solve(ptilde[idx][:, idx], step[idx], config)
    return x


def conditional_reach_reward(model: LabeledDtmc, reward: RewardArg, target,
                             config: SolverConfig = DEFAULT) -> np.ndarray:
    """Expected reward until ``target`` given that ``target`` is eventually reached.

    Entries are ``nan`` where the target is unreachable.
    """
    return _conditional_reach_reward(model.matrix, _reward(model, reward),
                                     as_mask(model, target), config)


def _nested_product(model: LabeledDtmc, reward: RewardStructure, a: np.ndarray, b: np.ndarray):
    """Product of the chain with the two-phase monitor for ``F (a & F b)``.

    Product state ``q * n + s`` records whether an ``a`` state has been seen
    (``q = 1``) up to and including ``s``.  Accepting states are ``(s, 1)``
    with ``s`` in ``b``.
    """
    n = model.n_states
    coo = model.matrix.tocoo()
    rows, cols, vals = [], [], []
    for q in (0, 1):
        q_next = np.where(a[coo.col], 1, q) if q == 0 else np.ones_like(coo.col)
        rows.append(q * n + coo.row)
        cols.append(q_next * n + coo.col)
        vals.append(coo.data)
    rows, cols, vals = map(np.concatenate, (rows, cols, vals))
    matrix = sp.csr_matrix((vals, (rows, cols)), shape=(2 * n, 2 * n))
    trc = reward.transition_rewards.tocoo()
    # transition rewards follow the underlying transition in both phases
    t_rows, t_cols, t_vals = [], [], []
    for q in (0, 1):
        q_next = np.where(a[trc.col], 1, q) if q == 0 else np.ones_like(trc.col)
        t_rows.append(q * n + trc.row)
        t_cols.append(q_next * n + trc.col)
        t_vals.append(trc.data)
    rt = sp.csr_matrix((np.concatenate(t_vals), (np.concatenate(t_rows), np.concatenate(t_cols))),
                       shape=(2 * n, 2 * n))
    prod_reward = RewardStructure(reward.name, np.tile(reward.state_rewards, 2), rt)
    accept = np.concatenate([np.zeros(n, bool), b])
    entry = np.where(a, n, 0) + np.arange(n)
    return matrix, prod_reward, accept, entry


def nested_reach_reward(model: LabeledDtmc, reward: RewardArg, first, then,
                        conditional: bool = True, config: SolverConfig = DEFAULT) -> np.ndarray:
    """Expected reward until ``F (first & F then)`` is fulfilled.

    The path formula is fulfilled at the first ``then`` visit at or after the
    first ``first`` visit; reward is accumulated up to that point.  With
    ``conditional`` the expectation is over paths that fulfil it (``nan``
    where none do), otherwise the strict semantics gives ``inf`` wherever
    fulfilment is not almost sure.
    """
    r = _reward(model, reward)
    a, b = as_mask(model, first), as_mask(model, then)
    matrix, prod_reward, accept, entry = _nested_product(model, r, a, b)
    if conditional:
        x = _conditional_reach_reward(matrix, prod_reward, accept, config)
    else:
        x = _reach_reward(matrix, prod_reward.expected_step(matrix), accept, config)
    return x[entry]


def value_at(vec: np.ndarray, state: int, what: str = "query") -> float:
    """Scalar from an engine vector, raising on a null conditioning event."""
    v = float(vec[state])
    if np.isnan(v):
        raise ConditioningError(f"{what}: conditioning on null event at state {state}")
    return v
