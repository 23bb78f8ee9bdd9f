"""Model generators and independent reference computations shared by the tests."""
from __future__ import annotations

import itertools
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from depcheck.estimation import MissionStage, RiskMap, build_product
from depcheck.model import LabeledDtmc, RewardStructure

APS = ("a", "b", "c")


def dtmc(rows: Sequence[Sequence[float]], labels: Sequence[Iterable[str]], initial: int = 0,
         rewards: Optional[Dict[str, RewardStructure]] = None, names=None, aps=None) -> LabeledDtmc:
    p = np.asarray(rows, dtype=float)
    n = p.shape[0]
    return LabeledDtmc(names or [f"s{i}" for i in range(n)], initial, sp.csr_matrix(p),
                       [frozenset(x) for x in labels], rewards or {},
                       aps=set(aps) if aps is not None else None, macros={})


def unit_steps(n: int, name: str = "step") -> RewardStructure:
    return RewardStructure.from_maps(name, n, {i: 1.0 for i in range(n)})


def mission_chain(l_mis: float) -> LabeledDtmc:
    """k0 --1/l--> k1 (absorbing); one unit of reward per k0-outgoing transition."""
    q = 1.0 / l_mis
    step = RewardStructure.from_maps("step", 2, None, {(0, 0): 1.0, (0, 1): 1.0})
    return dtmc([[1 - q, q], [0, 1]], [{"progressing"}, {"terminated"}],
                rewards={"step": step}, names=["k0", "k1"], aps={"progressing", "terminated"})


def random_dtmc(rng: np.random.Generator, n: int, absorbing: int = 1, max_out: int = 3,
                p_label: float = 0.35, min_p: float = 0.05, rewards: bool = True,
                initial: Optional[int] = None) -> LabeledDtmc:
    """Random chain in which every state can reach one of the absorbing states.

    States ``0 .. absorbing-1`` are absorbing; every other state has an edge to
    a lower-numbered state so absorption is certain.
    """
    absorbing = max(1, min(absorbing, n))
    p = np.zeros((n, n))
    for i in range(n):
        if i < absorbing:
            p[i, i] = 1.0
            continue
        k = int(rng.integers(1, max_out + 1))
        cols = set(rng.choice(n, size=min(k, n), replace=False).tolist())
        cols.add(int(rng.integers(0, i)))
        cols = sorted(cols)
        w = rng.random(len(cols)) + min_p
        p[i, cols] = w / w.sum()
    labels = [{a for a in APS if rng.random() < p_label} for _ in range(n)]
    rw = {}
    if rewards:
        rs = np.round(rng.random(n) * 3, 3)
        rt = np.where(p > 0, np.round(rng.random((n, n)) * 2, 3), 0.0)
        rw["r"] = RewardStructure("r", rs, sp.csr_matrix(rt))
    init = int(rng.integers(0, n)) if initial is None else initial
    return dtmc(p, labels, init, rw, aps=APS)


def random_product(rng: np.random.Generator, l_mis: Optional[float] = None,
                   crash_scale: float = 0.1) -> LabeledDtmc:
    """Product model from a random birth-death-like failure chain (m = 3)."""
    riskmap = RiskMap()
    k = riskmap.m + 2
    p1 = np.zeros((k, k))
    for i in range(k - 1):
        w = rng.random(k) * (rng.random(k) < 0.7)
        w[i] += 0.2
        if i < k - 2:
            w[k - 1] *= crash_scale
        p1[i] = w / w.sum()
    p1[k - 1, k - 1] = 1.0
    l = float(rng.uniform(1.0, 80.0)) if l_mis is None else l_mis
    return build_product(p1, MissionStage(l), riskmap)


# -- brute-force reference: exhaustive path-mass propagation ---------------

def enumerate_until(model: LabeledDtmc, safe: np.ndarray, target: np.ndarray,
                    start: int, horizon: int = 20_000, tail: float = 1e-9):
    """P(safe U target) from ``start`` by summing the mass of all decided paths.

    Mass is propagated step by step over all paths at once; paths are retired
    when they hit the target, leave ``safe`` or sit in an absorbing state.
    Returns ``(value, undecided_mass)``: the undecided mass bounds the error.
    """
    p = model.dense()
    absorbing = np.isclose(np.diag(p), 1.0)
    mass = np.zeros(model.n_states)
    mass[start] = 1.0
    won = 0.0
    for _ in range(horizon):
        won += mass[target].sum()
        mass[target | ~safe | absorbing] = 0.0
        live = mass.sum()
        if live < tail:
            break
        mass = mass @ p
    return won, float(mass.sum())


def enumerate_reach(model, target, start, **kw):
    return enumerate_until(model, np.ones(model.n_states, bool), target, start, **kw)


def enumerate_nested(model: LabeledDtmc, a: np.ndarray, b: np.ndarray, start: int,
                     horizon: int = 20_000, tail: float = 1e-9):
    """P(F (a & F b)) by propagating mass over (state, seen-a) pairs."""
    p = model.dense()
    absorbing = np.isclose(np.diag(p), 1.0)
    n = model.n_states
    m0, m1 = np.zeros(n), np.zeros(n)
    if a[start]:
        m1[start] = 1.0
    else:
        m0[start] = 1.0
    won = 0.0
    for _ in range(horizon):
        won += m1[b].sum()
        m1[b | absorbing] = 0.0
        m0[absorbing] = 0.0
        if m0.sum() + m1.sum() < tail:
            break
        n0, n1 = m0 @ p, m1 @ p
        m1 = n1 + np.where(a, n0, 0.0)
        m0 = np.where(a, 0.0, n0)
    return won, float(m0.sum() + m1.sum())


def enumerate_paths(model: LabeledDtmc, start: int, depth: int, min_p: float = 0.0):
    """Yield ``(path, probability)`` for every path of exactly ``depth`` steps."""
    p = model.dense()
    stack = [((start,), 1.0)]
    while stack:
        path, pr = stack.pop()
        if len(path) == depth + 1:
            yield path, pr
            continue
        for j in np.flatnonzero(p[path[-1]]):
            q = pr * p[path[-1], j]
            if q > min_p:
                stack.append((path + (int(j),), q))


def all_subsets(n: int):
    for bits in itertools.product((False, True), repeat=n):
        yield np.array(bits)


def deterministic_cycle(lengths: List[str]) -> LabeledDtmc:
    """A chain visiting the given labels in order, ending in an absorbing state."""
    n = len(lengths)
    rows = np.zeros((n, n))
    for i in range(n - 1):
        rows[i, i + 1] = 1.0
    rows[n - 1, n - 1] = 1.0
    return dtmc(rows, [set(x.split("+")) if x else set() for x in lengths],
                rewards={"step": unit_steps(n)})


# -- episodes sampled from a known failure chain ----------------------------

LEVEL_CLEARANCE = (3.5, 2.5, 1.5, 0.5)  # one representative per level, default map


def planted_episodes(rng: np.random.Generator, p1: np.ndarray, n: int,
                     p_end: float = 0.05, max_len: int = 10_000):
    """Episodes whose level sequence is a path of ``p1`` (crash level last).

    Each step ends the mission as a goal with probability ``p_end``; entering
    the crash level ends it as a crash (the crash step itself is not logged).
    """
    from depcheck.estimation import Episode
    k = p1.shape[0]
    crash = k - 1
    cum = np.cumsum(p1, axis=1)
    out = []
    for _ in range(n):
        s, levels, outcome = 0, [0], "timeout"
        for _ in range(max_len - 1):
            if rng.random() < p_end:
                outcome = "goal"
                break
            s = min(int(np.searchsorted(cum[s], rng.random(), side="right")), k - 1)
            if s == crash:
                outcome = "crash"
                break
            levels.append(s)
        out.append(Episode([LEVEL_CLEARANCE[x] for x in levels], outcome))
    return out


PLANTED = np.array([
    [0.80, 0.15, 0.04, 0.01, 0.00],
    [0.30, 0.50, 0.15, 0.04, 0.01],
    [0.05, 0.35, 0.40, 0.15, 0.05],
    [0.00, 0.10, 0.30, 0.45, 0.15],
    [0.00, 0.00, 0.00, 0.00, 1.00],
])
