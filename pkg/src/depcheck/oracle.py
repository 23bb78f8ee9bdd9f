"""Monte Carlo estimates of PCTL queries by direct trace simulation.

This is an independent cross-check of :mod:`depcheck.checker`: it never
solves a linear system, it only walks the chain.  Traces are simulated in
vectorised batches; several queries can share one set of traces.

Conventions match the checker:

* reachability rewards collect ``r_S(s) + r_T(s, s')`` for every transition
  taken before the target is first entered (the target's own state reward
  is not collected);
* ``F (a & F b)`` is fulfilled at the first ``b`` visit at or after the first
  ``a`` visit;
* a trace that is still undecided after ``horizon`` steps is *truncated*.
  Truncated traces count as failures for probabilities, as ``inf`` for
  strict rewards and are dropped from conditional means; the fraction is
  reported so callers can tell when the horizon was too short.

Traces that can no longer fulfil their objective (a graph property of the
chain) are stopped early.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from . import formula as F
from .errors import ConditioningError
from .model import LabeledDtmc

DEFAULT_HORIZON = 100_000
BATCH = 200_000


@dataclass(frozen=True)
class McEstimate:
    estimate: float
    std_error: float
    truncated_fraction: float
    n_used: int

    def agrees(self, exact: float, k: float = 3.0, atol: float = 1e-9) -> bool:
        """``exact`` lies within ``k`` standard errors (plus ``atol``)."""
        if math.isinf(exact) or math.isinf(self.estimate):
            return exact == self.estimate
        if math.isnan(exact) or math.isnan(self.estimate):
            return math.isnan(exact) and math.isnan(self.estimate)
        return abs(exact - self.estimate) <= k * self.std_error + atol * max(1.0, abs(exact))


# -- graph helper (kept separate from the checker on purpose) --------------

def _can_reach(model: LabeledDtmc, target: np.ndarray, through: Optional[np.ndarray] = None):
    """States with a path into ``target`` whose earlier states lie in ``through``."""
    n = model.n_states
    through = np.ones(n, bool) if through is None else through
    m = model.matrix.tocsc()
    preds = [m.indices[m.indptr[j]:m.indptr[j + 1]][m.data[m.indptr[j]:m.indptr[j + 1]] > 0]
             for j in range(n)]
    ok = target.copy()
    todo = deque(np.flatnonzero(target).tolist())
    while todo:
        j = todo.popleft()
        for i in preds[j]:
            if not ok[i] and through[i]:
                ok[i] = True
                todo.append(i)
    return ok


# -- sampling ---------------------------------------------------------------

class _Sampler:
    def __init__(self, model: LabeledDtmc):
        m = model.matrix
        self.indices = m.indices
        self.indptr = m.indptr
        rows = np.repeat(np.arange(m.shape[0]), np.diff(m.indptr))
        within = np.empty_like(m.data)
        for i in range(m.shape[0]):
            lo, hi = m.indptr[i], m.indptr[i + 1]
            seg = np.cumsum(m.data[lo:hi])
            within[lo:hi] = seg / seg[-1] if hi > lo else seg
        # keys increase globally: row i occupies (i, i + 1]
        self.keys = rows + within

    def step(self, states: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        u = rng.random(states.size)
        pos = np.searchsorted(self.keys, states + u, side="left")
        pos = np.minimum(pos, self.indptr[states + 1] - 1)
        return self.indices[pos]


# -- monitors ---------------------------------------------------------------

class _Monitor:
    """Per-trace state for one query.  ``value`` is meaningful once ``done``."""

    needs_steps: Optional[int] = None

    def __init__(self, n: int):
        self.done = np.zeros(n, bool)
        self.value = np.zeros(n)
        self.hit = np.zeros(n, bool)

    def start(self, s):
        raise NotImplementedError

    def advance(self, idx, prev, nxt):
        raise NotImplementedError


class _Next(_Monitor):
    needs_steps = 1

    def __init__(self, n, target):
        super().__init__(n)
        self.target = target

    def start(self, s):
        pass

    def advance(self, idx, prev, nxt):
        open_ = ~self.done[idx]
        i = idx[open_]
        self.hit[i] = self.target[nxt[open_]]
        self.value[i] = self.hit[i]
        self.done[i] = True


class _Until(_Monitor):
    """``safe U target`` probability, optionally collecting a reward."""

    def __init__(self, n, safe, target, alive, reward=None):
        super().__init__(n)
        self.safe, self.target, self.alive = safe, target, alive
        self.reward = None if reward is None else _StepReward(reward)

    def _check(self, i, s):
        hit = self.target[s]
        dead = ~hit & (~self.safe[s] | ~self.alive[s])
        self.hit[i[hit]] = True
        self.done[i[hit | dead]] = True

    def start(self, s):
        self._check(np.arange(s.size), s)

    def advance(self, idx, prev, nxt):
        open_ = ~self.done[idx]
        i, p, q = idx[open_], prev[open_], nxt[open_]
        if self.reward is not None:
            self.value[i] += self.reward(p, q)
        self._check(i, q)


class _Nested(_Monitor):
    """``F (a & F b)``: phase flips at the first ``a`` visit."""

    def __init__(self, n, a, b, alive_a, alive_b, reward=None):
        super().__init__(n)
        self.a, self.b = a, b
        self.alive_a, self.alive_b = alive_a, alive_b
        self.phase = np.zeros(n, bool)
        self.reward = None if reward is None else _StepReward(reward)

    def _check(self, i, s):
        self.phase[i] |= self.a[s]
        ph = self.phase[i]
        hit = ph & self.b[s]
        dead = ~hit & np.where(ph, ~self.alive_b[s], ~self.alive_a[s])
        self.hit[i[hit]] = True
        self.done[i[hit | dead]] = True

    def start(self, s):
        self._check(np.arange(s.size), s)

    def advance(self, idx, prev, nxt):
        open_ = ~self.done[idx]
        i, p, q = idx[open_], prev[open_], nxt[open_]
        if self.reward is not None:
            self.value[i] += self.reward(p, q)
        self._check(i, q)


class _Cumul(_Monitor):
    def __init__(self, n, steps, reward):
        super().__init__(n)
        self.needs_steps = steps
        self.reward = _StepReward(reward)
        self.taken = 0

    def start(self, s):
        if self.needs_steps == 0:
            self.done[:] = True

    def advance(self, idx, prev, nxt):
        open_ = ~self.done[idx]
        i, p, q = idx[open_], prev[open_], nxt[open_]
        self.value[i] += self.reward(p, q)
        self.taken += 1
        if self.taken >= self.needs_steps:
            self.done[:] = True


class _StepReward:
    """Vectorised ``r_S(p) + r_T(p, q)``."""

    def __init__(self, reward):
        self.state = reward.state_rewards
        rt = reward.transition_rewards
        self.sparse = rt if rt.nnz else None
        self.dense = rt.toarray() if rt.nnz and rt.shape[0] <= 4000 else None

    def __call__(self, p, q):
        if self.sparse is None:
            return self.state[p]
        if self.dense is not None:
            return self.state[p] + self.dense[p, q]
        return self.state[p] + np.asarray(self.sparse[p, q]).ravel()


# -- queries ----------------------------------------------------------------

def _mask(model, f):
    from .pctl import satisfaction
    return satisfaction(f, model)


def _monitor(model: LabeledDtmc, query, n: int):
    if isinstance(query, F.ProbQuery):
        p = query.path
        if isinstance(p, F.Next):
            return _Next(n, _mask(model, p.operand)), "prob"
        if isinstance(p, (F.Eventually, F.Until)):
            safe = np.ones(model.n_states, bool) if isinstance(p, F.Eventually) \
                else _mask(model, p.left)
            target = _mask(model, p.operand if isinstance(p, F.Eventually) else p.right)
            return _Until(n, safe, target, _can_reach(model, target, safe)), "prob"
        if isinstance(p, F.EventuallyNested):
            a, b = _mask(model, p.first), _mask(model, p.then)
            alive_b = _can_reach(model, b)
            return _Nested(n, a, b, _can_reach(model, a), alive_b), "prob"
    if isinstance(query, F.RewardQuery):
        r = model.reward(query.structure)
        rf = query.reward
        if isinstance(rf, F.CumulBound):
            return _Cumul(n, rf.steps, r), "cumul"
        if isinstance(rf, F.ReachReward):
            target = _mask(model, rf.target)
            safe = np.ones(model.n_states, bool)
            return _Until(n, safe, target, _can_reach(model, target), reward=r), "reward"
        if isinstance(rf, F.ReachRewardNested):
            a, b = _mask(model, rf.first), _mask(model, rf.then)
            return _Nested(n, a, b, _can_reach(model, a), _can_reach(model, b), reward=r), "reward"
    raise TypeError(f"unsupported query for Monte Carlo: {query!r}")


@dataclass
class TraceSamples:
    """Per-trace outcomes of one query: ``value`` is valid where ``hit``."""

    kind: str
    value: np.ndarray
    hit: np.ndarray
    truncated: np.ndarray

    def estimate(self, semantics: str = "strict") -> McEstimate:
        n = self.value.size
        trunc = float(self.truncated.mean()) if n else 0.0
        if self.kind == "prob":
            p = float(self.hit.mean())
            return McEstimate(p, math.sqrt(max(p * (1 - p), 0.0) / n), trunc, n)
        if self.kind == "cumul":
            return _mean_estimate(self.value, trunc)
        if semantics == "conditional":
            if not self.hit.any():
                raise ConditioningError("no trace fulfils the conditioning event")
            return _mean_estimate(self.value[self.hit], trunc)
        if not self.hit.all():
            return McEstimate(math.inf, math.inf, trunc, n)
        return _mean_estimate(self.value, trunc)


def _mean_estimate(v: np.ndarray, trunc: float) -> McEstimate:
    if v.size == 0:
        return McEstimate(math.nan, math.nan, trunc, 0)
    se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0
    return McEstimate(float(v.mean()), se, trunc, int(v.size))


def _as_query(model, q):
    if isinstance(q, str):
        from .pctl import parse
        q = parse(q)
    return q


def mc_samples(model: LabeledDtmc, queries: Sequence, n_traces: int = 1_000_000,
               seed: int = 0, horizon: int = DEFAULT_HORIZON,
               state: Optional[int] = None) -> List[TraceSamples]:
    """Simulate ``n_traces`` traces once and record every query on them."""
    if n_traces < 1 or horizon < 1:
        raise ValueError("n_traces and horizon must be >= 1")
    queries = [_as_query(model, q) for q in queries]
    seeds = iter(np.random.SeedSequence(seed).spawn(-(-n_traces // BATCH)))
    sampler = _Sampler(model)
    s0 = model.initial if state is None else state
    parts: List[List[TraceSamples]] = [[] for _ in queries]
    left = n_traces
    while left > 0:
        n = min(BATCH, left)
        left -= n
        rng = np.random.Generator(np.random.PCG64(next(seeds)))
        made = [_monitor(model, q, n) for q in queries]
        mons = [m for m, _ in made]
        states = np.full(n, s0, dtype=np.int64)
        for m in mons:
            m.start(states)
        t = 0
        while t < horizon:
            open_ = np.zeros(n, bool)
            for m in mons:
                open_ |= ~m.done
            idx = np.flatnonzero(open_)
            if idx.size == 0:
                break
            prev = states[idx]
            nxt = sampler.step(prev, rng)
            states[idx] = nxt
            for m in mons:
                m.advance(idx, prev, nxt)
            t += 1
        for k, (m, kind) in enumerate(made):
            parts[k].append(TraceSamples(kind, m.value.copy(), m.hit.copy(), ~m.done))
    out = []
    for ps in parts:
        out.append(TraceSamples(ps[0].kind, np.concatenate([p.value for p in ps]),
                                np.concatenate([p.hit for p in ps]),
                                np.concatenate([p.truncated for p in ps])))
    return out


def mc_estimate(model: LabeledDtmc, query, n_traces: int = 1_000_000, seed: int = 0,
                horizon: int = DEFAULT_HORIZON, semantics: str = "strict",
                state: Optional[int] = None) -> McEstimate:
    """Monte Carlo estimate of a ``P=?`` or ``R=?`` query at ``state``."""
    return mc_samples(model, [query], n_traces, seed, horizon, state)[0].estimate(semantics)


def ratio_estimate(num: np.ndarray, den: np.ndarray) -> McEstimate:
    """Delta-method estimate of ``mean(num) / mean(den)`` from paired samples."""
    n = num.size
    mx, my = float(num.mean()), float(den.mean())
    r = mx / my
    if n < 2:
        return McEstimate(r, 0.0, 0.0, n)
    cov = np.cov(num, den)
    var = (cov[0, 0] - 2 * r * cov[0, 1] + r * r * cov[1, 1]) / (my * my * n)
    return McEstimate(r, math.sqrt(max(var, 0.0)), 0.0, n)


# -- dependability properties from one set of traces ------------------------

_SUITE = (
    'P=? [ F miss_comp ]',
    'R{"deviation"}=? [ F miss_comp ]',
    'R{"step"}=? [ F miss_comp ]',
    'P=? [ F crit_situ ]',
    'P=? [ F (crit_situ & F miss_comp) ]',
    'R{"step"}=? [ F crit_situ ]',
    'R{"step"}=? [ F (crit_situ & F ncrit_situ) ]',
)


def _one_minus_quotient(num: McEstimate, den: McEstimate, scale: float = 1.0) -> McEstimate:
    """``1 - num / (scale * den)`` for independently estimated means (first order)."""
    if any(math.isnan(x.estimate) or math.isinf(x.estimate) for x in (num, den)) \
            or den.estimate == 0:
        return McEstimate(math.nan, math.nan, max(num.truncated_fraction, den.truncated_fraction), 0)
    q = num.estimate / den.estimate
    se = math.hypot(num.std_error / den.estimate, q * den.std_error / den.estimate) / scale
    return McEstimate(1.0 - q / scale, se, max(num.truncated_fraction, den.truncated_fraction),
                      min(num.n_used, den.n_used))


def mc_properties(model: LabeledDtmc, n_traces: int = 1_000_000, seed: int = 0,
                  semantics: str = "conditional",
                  horizon: int = DEFAULT_HORIZON) -> dict:
    """Monte Carlo counterparts of the five dependability properties.

    Resilience and robustness use paired per-trace samples (delta method);
    detection and recovery combine means over different conditioning events
    and propagate their standard errors as if independent.
    """
    from .dependability import max_deviation_weight

    safe, dev, length, crit, nested, to_crit, to_rec = mc_samples(
        model, _SUITE, n_traces, seed, horizon)
    est = lambda s: _safe_estimate(s, semantics)  # noqa: E731
    out = {"safety": safe.estimate()}
    max_d = max_deviation_weight(model)
    if semantics == "conditional" and safe.hit.any():
        r = ratio_estimate(dev.value[safe.hit], length.value[safe.hit])
        out["resilience"] = McEstimate(1.0 - r.estimate / max_d, r.std_error / max_d,
                                       safe.truncated.mean(), r.n_used) if max_d else \
            McEstimate(1.0, 0.0, 0.0, r.n_used)
    else:
        out["resilience"] = _one_minus_quotient(est(dev), est(length), max_d or 1.0)
    if not crit.hit.any():
        out["robustness"] = McEstimate(1.0, 0.0, 0.0, n_traces)
        out["detection"] = McEstimate(1.0, 0.0, 0.0, n_traces)
    else:
        r = ratio_estimate(nested.hit.astype(float), crit.hit.astype(float))
        out["robustness"] = McEstimate(min(1.0, r.estimate), r.std_error,
                                       float(crit.truncated.mean()), n_traces)
        out["detection"] = _one_minus_quotient(est(to_crit), est(length))
    d, rec, ln = est(to_crit), est(to_rec), est(length)
    if math.isnan(rec.estimate) or math.isinf(rec.estimate):
        out["recovery"] = McEstimate(math.nan, math.nan, rec.truncated_fraction, 0)
    else:
        diff = McEstimate(rec.estimate - d.estimate, math.hypot(rec.std_error, d.std_error),
                          rec.truncated_fraction, rec.n_used)
        out["recovery"] = _one_minus_quotient(diff, ln)
    return out


def _safe_estimate(samples: TraceSamples, semantics: str) -> McEstimate:
    try:
        return samples.estimate(semantics)
    except ConditioningError:
        return McEstimate(math.nan, math.nan, float(samples.truncated.mean()), 0)
