"""Labelled DTMCs with reward structures.

A :class:`LabeledDtmc` holds a sparse row-stochastic matrix, a labelling of
states with atomic propositions, and any number of named
:class:`RewardStructure` objects.  Construction never validates or
renormalises; call :func:`validate` to get the list of violated invariants.
"""
from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from . import formula as F
from .errors import DataError, UnknownNameError

ROW_SUM_TOL = 1e-9

# label vocabulary of the risk/mission product model
NEG_RISK = "neg_risk"
CRASH = "crash"
PROGRESSING = "progressing"
TERMINATED = "terminated"
RISK_PREFIX = "risk_B_"
MISS_COMP = "miss_comp"
CRIT_SITU = "crit_situ"
NCRIT_SITU = "ncrit_situ"

_RISK_RE = re.compile(r"^risk_B_(\d+)$")


def standard_macros(aps: Iterable[str]) -> Dict[str, F.StateFormula]:
    """Derived propositions of the product model, if ``aps`` supports them.

    ``miss_comp := !crash & terminated``, ``crit_situ := risk_B_max &
    progressing`` and ``ncrit_situ := neg_risk & progressing``, where
    ``risk_B_max`` is the highest-numbered benign level present.
    """
    aps = set(aps)
    out: Dict[str, F.StateFormula] = {}
    if {CRASH, TERMINATED} <= aps:
        out[MISS_COMP] = F.And(F.Not(F.Ap(CRASH)), F.Ap(TERMINATED))
    levels = [int(m.group(1)) for m in map(_RISK_RE.match, aps) if m]
    if levels and PROGRESSING in aps:
        out[CRIT_SITU] = F.And(F.Ap(f"{RISK_PREFIX}{max(levels)}"), F.Ap(PROGRESSING))
    if {NEG_RISK, PROGRESSING} <= aps:
        out[NCRIT_SITU] = F.And(F.Ap(NEG_RISK), F.Ap(PROGRESSING))
    return out


@dataclass(eq=False)
class RewardStructure:
    """State rewards (length-n vector) plus sparse transition rewards."""

    name: str
    state_rewards: np.ndarray
    transition_rewards: sp.csr_matrix

    @classmethod
    def from_maps(cls, name: str, n: int, state: Optional[Mapping[int, float]] = None,
                  transition: Optional[Mapping[tuple, float]] = None) -> "RewardStructure":
        rs = np.zeros(n)
        for s, v in (state or {}).items():
            rs[s] = v
        rows, cols, vals = [], [], []
        for (a, b), v in (transition or {}).items():
            rows.append(a)
            cols.append(b)
            vals.append(v)
        rt = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
        return cls(name, rs, rt)

    def expected_step(self, matrix: sp.csr_matrix) -> np.ndarray:
        """Expected reward of one step from each state: r_S + sum_s' P r_T."""
        rt = np.asarray(matrix.multiply(self.transition_rewards).sum(axis=1)).ravel()
        return self.state_rewards + rt


@dataclass(eq=False)
class LabeledDtmc:
    state_names: Sequence[str]
    initial: int
    matrix: sp.csr_matrix
    labels: Sequence[frozenset]
    rewards: Dict[str, RewardStructure] = field(default_factory=dict)
    aps: Optional[frozenset] = None
    macros: Optional[Dict[str, F.StateFormula]] = None
    meta: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        self.state_names = tuple(self.state_names)
        self.labels = tuple(frozenset(l) for l in self.labels)
        self.matrix = sp.csr_matrix(self.matrix, dtype=float)
        self.matrix.sort_indices()
        if self.aps is None:
            self.aps = frozenset().union(*self.labels) if self.labels else frozenset()
        else:
            self.aps = frozenset(self.aps)
        if self.macros is None:
            self.macros = {k: v for k, v in standard_macros(self.aps).items()
                           if k not in self.aps}

    @property
    def n_states(self) -> int:
        return len(self.state_names)

    def index(self, name: str) -> int:
        try:
            return self.state_names.index(name)
        except ValueError:
            raise UnknownNameError("state", name) from None

    def reward(self, name: Optional[str]) -> RewardStructure:
        if name is None:
            if len(self.rewards) != 1:
                raise UnknownNameError("reward structure", "<default>")
            return next(iter(self.rewards.values()))
        try:
            return self.rewards[name]
        except KeyError:
            raise UnknownNameError("reward structure", name) from None

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def renormalized(self) -> "LabeledDtmc":
        """Copy with every row scaled to sum to one (rows summing to 0 untouched)."""
        sums = np.asarray(self.matrix.sum(axis=1)).ravel()
        scale = np.where(sums > 0, 1.0 / np.where(sums > 0, sums, 1.0), 1.0)
        m = sp.diags(scale) @ self.matrix
        return LabeledDtmc(self.state_names, self.initial, m, self.labels, dict(self.rewards),
                           self.aps, dict(self.macros), dict(self.meta))

    def digest(self) -> str:
        blob = json.dumps(to_json_dict(self, include_meta=False), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class Violation:
    kind: str
    state: Optional[int]
    value: Optional[float]

    def __str__(self):
        where = "" if self.state is None else f" at state {self.state}"
        val = "" if self.value is None else f" (value {self.value:g})"
        return f"{self.kind}{where}{val}"


def validate(model: LabeledDtmc) -> List[Violation]:
    """Return every violated model invariant; an empty list means valid."""
    out: List[Violation] = []
    n = model.n_states
    m = model.matrix
    if m.shape != (n, n):
        out.append(Violation(f"matrix shape {m.shape} does not match {n} states", None, None))
        return out
    if not 0 <= model.initial < n:
        out.append(Violation("initial state out of range", None, model.initial))
    coo = m.tocoo()
    for i, v in zip(coo.row, coo.data):
        if v < 0:
            out.append(Violation("negative probability", int(i), float(v)))
        elif v > 1:
            out.append(Violation("probability above 1", int(i), float(v)))
        elif not np.isfinite(v):
            out.append(Violation("non-finite probability", int(i), float(v)))
    sums = np.asarray(m.sum(axis=1)).ravel()
    for i in np.flatnonzero(np.abs(sums - 1.0) > ROW_SUM_TOL):
        out.append(Violation("row does not sum to 1", int(i), float(sums[i])))
    if len(model.labels) != n:
        out.append(Violation(f"{len(model.labels)} label sets for {n} states", None, None))
    for i, lab in enumerate(model.labels):
        for ap in sorted(lab - model.aps):
            out.append(Violation(f"undeclared proposition {ap!r}", i, None))
    support = m.copy()
    support.data = np.ones_like(support.data)
    for r in model.rewards.values():
        if r.state_rewards.shape != (n,):
            out.append(Violation(f"reward {r.name!r}: state vector has wrong length", None, None))
            continue
        for i in np.flatnonzero(~(r.state_rewards >= 0)):
            out.append(Violation(f"reward {r.name!r}: negative state reward", int(i),
                                 float(r.state_rewards[i])))
        tr = r.transition_rewards.tocoo()
        for i, j, v in zip(tr.row, tr.col, tr.data):
            if v < 0:
                out.append(Violation(f"reward {r.name!r}: negative transition reward", int(i), float(v)))
            if v != 0 and m[i, j] == 0:
                out.append(Violation(f"reward {r.name!r}: transition reward on missing "
                                     f"transition {i}->{j}", int(i), float(v)))
    return out


def state_mask(model: LabeledDtmc, predicate) -> np.ndarray:
    """Boolean mask of states satisfying a propositional ``predicate``.

    ``predicate`` may be a formula AST or a string in the PCTL surface
    syntax.  Only ``true``, propositions, ``&`` and ``!`` are handled here;
    probabilistic operators go through :mod:`depcheck.pctl`.
    """
    if isinstance(predicate, str):
        from .pctl import parse_state
        predicate = parse_state(predicate)
    return _mask(model, predicate, ())


def _mask(model: LabeledDtmc, f, expanding) -> np.ndarray:
    n = model.n_states
    if isinstance(f, F.TrueF):
        return np.ones(n, dtype=bool)
    if isinstance(f, F.Ap):
        if f.name in model.aps:
            return np.fromiter((f.name in lab for lab in model.labels), dtype=bool, count=n)
        if f.name in model.macros and f.name not in expanding:
            return _mask(model, model.macros[f.name], expanding + (f.name,))
        raise UnknownNameError("proposition", f.name)
    if isinstance(f, F.And):
        return _mask(model, f.left, expanding) & _mask(model, f.right, expanding)
    if isinstance(f, F.Not):
        return ~_mask(model, f.operand, expanding)
    raise TypeError(f"not a propositional formula: {f!r}")


def satisfying_states(model: LabeledDtmc, predicate) -> frozenset:
    return frozenset(np.flatnonzero(state_mask(model, predicate)).tolist())


def as_mask(model: LabeledDtmc, states) -> np.ndarray:
    """Coerce a state set (mask, iterable of indices, or predicate) to a mask."""
    if isinstance(states, np.ndarray) and states.dtype == bool:
        return states
    if isinstance(states, (str,) + F.PROPOSITIONAL):
        return state_mask(model, states)
    mask = np.zeros(model.n_states, dtype=bool)
    idx = list(states)
    if idx:
        mask[np.asarray(idx, dtype=int)] = True
    return mask


# -- JSON interchange -------------------------------------------------------

def to_json_dict(model: LabeledDtmc, include_meta: bool = True) -> dict:
    names = list(model.state_names)
    coo = model.matrix.tocoo()
    trans = sorted((int(i), int(j), float(v)) for i, j, v in zip(coo.row, coo.col, coo.data))
    rewards = {}
    for name, r in model.rewards.items():
        tr = r.transition_rewards.tocoo()
        rewards[name] = {
            "state": {names[i]: float(r.state_rewards[i])
                      for i in np.flatnonzero(r.state_rewards)},
            "transition": sorted([int(i), int(j), float(v)]
                                 for i, j, v in zip(tr.row, tr.col, tr.data) if v != 0),
        }
    out = {
        "states": names,
        "initial": int(model.initial),
        "transitions": [list(t) for t in trans],
        "labels": {names[i]: sorted(lab) for i, lab in enumerate(model.labels)},
        "rewards": rewards,
    }
    if include_meta and model.meta:
        out["meta"] = model.meta
    return out


def from_json_dict(d: dict) -> LabeledDtmc:
    try:
        names = list(d["states"])
        n = len(names)
        pos = {s: i for i, s in enumerate(names)}
        trans = d.get("transitions", [])
        rows = [int(t[0]) for t in trans]
        cols = [int(t[1]) for t in trans]
        vals = [float(t[2]) for t in trans]
        matrix = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
        labels = [frozenset()] * n
        for s, props in d.get("labels", {}).items():
            labels[pos[s]] = frozenset(props)
        rewards = {}
        for rname, rd in d.get("rewards", {}).items():
            state = {pos[s]: float(v) for s, v in rd.get("state", {}).items()}
            transition = {(int(a), int(b)): float(v) for a, b, v in rd.get("transition", [])}
            rewards[rname] = RewardStructure.from_maps(rname, n, state, transition)
        return LabeledDtmc(names, int(d["initial"]), matrix, labels, rewards,
                           meta=dict(d.get("meta", {})))
    except (KeyError, TypeError, IndexError, ValueError) as exc:
        raise DataError(f"malformed model JSON: {exc!r}") from exc


def save_model(model: LabeledDtmc, path) -> None:
    with open(path, "w") as fh:
        json.dump(to_json_dict(model), fh, indent=1)
        fh.write("\n")


def load_model(path) -> LabeledDtmc:
    try:
        with open(path) as fh:
            d = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: not valid JSON ({exc})") from exc
    return from_json_dict(d)
