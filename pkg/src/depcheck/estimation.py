"""From sampled episodes to the risk-level product DTMC.

Pipeline::

    episodes --map_clearance--> risk-level sequences --count_transitions-->
    counts --mle--> failure matrix --build_product(+ mission stage)--> model

Risk levels are indexed ``0`` (negligible risk), ``1..m`` (benign failure
levels, increasing severity) and ``m + 1`` (crash).
"""
from __future__ import annotations

import io
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from .errors import DataError
from .model import (CRASH, NEG_RISK, PROGRESSING, RISK_PREFIX, TERMINATED, LabeledDtmc,
                    RewardStructure)

OUTCOMES = ("crash", "goal", "timeout")


class EstimationWarning(UserWarning):
    """Data too thin or inconsistent for an unambiguous estimate."""


@dataclass(frozen=True)
class Episode:
    """One sampled mission: per-step obstacle clearance and the outcome."""

    clearance: Tuple[float, ...]
    outcome: str
    raw: Optional[Tuple[Tuple[float, ...], ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "clearance", tuple(float(c) for c in self.clearance))
        if not self.clearance:
            raise DataError("episode has no steps")
        if self.outcome not in OUTCOMES:
            raise DataError(f"unknown outcome {self.outcome!r}")
        if min(self.clearance) < 0 or not all(np.isfinite(self.clearance)):
            raise DataError("clearance must be finite and non-negative")

    @property
    def length(self) -> int:
        return len(self.clearance)

    def to_json(self) -> str:
        steps = []
        for i, c in enumerate(self.clearance):
            rec = {"clearance": c}
            if self.raw is not None:
                rec["raw"] = list(self.raw[i])
            steps.append(rec)
        return json.dumps({"steps": steps, "outcome": self.outcome})

    @classmethod
    def from_json(cls, line: str) -> "Episode":
        try:
            d = json.loads(line)
            steps = d["steps"]
            clearance = [s["clearance"] for s in steps]
            raw = None
            if steps and all("raw" in s for s in steps):
                raw = tuple(tuple(s["raw"]) for s in steps)
            return cls(clearance, d["outcome"], raw)
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise DataError(f"malformed episode record: {exc!r}") from exc


def write_episodes(episodes: Iterable[Episode], dest) -> None:
    """Write JSONL to a path or an open text stream."""
    if isinstance(dest, (str, Path)):
        with open(dest, "w") as fh:
            write_episodes(episodes, fh)
        return
    for ep in episodes:
        dest.write(ep.to_json())
        dest.write("\n")


def read_episodes(src) -> List[Episode]:
    if isinstance(src, (str, Path)):
        with open(src) as fh:
            return read_episodes(fh)
    out = []
    for n, line in enumerate(src, 1):
        if line.strip():
            try:
                out.append(Episode.from_json(line))
            except DataError as exc:
                raise DataError(f"line {n}: {exc}") from None
    return out


def episodes_to_jsonl(episodes: Iterable[Episode]) -> str:
    buf = io.StringIO()
    write_episodes(episodes, buf)
    return buf.getvalue()


@dataclass(frozen=True)
class RiskMap:
    """Clearance thresholds (metres, strictly decreasing) and level deviations."""

    thresholds: Tuple[float, ...] = (3.0, 2.0, 1.0)
    deviations: Tuple[float, ...] = (1.0, 2.0, 3.0)
    sensor_range: float = 3.15

    def __post_init__(self):
        t = tuple(float(x) for x in self.thresholds)
        d = tuple(float(x) for x in self.deviations)
        object.__setattr__(self, "thresholds", t)
        object.__setattr__(self, "deviations", d)
        if not t:
            raise DataError("risk map needs at least one threshold")
        if len(d) != len(t):
            raise DataError("one deviation weight per benign level is required")
        if any(a <= b for a, b in zip(t, t[1:])) or t[-1] <= 0:
            raise DataError("thresholds must be positive and strictly decreasing")
        if t[0] > self.sensor_range:
            raise DataError("first threshold exceeds sensor range")
        if d[0] < 0 or any(a >= b for a, b in zip(d, d[1:])):
            raise DataError("deviations must be non-negative and strictly increasing")

    @property
    def m(self) -> int:
        return len(self.thresholds)

    @property
    def crash_level(self) -> int:
        return self.m + 1

    def level_names(self) -> List[str]:
        return ["s_N"] + [f"s_B{i}" for i in range(1, self.m + 1)] + ["s_C"]

    def to_dict(self) -> dict:
        return {"thresholds": list(self.thresholds), "deviations": list(self.deviations),
                "sensor_range": self.sensor_range}

    @classmethod
    def from_dict(cls, d: dict) -> "RiskMap":
        try:
            return cls(tuple(d["thresholds"]), tuple(d["deviations"]),
                       float(d.get("sensor_range", 3.15)))
        except (KeyError, TypeError) as exc:
            raise DataError(f"malformed risk map: {exc!r}") from exc


def load_riskmap(source: Optional[str]) -> RiskMap:
    """``None`` or ``"default"`` gives the default map; otherwise a .toml/.json path."""
    if source in (None, "default"):
        return RiskMap()
    path = Path(source)
    try:
        if path.suffix == ".toml":
            try:
                import tomllib
            except ModuleNotFoundError:  # python < 3.11
                import tomli as tomllib
            with open(path, "rb") as fh:
                d = tomllib.load(fh)
        else:
            with open(path) as fh:
                d = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read risk map {source}: {exc}") from exc
    return RiskMap.from_dict(d.get("riskmap", d))


def map_clearance(clearance, riskmap: RiskMap):
    """Risk level for a clearance (scalar or array); boundaries go to the safer level.

    ``>= c_1`` is negligible risk; ``c_{i+1} <= c < c_i`` is benign level ``i``
    (with ``c_{m+1} = 0``).
    """
    c = np.asarray(clearance, dtype=float)
    # number of thresholds strictly above c
    levels = np.sum(c[..., None] < np.asarray(riskmap.thresholds), axis=-1)
    return int(levels) if levels.ndim == 0 else levels


def count_transitions(episodes: Sequence[Episode], riskmap: RiskMap) -> np.ndarray:
    """(m+2) x (m+2) matrix of observed level-to-level transition counts.

    A crash outcome adds one transition from the last step's level into the
    crash level; goal and timeout outcomes add nothing.
    """
    if not episodes:
        raise DataError("no episodes to count")
    k = riskmap.m + 2
    counts = np.zeros((k, k), dtype=np.int64)
    for ep in episodes:
        lv = map_clearance(np.asarray(ep.clearance), riskmap)
        np.add.at(counts, (lv[:-1], lv[1:]), 1)
        if ep.outcome == "crash":
            counts[lv[-1], riskmap.crash_level] += 1
    return counts


def mle(counts: np.ndarray) -> np.ndarray:
    """Row-wise maximum-likelihood transition matrix p_ij = n_ij / sum_j n_ij.

    Unvisited rows become a self-loop (with a warning) rather than an
    invented distribution.  The last (crash) row is always absorbing.
    """
    counts = np.asarray(counts, dtype=float)
    if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
        raise DataError("count matrix must be square")
    if np.any(counts < 0):
        raise DataError("negative transition count")
    k = counts.shape[0]
    crash = k - 1
    off = counts[crash].copy()
    off[crash] = 0
    if off.sum() > 0:
        warnings.warn("transitions out of the crash state ignored; it is absorbing",
                      EstimationWarning, stacklevel=2)
    totals = counts.sum(axis=1)
    p = np.zeros_like(counts)
    for i in range(k):
        if i == crash:
            p[i, i] = 1.0
        elif totals[i] > 0:
            p[i] = counts[i] / totals[i]
        else:
            warnings.warn(f"risk level {i} never visited; modelled as a self-loop",
                          EstimationWarning, stacklevel=2)
            p[i, i] = 1.0
    return p


@dataclass(frozen=True)
class MissionStage:
    """Two-state progressing/terminated chain; termination probability 1/l_mis."""

    l_mis: float

    def __post_init__(self):
        if not self.l_mis >= 1:
            raise DataError(f"expected mission length must be >= 1, got {self.l_mis}")

    @property
    def p_terminate(self) -> float:
        return 1.0 / self.l_mis


def estimate_mission_length(episodes: Sequence[Episode], include_timeouts: bool = True) -> MissionStage:
    """Mean number of transitions over episodes that did not crash."""
    kept = [ep for ep in episodes
            if ep.outcome == "goal" or (include_timeouts and ep.outcome == "timeout")]
    if not kept:
        raise DataError("no non-crash episodes to estimate mission length from")
    return MissionStage(float(np.mean([ep.length - 1 for ep in kept])))


def build_product(failure_matrix: np.ndarray, stage: MissionStage, riskmap: RiskMap,
                  meta: Optional[dict] = None) -> LabeledDtmc:
    """Synchronous product of the failure chain with the mission-stage chain.

    State ``k * (m+2) + level`` is (level, stage k).  From a progressing state
    each failure transition splits into continuing (prob ``1 - 1/l_mis``) and
    terminating (``1/l_mis``).  Terminated states and crash states are
    absorbing.  The initial state is negligible risk, progressing.
    """
    p1 = np.asarray(failure_matrix, dtype=float)
    k = riskmap.m + 2
    if p1.shape != (k, k):
        raise DataError(f"failure matrix must be {k}x{k} for m={riskmap.m}")
    if np.any(p1 < 0) or np.any(np.abs(p1.sum(axis=1) - 1) > 1e-9):
        raise DataError("failure matrix is not row-stochastic")
    crash = riskmap.crash_level
    q = stage.p_terminate
    n = 2 * k
    rows, cols, vals = [], [], []
    step_t = {}
    for s in range(k):
        src = s
        if s == crash:
            rows.append(src); cols.append(src); vals.append(1.0)
            step_t[(src, src)] = 1.0
            continue
        for t in np.flatnonzero(p1[s]):
            for dst, w in ((t, 1.0 - q), (k + t, q)):
                if w * p1[s, t] > 0:
                    rows.append(src); cols.append(dst); vals.append(p1[s, t] * w)
                    step_t[(src, dst)] = 1.0
    for s in range(k):
        rows.append(k + s); cols.append(k + s); vals.append(1.0)
    matrix = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))

    names, labels = [], []
    level_props = [NEG_RISK] + [f"{RISK_PREFIX}{i}" for i in range(1, riskmap.m + 1)] + [CRASH]
    for stage_i, stage_prop in enumerate((PROGRESSING, TERMINATED)):
        for s, lname in enumerate(riskmap.level_names()):
            names.append(f"{lname},k{stage_i}")
            labels.append(frozenset({level_props[s], stage_prop}))

    dev = np.zeros(n)
    for i, d in enumerate(riskmap.deviations, start=1):
        dev[i] = dev[k + i] = d
    rewards = {
        "step": RewardStructure.from_maps("step", n, None, step_t),
        "deviation": RewardStructure("deviation", dev, sp.csr_matrix((n, n))),
    }
    info = {"riskmap": riskmap.to_dict(), "l_mis": stage.l_mis,
            "failure_matrix": p1.tolist()}
    info.update(meta or {})
    return LabeledDtmc(names, 0, matrix, labels, rewards, meta=info)


def build_from_episodes(episodes: Sequence[Episode], riskmap: RiskMap = RiskMap(),
                        include_timeouts: bool = True) -> LabeledDtmc:
    """count -> MLE -> mission length -> product, recording provenance in ``meta``."""
    if not episodes:
        raise DataError("no episodes to estimate from")
    counts = count_transitions(episodes, riskmap)
    p1 = mle(counts)
    stage = estimate_mission_length(episodes, include_timeouts)
    n_crash = sum(ep.outcome == "crash" for ep in episodes)
    return build_product(p1, stage, riskmap, meta={
        "samples": len(episodes), "crashes": n_crash,
        "success_rate": sum(ep.outcome == "goal" for ep in episodes) / len(episodes),
        "counts": counts.tolist(), "include_timeouts": include_timeouts,
    })
