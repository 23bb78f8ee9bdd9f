"""The five dependability properties on a risk/mission product model.

========== =====================================================================
safety     P=? [ F miss_comp ]
resilience 1 - R{deviation}[F miss_comp] / (max d_i * R{step}[F miss_comp])
robustness P=? [ F (crit_situ & F miss_comp) ] / P=? [ F crit_situ ]
detection  1 - R{step}[F crit_situ] / R{step}[F miss_comp]
recovery   1 - (R{step}[F (crit_situ & F ncrit_situ)] - R{step}[F crit_situ])
             / R{step}[F miss_comp]
========== =====================================================================

Reward queries use the success-conditioned ("conditional") semantics by
default; ``semantics="strict"`` gives standard PCTL values, which are
infinite whenever the target can be missed.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import checker
from .errors import ConditioningError
from .model import CRIT_SITU, MISS_COMP, NCRIT_SITU, LabeledDtmc, as_mask

PROPERTIES = ("safety", "resilience", "robustness", "detection", "recovery")
SEMANTICS = ("conditional", "strict")


@dataclass
class PropertyResult:
    """A property value with the intermediate quantities it was built from.

    ``value`` is ``nan`` when the property is undefined on this model.
    """

    value: float
    intermediates: Dict[str, float] = field(default_factory=dict)
    flags: Tuple[str, ...] = ()

    def __float__(self):
        return float(self.value)


def _reward_at(model, reward, target, semantics, config) -> float:
    if semantics == "conditional":
        vec = checker.conditional_reach_reward(model, reward, target, config)
    else:
        vec = checker.reach_reward(model, reward, target, config)
    return checker.value_at(vec, model.initial, f"R{{{reward}}}")


def _mission_length(model, semantics, config) -> float:
    return _reward_at(model, "step", MISS_COMP, semantics, config)


def max_deviation_weight(model: LabeledDtmc) -> float:
    return float(np.max(model.reward("deviation").state_rewards, initial=0.0))


def safety(model: LabeledDtmc, config: checker.SolverConfig = checker.DEFAULT) -> PropertyResult:
    p = float(checker.reach_prob(model, MISS_COMP, config)[model.initial])
    return PropertyResult(p, {"P_miss_comp": p})


def resilience(model: LabeledDtmc, semantics: str = "conditional",
               config: checker.SolverConfig = checker.DEFAULT) -> PropertyResult:
    try:
        dev = _reward_at(model, "deviation", MISS_COMP, semantics, config)
        steps = _mission_length(model, semantics, config)
    except ConditioningError:
        return PropertyResult(math.nan, {}, ("undefined",))
    max_dev = max_deviation_weight(model) * steps
    inter = {"deviation_total": dev, "mission_length": steps, "max_dev": max_dev}
    if math.isinf(max_dev):
        return PropertyResult(math.nan, inter, ("undefined",))
    if max_dev == 0:
        return PropertyResult(1.0, inter, ("vacuous",))
    return PropertyResult(1.0 - dev / max_dev, inter)


def robustness(model: LabeledDtmc, config: checker.SolverConfig = checker.DEFAULT) -> PropertyResult:
    crit = as_mask(model, CRIT_SITU)
    den = float(checker.reach_prob(model, crit, config)[model.initial])
    if den == 0:
        return PropertyResult(1.0, {"P_crit": 0.0, "P_crit_then_comp": 0.0}, ("vacuous",))
    num = float(checker.nested_reach_prob(model, crit, MISS_COMP, config)[model.initial])
    return PropertyResult(min(1.0, num / den), {"P_crit": den, "P_crit_then_comp": num})


def detection(model: LabeledDtmc, semantics: str = "conditional", clamp: bool = False,
              config: checker.SolverConfig = checker.DEFAULT) -> PropertyResult:
    crit = as_mask(model, CRIT_SITU)
    p_crit = float(checker.reach_prob(model, crit, config)[model.initial])
    if p_crit == 0:
        return PropertyResult(1.0, {"P_crit": 0.0}, ("vacuous",))
    try:
        steps_crit = _reward_at(model, "step", crit, semantics, config)
        steps_comp = _mission_length(model, semantics, config)
    except ConditioningError:
        return PropertyResult(math.nan, {"P_crit": p_crit}, ("undefined",))
    inter = {"P_crit": p_crit, "steps_to_crit": steps_crit, "mission_length": steps_comp}
    if math.isinf(steps_comp) or steps_comp == 0:
        return PropertyResult(math.nan, inter, ("undefined",))
    value = 1.0 - steps_crit / steps_comp
    flags = ()
    if clamp and not 0.0 <= value <= 1.0:
        value = min(1.0, max(0.0, value))
        flags = ("clamped",)
    return PropertyResult(value, inter, flags)


def recovery(model: LabeledDtmc, semantics: str = "conditional", clamp: bool = False,
             config: checker.SolverConfig = checker.DEFAULT) -> PropertyResult:
    """Experimental: the normalisation reuses the detection denominator."""
    crit = as_mask(model, CRIT_SITU)
    ncrit = as_mask(model, NCRIT_SITU)
    flags = ("experimental",)
    p_nested = float(checker.nested_reach_prob(model, crit, ncrit, config)[model.initial])
    if p_nested == 0:
        return PropertyResult(math.nan, {"P_crit_then_ncrit": 0.0}, flags + ("undefined",))
    try:
        nested = checker.value_at(checker.nested_reach_reward(
            model, "step", crit, ncrit, conditional=semantics == "conditional", config=config),
            model.initial)
        steps_crit = _reward_at(model, "step", crit, semantics, config)
        steps_comp = _mission_length(model, semantics, config)
    except ConditioningError:
        return PropertyResult(math.nan, {"P_crit_then_ncrit": p_nested}, flags + ("undefined",))
    rec_steps = nested - steps_crit if not math.isinf(nested) else math.inf
    inter = {"P_crit_then_ncrit": p_nested, "steps_to_recovered": nested,
             "steps_to_crit": steps_crit, "recovery_steps": rec_steps,
             "mission_length": steps_comp}
    if math.isinf(steps_comp) or steps_comp == 0 or math.isnan(rec_steps):
        return PropertyResult(math.nan, inter, flags + ("undefined",))
    value = 1.0 - rec_steps / steps_comp
    if clamp and not 0.0 <= value <= 1.0:
        value = min(1.0, max(0.0, value))
        flags += ("clamped",)
    return PropertyResult(value, inter, flags)


@dataclass
class DependabilityReport:
    values: Dict[str, float]
    flags: Dict[str, List[str]]
    intermediates: Dict[str, float]
    semantics: str
    provenance: Dict[str, object]

    def __getattr__(self, name):
        if name in PROPERTIES:
            return self.values[name]
        raise AttributeError(name)

    def to_dict(self) -> dict:
        return {
            "properties": {k: _jsonable(v) for k, v in self.values.items()},
            "flags": self.flags,
            "intermediates": {k: _jsonable(v) for k, v in self.intermediates.items()},
            "semantics": self.semantics,
            "provenance": self.provenance,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_table(self, extra: Optional[Dict[str, List[str]]] = None,
                 extra_header: Tuple[str, ...] = ()) -> str:
        header = ("property", "value", "flags") + tuple(extra_header)
        rows = [header]
        for k in PROPERTIES:
            rows.append((k, _fmt(self.values[k]), ",".join(self.flags.get(k, [])) or "-")
                        + tuple((extra or {}).get(k, ())))
        widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
        lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows]
        lines.insert(1, "  ".join("-" * w for w in widths))
        lines.append("")
        lines.append(f"semantics: {self.semantics}")
        for k, v in self.intermediates.items():
            lines.append(f"  {k} = {_fmt(v)}")
        return "\n".join(lines)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["property", "value", "flags"])
        for k in PROPERTIES:
            w.writerow([k, _fmt(self.values[k]), ";".join(self.flags.get(k, []))])
        return buf.getvalue()


def _fmt(v: float) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "undefined"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.6g}"


def _jsonable(v):
    if isinstance(v, float) and (math.isnan(v) or math.isinf(v)):
        return _fmt(v)
    return v


def report(model: LabeledDtmc, semantics: str = "conditional", clamp: bool = False,
           config: checker.SolverConfig = checker.DEFAULT) -> DependabilityReport:
    """Run all five properties and collect intermediates, flags and provenance."""
    if semantics not in SEMANTICS:
        raise ValueError(f"unknown semantics {semantics!r}")
    results = {
        "safety": safety(model, config),
        "resilience": resilience(model, semantics, config),
        "robustness": robustness(model, config),
        "detection": detection(model, semantics, clamp, config),
        "recovery": recovery(model, semantics, clamp, config),
    }
    inter: Dict[str, float] = {}
    for res in results.values():
        inter.update(res.intermediates)
    prov = {"model_hash": model.digest()}
    for key in ("samples", "riskmap", "l_mis", "success_rate"):
        if key in model.meta:
            prov[key] = model.meta[key]
    return DependabilityReport(
        values={k: float(r.value) for k, r in results.items()},
        flags={k: list(r.flags) for k, r in results.items() if r.flags},
        intermediates=inter, semantics=semantics, provenance=prov)
