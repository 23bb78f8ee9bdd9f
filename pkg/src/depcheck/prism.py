"""Export to the PRISM textual DTMC format, plus a re-importer for that subset.

PRISM attaches transition rewards to action labels rather than to
(source, target) pairs, so the exported reward blocks carry the expected
one-step reward ``r_S(s) + sum_s' P(s,s') r_T(s,s')`` as a state reward.
Expected reachability and cumulative rewards are unchanged by this folding.
"""
from __future__ import annotations

import re
from pathlib import Path
from typing import Dict, List, Tuple

import numpy as np
import scipy.sparse as sp

from .errors import DataError
from .model import CRIT_SITU, MISS_COMP, LabeledDtmc, RewardStructure, state_mask

VAR = "s"

PROPERTIES = (
    ("safety", 'P=? [ F "miss_comp" ]'),
    ("resilience (accumulated deviation)", 'R{"deviation"}=? [ F "miss_comp" ]'),
    ("robustness (numerator)", 'P=? [ F ("crit_situ" & F "miss_comp") ]'),
    ("detection (steps to critical situation)", 'R{"step"}=? [ F "crit_situ" ]'),
)
NORMALISERS = (
    ("mission length", 'R{"step"}=? [ F "miss_comp" ]'),
    ("robustness (denominator)", 'P=? [ F "crit_situ" ]'),
)


def _num(x: float) -> str:
    return format(float(x), ".17g")


def _guard(states) -> str:
    states = list(states)
    if not states:
        return "false"
    return " | ".join(f"{VAR}={i}" for i in states)


def export_model(model: LabeledDtmc) -> str:
    n = model.n_states
    m = model.matrix
    out: List[str] = ["dtmc", ""]
    for i, name in enumerate(model.state_names):
        out.append(f"// state {i}: {name}")
    out += ["", "module main", f"  {VAR} : [0..{n - 1}] init {model.initial};"]
    for i in range(n):
        lo, hi = m.indptr[i], m.indptr[i + 1]
        updates = " + ".join(f"{_num(p)}:({VAR}'={j})"
                             for j, p in zip(m.indices[lo:hi], m.data[lo:hi]))
        out.append(f"  [] {VAR}={i} -> {updates};")
    out += ["endmodule", ""]
    for name, r in model.rewards.items():
        step = r.expected_step(m)
        out.append(f'rewards "{name}"')
        for i in np.flatnonzero(step):
            out.append(f"  {VAR}={i} : {_num(step[i])};")
        out += ["endrewards", ""]
    for ap in sorted(model.aps):
        out.append(f'label "{ap}" = {_guard(np.flatnonzero(state_mask(model, ap)))};')
    if model.macros:
        out.append("// derived labels")
        for name in sorted(model.macros):
            out.append(f'label "{name}" = {_guard(np.flatnonzero(state_mask(model, name)))};')
    return "\n".join(out) + "\n"


def export_properties(model: LabeledDtmc) -> str:
    """The non-nested-reward property queries; recovery has no PRISM form."""
    have = set(model.aps) | set(model.macros)
    lines = []
    for title, q in PROPERTIES + NORMALISERS:
        needs = {MISS_COMP, CRIT_SITU} & set(re.findall(r'"(\w+)"', q))
        if needs <= have and all(f'R{{"{r}"}}' not in q or r in model.rewards
                                 for r in ("step", "deviation")):
            lines += [f"// {title}", q, ""]
    return "\n".join(lines)


def write_prism(model: LabeledDtmc, prefix) -> Tuple[Path, Path]:
    prefix = Path(prefix)
    pm, props = prefix.with_suffix(".pm"), prefix.with_suffix(".props")
    pm.write_text(export_model(model))
    props.write_text(export_properties(model))
    return pm, props


# -- re-import --------------------------------------------------------------

_DECL = re.compile(rf"^\s*{VAR}\s*:\s*\[0\.\.(\d+)\]\s*init\s+(\d+)\s*;")
_CMD = re.compile(rf"^\s*\[\]\s*{VAR}=(\d+)\s*->\s*(.*);\s*$")
_UPD = re.compile(rf"^\s*([0-9.eE+-]+)\s*:\s*\({VAR}'=(\d+)\)\s*$")
_LABEL = re.compile(r'^label\s+"(\w+)"\s*=\s*(.*);\s*$')
_REWARD_HEAD = re.compile(r'^rewards\s+"(\w+)"\s*$')
_REWARD_ITEM = re.compile(rf"^\s*{VAR}=(\d+)\s*:\s*([0-9.eE+-]+)\s*;\s*$")
_NAME = re.compile(r"^//\s*state\s+(\d+):\s*(.*)$")


def import_model(text: str) -> LabeledDtmc:
    """Parse a model written by :func:`export_model`.

    Labels after the ``// derived labels`` marker become macros again only
    implicitly: they are kept out of the propositions so the standard macro
    definitions are re-derived.
    """
    n = init = None
    names: Dict[int, str] = {}
    rows, cols, vals = [], [], []
    labels: Dict[str, List[int]] = {}
    rewards: Dict[str, Dict[int, float]] = {}
    current = None
    derived = False
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line == "// derived labels":
            derived = True
            continue
        if mt := _NAME.match(line):
            names[int(mt.group(1))] = mt.group(2)
            continue
        if line.startswith("//") or line in ("dtmc", "module main", "endmodule"):
            continue
        if current is not None:
            if line == "endrewards":
                current = None
            elif mt := _REWARD_ITEM.match(line):
                rewards[current][int(mt.group(1))] = float(mt.group(2))
            else:
                raise DataError(f"unexpected line in reward block: {raw!r}")
        elif mt := _DECL.match(line):
            n, init = int(mt.group(1)) + 1, int(mt.group(2))
        elif mt := _CMD.match(line):
            src = int(mt.group(1))
            for part in mt.group(2).split("+ "):
                um = _UPD.match(part)
                if not um:
                    raise DataError(f"cannot parse update {part!r}")
                rows.append(src)
                cols.append(int(um.group(2)))
                vals.append(float(um.group(1)))
        elif mt := _REWARD_HEAD.match(line):
            current = mt.group(1)
            rewards[current] = {}
        elif mt := _LABEL.match(line):
            if not derived:
                body = mt.group(2).strip()
                labels[mt.group(1)] = [] if body == "false" else \
                    [int(x.split("=")[1]) for x in body.split("|")]
        else:
            raise DataError(f"unrecognised line: {raw!r}")
    if n is None:
        raise DataError("no state variable declaration found")
    matrix = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    lab = [set() for _ in range(n)]
    for ap, states in labels.items():
        for i in states:
            lab[i].add(ap)
    rw = {name: RewardStructure.from_maps(name, n, items, {})
          for name, items in rewards.items()}
    return LabeledDtmc([names.get(i, f"s{i}") for i in range(n)], init, matrix,
                       [frozenset(x) for x in lab], rw, aps=set(labels))


def read_prism(path) -> LabeledDtmc:
    return import_model(Path(path).read_text())
