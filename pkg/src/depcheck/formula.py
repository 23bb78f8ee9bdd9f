"""AST node types for the supported PCTL fragment.

State formulae: :class:`TrueF`, :class:`Ap`, :class:`And`, :class:`Not`,
:class:`ProbQuery`, :class:`RewardQuery`.
Path formulae: :class:`Next`, :class:`Until`, :class:`Eventually`,
:class:`EventuallyNested`.
Reward formulae: :class:`CumulBound`, :class:`ReachReward`,
:class:`ReachRewardNested`.

All nodes are frozen dataclasses, so structural equality is AST equality.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union


@dataclass(frozen=True)
class TrueF:
    pass


@dataclass(frozen=True)
class Ap:
    name: str


@dataclass(frozen=True)
class And:
    left: "StateFormula"
    right: "StateFormula"


@dataclass(frozen=True)
class Not:
    operand: "StateFormula"


@dataclass(frozen=True)
class Bound:
    """Comparison ``op value``; ``op == "=?"`` marks a numerical query."""

    op: str
    value: Optional[float] = None

    @property
    def is_query(self) -> bool:
        return self.op == "=?"

    def holds(self, x: float) -> bool:
        if self.op == "<":
            return x < self.value
        if self.op == "<=":
            return x <= self.value
        if self.op == ">":
            return x > self.value
        if self.op == ">=":
            return x >= self.value
        raise ValueError(f"bound {self.op!r} is a query, not a comparison")


QUERY = Bound("=?")


@dataclass(frozen=True)
class Next:
    operand: "StateFormula"


@dataclass(frozen=True)
class Until:
    left: "StateFormula"
    right: "StateFormula"


@dataclass(frozen=True)
class Eventually:
    operand: "StateFormula"


@dataclass(frozen=True)
class EventuallyNested:
    """``F (first & F then)``: visit ``first``, then (at or after) ``then``."""

    first: "StateFormula"
    then: "StateFormula"


@dataclass(frozen=True)
class CumulBound:
    steps: int


@dataclass(frozen=True)
class ReachReward:
    target: "StateFormula"


@dataclass(frozen=True)
class ReachRewardNested:
    first: "StateFormula"
    then: "StateFormula"


@dataclass(frozen=True)
class ProbQuery:
    bound: Bound
    path: "PathFormula"


@dataclass(frozen=True)
class RewardQuery:
    structure: Optional[str]
    bound: Bound
    reward: "RewardFormula"


StateFormula = Union[TrueF, Ap, And, Not, ProbQuery, RewardQuery]
PathFormula = Union[Next, Until, Eventually, EventuallyNested]
RewardFormula = Union[CumulBound, ReachReward, ReachRewardNested]
PROPOSITIONAL = (TrueF, Ap, And, Not)


def conj(*parts: StateFormula) -> StateFormula:
    """Left-nested conjunction of ``parts`` (``true`` when empty)."""
    if not parts:
        return TrueF()
    out = parts[0]
    for p in parts[1:]:
        out = And(out, p)
    return out
