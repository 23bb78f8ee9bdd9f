"""Parser, printer and evaluator for the supported PCTL fragment.

Surface syntax (whitespace-insensitive)::

    P=? [ F phi ]            P>=0.9 [ phi1 U phi2 ]     P=? [ X a ]
    P=? [ F (a & F b) ]      R{"step"}=? [ F phi ]      R{"deviation"}=? [ C<=10 ]

State formulae combine ``true``, propositions (bare identifiers or quoted
strings), ``&``, ``!`` and parentheses.  ``F``, ``X``, ``U``, ``C``, ``P``,
``R`` and ``true`` are reserved; quote a proposition to use one as a name.
"""
from __future__ import annotations

import re
from typing import List, Optional, Tuple

import numpy as np

from . import checker
from . import formula as F
from .errors import ConditioningError, PctlSyntaxError, UnsupportedNesting
from .model import LabeledDtmc, state_mask

RESERVED = {"F", "X", "U", "C", "P", "R", "true"}
_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")

_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<str>"[^"]*")
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op><=|>=|=\?|[<>&!()\[\]{}])
""", re.VERBOSE)

Token = Tuple[str, str, int]


def tokenize(text: str) -> List[Token]:
    out = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise PctlSyntaxError(f"unexpected character {text[pos]!r}", pos, text)
        kind = m.lastgroup
        if kind != "ws":
            out.append((kind, m.group(), pos))
        pos = m.end()
    out.append(("eof", "", len(text)))
    return out


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks = tokenize(text)
        self.i = 0

    # token helpers
    def peek(self, k: int = 0) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def at(self, value: str, k: int = 0) -> bool:
        kind, val, _ = self.peek(k)
        return val == value and kind in ("op", "ident")

    def take(self) -> Token:
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, value: str) -> Token:
        if not self.at(value):
            self.fail(f"expected {value!r}")
        return self.take()

    def fail(self, message: str, tok: Optional[Token] = None):
        kind, val, pos = tok or self.peek()
        found = "end of input" if kind == "eof" else repr(val)
        raise PctlSyntaxError(f"{message}, found {found}", pos, self.text)

    # grammar
    def state(self) -> F.StateFormula:
        left = self.unary()
        while self.at("&"):
            self.take()
            left = F.And(left, self.unary())
        return left

    def unary(self) -> F.StateFormula:
        if self.at("!"):
            self.take()
            return F.Not(self.unary())
        return self.atom()

    def atom(self) -> F.StateFormula:
        kind, val, pos = self.peek()
        if kind == "op" and val == "(":
            self.take()
            inner = self.state()
            self.expect(")")
            return inner
        if kind == "str":
            self.take()
            return F.Ap(val[1:-1])
        if kind == "ident":
            if val == "true":
                self.take()
                return F.TrueF()
            if val == "P" and self._bound_follows(1):
                return self.prob_query()
            if val == "R" and (self.at("{", 1) or self._bound_follows(1)):
                return self.reward_query()
            if val == "F":
                raise UnsupportedNesting("unsupported nesting: F inside a state formula",
                                         pos, self.text)
            if val in RESERVED:
                self.fail("reserved word where a state formula was expected")
            self.take()
            return F.Ap(val)
        self.fail("expected a state formula")

    def _bound_follows(self, k: int) -> bool:
        return self.peek(k)[1] in ("=?", "<", "<=", ">", ">=")

    def bound(self, upper: Optional[float]) -> F.Bound:
        kind, val, pos = self.peek()
        if val == "=?":
            self.take()
            return F.QUERY
        if val not in ("<", "<=", ">", ">="):
            self.fail("expected '=?' or a comparison")
        self.take()
        tok = self.peek()
        if tok[0] != "num":
            self.fail("expected a number")
        self.take()
        x = float(tok[1])
        if upper is not None and x > upper:
            raise PctlSyntaxError(f"probability bound {x} outside [0, 1]", tok[2], self.text)
        return F.Bound(val, x)

    def prob_query(self) -> F.ProbQuery:
        self.expect("P")
        b = self.bound(1.0)
        self.expect("[")
        path = self.path()
        self.expect("]")
        return F.ProbQuery(b, path)

    def reward_query(self) -> F.RewardQuery:
        self.expect("R")
        name = None
        if self.at("{"):
            self.take()
            kind, val, _ = self.peek()
            if kind not in ("str", "ident"):
                self.fail("expected a reward structure name")
            self.take()
            name = val[1:-1] if kind == "str" else val
            self.expect("}")
        b = self.bound(None)
        self.expect("[")
        if self.at("C"):
            self.take()
            self.expect("<=")
            tok = self.peek()
            if tok[0] != "num" or not re.fullmatch(r"\d+", tok[1]):
                self.fail("expected a non-negative integer step bound")
            self.take()
            rew = F.CumulBound(int(tok[1]))
        elif self.at("F"):
            self.take()
            ev = self.eventually_body()
            rew = (F.ReachRewardNested(ev.first, ev.then) if isinstance(ev, F.EventuallyNested)
                   else F.ReachReward(ev.operand))
        else:
            self.fail("expected 'F' or 'C<=' in reward formula")
        self.expect("]")
        return F.RewardQuery(name, b, rew)

    def path(self) -> F.PathFormula:
        if self.at("X"):
            self.take()
            return F.Next(self.unary())
        if self.at("F"):
            self.take()
            return self.eventually_body()
        left = self.state()
        self.expect("U")
        return F.Until(left, self.state())

    def eventually_body(self):
        """After ``F``: a state formula, or ``( ... & F psi ... )`` with one inner F."""
        if not self.at("("):
            return F.Eventually(self.unary())
        start = self.i
        self.take()
        terms, nested = [], None
        while True:
            if self.at("F"):
                f_tok = self.take()
                if nested is not None:
                    raise UnsupportedNesting("unsupported nesting: more than one inner F",
                                             f_tok[2], self.text)
                nested = self.unary()
            else:
                terms.append(self.unary())
            if self.at("&"):
                self.take()
                continue
            break
        if self.at("F") or self.at("U"):
            raise UnsupportedNesting("unsupported nesting of temporal operators",
                                     self.peek()[2], self.text)
        self.expect(")")
        if nested is None:
            # plain parenthesised state formula; reparse for the full grammar
            self.i = start
            return F.Eventually(self.unary())
        if not terms:
            raise UnsupportedNesting("unsupported nesting: F F without a state conjunct",
                                     self.toks[start][2], self.text)
        return F.EventuallyNested(F.conj(*terms), nested)



def parse(text: str) -> F.StateFormula:
    """Parse a PCTL state formula (usually a ``P`` or ``R`` query)."""
    p = _Parser(text)
    out = p.state()
    if p.peek()[0] != "eof":
        if p.at("F") or p.at("U"):
            raise UnsupportedNesting("unsupported nesting of temporal operators",
                                     p.peek()[2], text)
        p.fail("trailing input")
    return out


def parse_state(text: str) -> F.StateFormula:
    return parse(text)


# -- printing ---------------------------------------------------------------

def _name(n: str) -> str:
    return n if _IDENT.match(n) and n not in RESERVED else f'"{n}"'


def _num(x: float) -> str:
    return repr(float(x))


def to_string(f) -> str:
    """Canonical text for an AST; ``parse(to_string(f)) == f``."""
    if isinstance(f, F.TrueF):
        return "true"
    if isinstance(f, F.Ap):
        return _name(f.name)
    if isinstance(f, F.Not):
        return "!" + _atomic(f.operand)
    if isinstance(f, F.And):
        left = to_string(f.left) if isinstance(f.left, F.And) else _atomic(f.left)
        return f"{left} & {_atomic(f.right)}"
    if isinstance(f, F.Bound):
        return "=?" if f.is_query else f"{f.op}{_num(f.value)}"
    if isinstance(f, F.ProbQuery):
        return f"P{to_string(f.bound)} [ {to_string(f.path)} ]"
    if isinstance(f, F.RewardQuery):
        head = "R" if f.structure is None else f"R{{\"{f.structure}\"}}"
        return f"{head}{to_string(f.bound)} [ {to_string(f.reward)} ]"
    if isinstance(f, F.Next):
        return f"X {_atomic(f.operand)}"
    if isinstance(f, F.Eventually):
        return f"F {_atomic(f.operand)}"
    if isinstance(f, (F.EventuallyNested, F.ReachRewardNested)):
        return f"F ({to_string(f.first)} & F {_atomic(f.then)})"
    if isinstance(f, F.Until):
        return f"{to_string(f.left)} U {to_string(f.right)}"
    if isinstance(f, F.CumulBound):
        return f"C<={f.steps}"
    if isinstance(f, F.ReachReward):
        return f"F {_atomic(f.target)}"
    raise TypeError(f"not a formula node: {f!r}")


def _atomic(f) -> str:
    s = to_string(f)
    if isinstance(f, (F.TrueF, F.Ap, F.Not, F.ProbQuery, F.RewardQuery)):
        return s
    return f"({s})"


# -- evaluation -------------------------------------------------------------

def values(query, model: LabeledDtmc, semantics: str = "strict",
           config: checker.SolverConfig = checker.DEFAULT) -> np.ndarray:
    """Per-state numerical value of a ``P`` or ``R`` query (bound ignored).

    ``semantics="conditional"`` evaluates reachability rewards conditioned on
    the target event; entries with a null conditioning event are ``nan``.
    """
    if semantics not in ("strict", "conditional"):
        raise ValueError(f"unknown semantics {semantics!r}")
    sat = lambda f: satisfaction(f, model, semantics, config)  # noqa: E731
    if isinstance(query, F.ProbQuery):
        p = query.path
        if isinstance(p, F.Next):
            return checker.next_prob(model, sat(p.operand))
        if isinstance(p, F.Eventually):
            return checker.reach_prob(model, sat(p.operand), config)
        if isinstance(p, F.Until):
            return checker.until_prob(model, sat(p.left), sat(p.right), config)
        if isinstance(p, F.EventuallyNested):
            return checker.nested_reach_prob(model, sat(p.first), sat(p.then), config)
        raise TypeError(f"not a path formula: {p!r}")
    if isinstance(query, F.RewardQuery):
        r = model.reward(query.structure)
        rf = query.reward
        if isinstance(rf, F.CumulBound):
            return checker.bounded_cumulative(model, r, rf.steps)
        if isinstance(rf, F.ReachReward):
            if semantics == "conditional":
                return checker.conditional_reach_reward(model, r, sat(rf.target), config)
            return checker.reach_reward(model, r, sat(rf.target), config)
        if isinstance(rf, F.ReachRewardNested):
            return checker.nested_reach_reward(model, r, sat(rf.first), sat(rf.then),
                                               conditional=semantics == "conditional",
                                               config=config)
        raise TypeError(f"not a reward formula: {rf!r}")
    raise TypeError(f"not a P/R query: {query!r}")


def satisfaction(f, model: LabeledDtmc, semantics: str = "strict",
                 config: checker.SolverConfig = checker.DEFAULT) -> np.ndarray:
    """Boolean mask of states satisfying state formula ``f``."""
    if isinstance(f, F.PROPOSITIONAL) and not _has_query(f):
        return state_mask(model, f)
    if isinstance(f, F.And):
        return satisfaction(f.left, model, semantics, config) & \
            satisfaction(f.right, model, semantics, config)
    if isinstance(f, F.Not):
        return ~satisfaction(f.operand, model, semantics, config)
    if isinstance(f, (F.ProbQuery, F.RewardQuery)):
        if f.bound.is_query:
            raise ValueError("numerical query used where a state formula is required")
        v = values(f, model, semantics, config)
        with np.errstate(invalid="ignore"):
            return np.array([not np.isnan(x) and f.bound.holds(x) for x in v], dtype=bool)
    raise TypeError(f"not a state formula: {f!r}")


def _has_query(f) -> bool:
    if isinstance(f, (F.ProbQuery, F.RewardQuery)):
        return True
    if isinstance(f, F.And):
        return _has_query(f.left) or _has_query(f.right)
    if isinstance(f, F.Not):
        return _has_query(f.operand)
    return False


def evaluate(f, model: LabeledDtmc, state: Optional[int] = None, semantics: str = "strict",
             config: checker.SolverConfig = checker.DEFAULT):
    """Value of ``f`` at ``state`` (default: the initial state).

    Numerical queries (``=?``) return a float (``inf`` allowed); everything
    else returns a bool.
    """
    if isinstance(f, str):
        f = parse(f)
    s = model.initial if state is None else state
    if isinstance(f, (F.ProbQuery, F.RewardQuery)) and f.bound.is_query:
        return checker.value_at(values(f, model, semantics, config), s, to_string(f))
    if isinstance(f, (F.ProbQuery, F.RewardQuery)):
        v = float(values(f, model, semantics, config)[s])
        if np.isnan(v):
            raise ConditioningError(f"{to_string(f)}: conditioning on null event at state {s}")
        return bool(f.bound.holds(v))
    return bool(satisfaction(f, model, semantics, config)[s])


# -- property files ---------------------------------------------------------

DEPENDABILITY_QUERIES = {
    "safety": 'P=? [ F miss_comp ]',
    "resilience_deviation": 'R{"deviation"}=? [ F miss_comp ]',
    "mission_length": 'R{"step"}=? [ F miss_comp ]',
    "robustness_numerator": 'P=? [ F (crit_situ & F miss_comp) ]',
    "robustness_denominator": 'P=? [ F crit_situ ]',
    "detection_steps": 'R{"step"}=? [ F crit_situ ]',
    "recovery_steps": 'R{"step"}=? [ F (crit_situ & F ncrit_situ) ]',
}


def parse_property_file(text: str) -> List[F.StateFormula]:
    """One formula per non-blank line; ``#`` starts a comment."""
    out = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            out.append(parse(line))
    return out
