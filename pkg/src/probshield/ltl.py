"""LTL formulas over atomic propositions and their reduction to reachability.

Supported concrete syntax::

    formula := until
    until   := or ('U' until)?          -- weakest binding, right associative
    or      := and ('|' and)*
    and     := unary ('&' unary)*
    unary   := ('!' | 'G' | 'F' | 'X') unary | '(' formula ')' | IDENT

``G``, ``F``, ``X`` and ``U`` are reserved operator names; atoms are any
other identifier ([A-Za-z_][A-Za-z0-9_]*).  Only the fragment that maps onto
a constrained-reachability problem is accepted by :func:`reduce_formula`:
``F q``, ``G p`` and ``p U q`` with purely propositional operands.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from typing import Iterable

from .mdp import LabelledMdp

__all__ = [
    "Formula",
    "Atom",
    "Not",
    "And",
    "Or",
    "Globally",
    "Eventually",
    "Until",
    "Next",
    "LtlSyntaxError",
    "UnsupportedFragment",
    "DisjointnessViolation",
    "ProblemKind",
    "ReachabilityProblem",
    "parse",
    "pretty",
    "holds",
    "reduce_formula",
]


class Formula:
    """Base class of all AST nodes."""

    __slots__ = ()

    def __str__(self) -> str:
        return pretty(self)


@dataclass(frozen=True)
class Atom(Formula):
    name: str


@dataclass(frozen=True)
class Not(Formula):
    operand: Formula


@dataclass(frozen=True)
class And(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Or(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Globally(Formula):
    operand: Formula


@dataclass(frozen=True)
class Eventually(Formula):
    operand: Formula


@dataclass(frozen=True)
class Until(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Next(Formula):
    operand: Formula


_TEMPORAL = (Globally, Eventually, Until, Next)
_RESERVED = {"G", "F", "X", "U"}


class LtlSyntaxError(ValueError):
    """Parse failure with position and the token set that was expected."""

    def __init__(self, text: str, pos: int, expected: Iterable[str], found: str):
        self.text = text
        self.pos = pos
        self.expected = sorted(expected)
        self.found = found
        super().__init__(
            f"syntax error at position {pos}: found {found}, "
            f"expected one of {', '.join(self.expected)}"
        )


class UnsupportedFragment(ValueError):
    """Formula is valid LTL but outside the reducible fragment."""

    def __init__(self, node: Formula, reason: str):
        self.node = node
        super().__init__(f"unsupported fragment: {reason} (in {pretty(node)!r})")


class DisjointnessViolation(ValueError):
    """A state satisfies both operands of an until under the 'error' tie rule."""


_TOKEN_RE = re.compile(r"\s*(?:([A-Za-z_][A-Za-z0-9_]*)|([!&|()]))")


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            stripped = text[pos:].lstrip()
            if not stripped:
                break
            at = len(text) - len(stripped)
            raise LtlSyntaxError(text, at, {"identifier", "operator"}, repr(text[at]))
        word, sym = m.groups()
        if word is not None:
            kind = word if word in _RESERVED else "IDENT"
            tokens.append((kind, word, m.start(1)))
        else:
            tokens.append((sym, sym, m.start(2)))
        pos = m.end()
    tokens.append(("EOF", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self) -> tuple[str, str, int]:
        return self.tokens[self.i]

    def advance(self) -> tuple[str, str, int]:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, kind: str) -> tuple[str, str, int]:
        tok = self.peek()
        if tok[0] != kind:
            self.fail({kind})
        return self.advance()

    def fail(self, expected: set[str]):
        kind, value, pos = self.peek()
        found = repr(value) if value else "end of input"
        raise LtlSyntaxError(self.text, pos, expected, found)

    def parse(self) -> Formula:
        f = self.until()
        if self.peek()[0] != "EOF":
            self.fail({"EOF", "U", "&", "|"})
        return f

    def until(self) -> Formula:
        left = self.or_expr()
        if self.peek()[0] == "U":
            self.advance()
            right = self.until()  # right associative
            return Until(left, right)
        return left

    def or_expr(self) -> Formula:
        f = self.and_expr()
        while self.peek()[0] == "|":
            self.advance()
            f = Or(f, self.and_expr())
        return f

    def and_expr(self) -> Formula:
        f = self.unary()
        while self.peek()[0] == "&":
            self.advance()
            f = And(f, self.unary())
        return f

    def unary(self) -> Formula:
        kind, value, pos = self.peek()
        if kind == "!":
            self.advance()
            return Not(self.unary())
        if kind == "G":
            self.advance()
            return Globally(self.unary())
        if kind == "F":
            self.advance()
            return Eventually(self.unary())
        if kind == "X":
            self.advance()
            return Next(self.unary())
        if kind == "(":
            self.advance()
            f = self.until()
            self.expect(")")
            return f
        if kind == "IDENT":
            self.advance()
            return Atom(value)
        self.fail({"!", "G", "F", "X", "(", "identifier"})


def parse(text: str) -> Formula:
    """Parse concrete LTL syntax into an AST; raises :class:`LtlSyntaxError`."""
    return _Parser(text).parse()


# Precedence levels used for minimal parenthesisation when pretty-printing.
_LEVEL_UNTIL, _LEVEL_OR, _LEVEL_AND, _LEVEL_UNARY = 0, 1, 2, 3


def _pretty(f: Formula, parent_level: int) -> str:
    if isinstance(f, Atom):
        return f.name
    if isinstance(f, Not):
        return "!" + _pretty(f.operand, _LEVEL_UNARY)
    if isinstance(f, Globally):
        return "G " + _pretty(f.operand, _LEVEL_UNARY)
    if isinstance(f, Eventually):
        return "F " + _pretty(f.operand, _LEVEL_UNARY)
    if isinstance(f, Next):
        return "X " + _pretty(f.operand, _LEVEL_UNARY)
    if isinstance(f, And):
        s = _pretty(f.left, _LEVEL_AND) + " & " + _pretty(f.right, _LEVEL_AND)
        level = _LEVEL_AND
    elif isinstance(f, Or):
        s = _pretty(f.left, _LEVEL_OR) + " | " + _pretty(f.right, _LEVEL_OR)
        level = _LEVEL_OR
    elif isinstance(f, Until):
        # right operand printed at the same level: U is right associative
        s = _pretty(f.left, _LEVEL_OR) + " U " + _pretty(f.right, _LEVEL_UNTIL)
        level = _LEVEL_UNTIL
    else:
        raise TypeError(f"unknown formula node {type(f).__name__}")
    if level < parent_level:
        return "(" + s + ")"
    return s


def pretty(f: Formula) -> str:
    """Concrete syntax with minimal parentheses; parse(pretty(f)) == f."""
    return _pretty(f, _LEVEL_UNTIL)


def is_propositional(f: Formula) -> bool:
    if isinstance(f, Atom):
        return True
    if isinstance(f, Not):
        return is_propositional(f.operand)
    if isinstance(f, (And, Or)):
        return is_propositional(f.left) and is_propositional(f.right)
    return False


def holds(f: Formula, labels: set[str] | frozenset[str]) -> bool:
    """Evaluate a propositional formula against a label set."""
    if isinstance(f, Atom):
        return f.name in labels
    if isinstance(f, Not):
        return not holds(f.operand, labels)
    if isinstance(f, And):
        return holds(f.left, labels) and holds(f.right, labels)
    if isinstance(f, Or):
        return holds(f.left, labels) or holds(f.right, labels)
    if isinstance(f, _TEMPORAL):
        raise ValueError(f"temporal operator in propositional context: {pretty(f)!r}")
    raise TypeError(f"unknown formula node {type(f).__name__}")


def atoms_of(f: Formula) -> set[str]:
    if isinstance(f, Atom):
        return {f.name}
    if isinstance(f, (Not, Globally, Eventually, Next)):
        return atoms_of(f.operand)
    if isinstance(f, (And, Or, Until)):
        return atoms_of(f.left) | atoms_of(f.right)
    raise TypeError(f"unknown formula node {type(f).__name__}")


class ProblemKind(enum.Enum):
    REACH = "reach"
    SAFE = "safe"
    CONSTRAINED_REACH = "constrained-reach"


@dataclass(frozen=True)
class ReachabilityProblem:
    """Target set B and avoid set extracted from a formula.

    For ``kind == SAFE`` the target set is empty and the checker computes
    the safety probability as 1 minus the minimal probability of reaching
    the avoid set.
    """

    kind: ProblemKind
    target_states: frozenset[int]
    avoid_states: frozenset[int]

    def __post_init__(self):
        overlap = self.target_states & self.avoid_states
        if overlap:
            raise ValueError(f"target and avoid sets intersect: {sorted(overlap)[:5]}")


def _check_atoms_declared(f: Formula, mdp: LabelledMdp) -> None:
    declared = set(mdp.propositions)
    unknown = atoms_of(f) - declared
    if unknown:
        raise ValueError(
            f"formula references undeclared propositions: {sorted(unknown)}"
        )


def reduce_formula(
    formula: Formula,
    mdp: LabelledMdp,
    tie_rule: str = "target-wins",
) -> ReachabilityProblem:
    """Map a fragment formula onto a reachability problem over ``mdp``.

    ``F q``   -> REACH with B = {s : q holds}
    ``G p``   -> SAFE with avoid = {s : p fails}
    ``p U q`` -> CONSTRAINED_REACH with B = {s : q holds} and
                 avoid = {s : p fails and q fails}

    Under an until, a state satisfying both the obligation violation and the
    target is resolved by ``tie_rule``: "target-wins" (default, the state
    joins B because the until is discharged on arrival) or "error".
    """
    if tie_rule not in ("target-wins", "error"):
        raise ValueError(f"unknown tie rule {tie_rule!r}")
    _check_atoms_declared(formula, mdp)
    all_labels = [frozenset(mdp.labels_of(s)) for s in range(mdp.num_states)]

    def sat(prop: Formula) -> frozenset[int]:
        return frozenset(s for s, ls in enumerate(all_labels) if holds(prop, ls))

    if isinstance(formula, Eventually):
        if not is_propositional(formula.operand):
            raise UnsupportedFragment(formula, "operand of F must be propositional")
        return ReachabilityProblem(ProblemKind.REACH, sat(formula.operand), frozenset())

    if isinstance(formula, Globally):
        if not is_propositional(formula.operand):
            raise UnsupportedFragment(formula, "operand of G must be propositional")
        keep = sat(formula.operand)
        avoid = frozenset(range(mdp.num_states)) - keep
        return ReachabilityProblem(ProblemKind.SAFE, frozenset(), avoid)

    if isinstance(formula, Until):
        if not (is_propositional(formula.left) and is_propositional(formula.right)):
            raise UnsupportedFragment(formula, "operands of U must be propositional")
        target = sat(formula.right)
        hold_ok = sat(formula.left)
        violating = frozenset(range(mdp.num_states)) - hold_ok
        if tie_rule == "error":
            both = violating & target
            if both:
                raise DisjointnessViolation(
                    f"states satisfy both the until target and the obligation "
                    f"violation: {sorted(both)[:5]}"
                )
        avoid = violating - target  # target-wins: arrival discharges the until
        return ReachabilityProblem(ProblemKind.CONSTRAINED_REACH, target, avoid)

    if isinstance(formula, Next):
        raise UnsupportedFragment(formula, "X is not reducible in this fragment")
    raise UnsupportedFragment(
        formula, "top-level operator must be F, G or U over propositional operands"
    )
