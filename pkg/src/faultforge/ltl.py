"""LTL abstract syntax, parsing, normalization, and lasso-word evaluation.

``eval_word`` is the semantic ground truth against which the automaton
translation is checked; it never touches automata code.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import FrozenSet, Iterator, Optional, Tuple


class LtlSyntaxError(ValueError):
    def __init__(self, message: str, position: int) -> None:
        super().__init__(f"{message} (at offset {position})")
        self.position = position


@dataclass(frozen=True)
class Formula:
    pass


@dataclass(frozen=True)
class TrueF(Formula):
    pass


@dataclass(frozen=True)
class Prop(Formula):
    name: str


@dataclass(frozen=True)
class Not(Formula):
    child: Formula


@dataclass(frozen=True)
class And(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Or(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Implies(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Next(Formula):
    child: Formula


@dataclass(frozen=True)
class Until(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Eventually(Formula):
    child: Formula


@dataclass(frozen=True)
class Always(Formula):
    child: Formula


TRUE = TrueF()


@dataclass(frozen=True)
class LassoWord:
    """The infinite word prefix . cycle^omega over letters = sets of props."""

    prefix: Tuple[FrozenSet[str], ...]
    cycle: Tuple[FrozenSet[str], ...]

    def __post_init__(self) -> None:
        if not self.cycle:
            raise ValueError("lasso cycle must be nonempty")

    def letter(self, i: int) -> FrozenSet[str]:
        if i < len(self.prefix):
            return self.prefix[i]
        return self.cycle[(i - len(self.prefix)) % len(self.cycle)]

    def canonical(self, i: int) -> int:
        """Fold position i onto the finite prefix+cycle representation."""
        total = len(self.prefix) + len(self.cycle)
        if i < total:
            return i
        return len(self.prefix) + (i - len(self.prefix)) % len(self.cycle)

    def succ(self, i: int) -> int:
        return self.canonical(i + 1)


# -- concrete syntax ---------------------------------------------------------

_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+)
  | (?P<and>&&)
  | (?P<or>\|\|)
  | (?P<implies>->)
  | (?P<eq>==)
  | (?P<neq>!=)
  | (?P<not>!)
  | (?P<lpar>\()
  | (?P<rpar>\))
  | (?P<int>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*(\.[A-Za-z_][A-Za-z0-9_]*)?)
""", re.VERBOSE)

_UNARY = {"G": Always, "F": Eventually, "X": Next}


class _Tokens:
    def __init__(self, text: str) -> None:
        self.text = text
        self.items = []  # (kind, value, position)
        pos = 0
        while pos < len(text):
            m = _TOKEN_RE.match(text, pos)
            if m is None:
                raise LtlSyntaxError(f"unexpected character {text[pos]!r}", pos)
            kind = m.lastgroup
            if kind != "ws":
                self.items.append((kind, m.group(), pos))
            pos = m.end()
        self.i = 0

    def peek(self) -> Optional[tuple]:
        return self.items[self.i] if self.i < len(self.items) else None

    def next(self) -> tuple:
        tok = self.peek()
        if tok is None:
            raise LtlSyntaxError("unexpected end of formula", len(self.text))
        self.i += 1
        return tok

    def expect(self, kind: str) -> tuple:
        tok = self.next()
        if tok[0] != kind:
            raise LtlSyntaxError(f"expected {kind}, found {tok[1]!r}", tok[2])
        return tok


def parse_formula(text: str) -> Formula:
    """Parse concrete syntax.  Precedence: unary > U > && > || > ->;
    U and -> associate to the right."""
    toks = _Tokens(text)
    f = _parse_implies(toks)
    tok = toks.peek()
    if tok is not None:
        raise LtlSyntaxError(f"trailing input {tok[1]!r}", tok[2])
    return f


def _parse_implies(toks: _Tokens) -> Formula:
    left = _parse_or(toks)
    tok = toks.peek()
    if tok is not None and tok[0] == "implies":
        toks.next()
        return Implies(left, _parse_implies(toks))
    return left


def _parse_or(toks: _Tokens) -> Formula:
    left = _parse_and(toks)
    while True:
        tok = toks.peek()
        if tok is None or tok[0] != "or":
            return left
        toks.next()
        left = Or(left, _parse_and(toks))


def _parse_and(toks: _Tokens) -> Formula:
    left = _parse_until(toks)
    while True:
        tok = toks.peek()
        if tok is None or tok[0] != "and":
            return left
        toks.next()
        left = And(left, _parse_until(toks))


def _parse_until(toks: _Tokens) -> Formula:
    left = _parse_unary(toks)
    tok = toks.peek()
    if tok is not None and tok[0] == "ident" and tok[1] == "U":
        toks.next()
        return Until(left, _parse_until(toks))
    return left


def _parse_unary(toks: _Tokens) -> Formula:
    tok = toks.peek()
    if tok is None:
        raise LtlSyntaxError("missing operand", len(toks.text))
    kind, value, pos = tok
    if kind == "not":
        toks.next()
        return Not(_parse_unary(toks))
    if kind == "ident" and value in _UNARY:
        toks.next()
        return _UNARY[value](_parse_unary(toks))
    return _parse_atom(toks)


def _parse_atom(toks: _Tokens) -> Formula:
    kind, value, pos = toks.next()
    if kind == "lpar":
        f = _parse_implies(toks)
        toks.expect("rpar")
        return f
    if kind != "ident":
        raise LtlSyntaxError(f"expected an atom, found {value!r}", pos)
    if value == "true":
        return TRUE
    if value == "false":
        return Not(TRUE)
    if value in ("empty", "len") and toks.peek() is not None and toks.peek()[0] == "lpar":
        toks.next()
        chan = toks.expect("ident")[1]
        toks.expect("rpar")
        if value == "empty":
            return Prop(f"empty({chan})")
        toks.expect("eq")
        n = toks.expect("int")[1]
        return Prop(f"len({chan})=={int(n)}")
    nxt = toks.peek()
    if nxt is not None and nxt[0] in ("eq", "neq"):
        op = toks.next()[0]
        rkind, rvalue, rpos = toks.next()
        if rkind not in ("ident", "int"):
            raise LtlSyntaxError(f"expected a value after comparison, found {rvalue!r}", rpos)
        atom = Prop(f"{value}=={rvalue}")
        return Not(atom) if op == "neq" else atom
    return Prop(value)


def pretty(f: Formula) -> str:
    if isinstance(f, TrueF):
        return "true"
    if isinstance(f, Prop):
        m = re.fullmatch(r"(.+?)==(.+)", f.name)
        if m and not f.name.startswith(("len(", "empty(")):
            return f"{m.group(1)} == {m.group(2)}"
        m = re.fullmatch(r"len\((.+)\)==(\d+)", f.name)
        if m:
            return f"len({m.group(1)}) == {m.group(2)}"
        return f.name
    if isinstance(f, Not):
        return f"!{_wrap(f.child)}"
    if isinstance(f, Next):
        return f"X {_wrap(f.child)}"
    if isinstance(f, Eventually):
        return f"F {_wrap(f.child)}"
    if isinstance(f, Always):
        return f"G {_wrap(f.child)}"
    if isinstance(f, And):
        return f"{_wrap(f.left)} && {_wrap(f.right)}"
    if isinstance(f, Or):
        return f"{_wrap(f.left)} || {_wrap(f.right)}"
    if isinstance(f, Implies):
        return f"{_wrap(f.left)} -> {_wrap(f.right)}"
    if isinstance(f, Until):
        return f"{_wrap(f.left)} U {_wrap(f.right)}"
    raise TypeError(f"not a formula: {f!r}")


def _wrap(f: Formula) -> str:
    if isinstance(f, (TrueF, Prop)):
        return pretty(f)
    if isinstance(f, (Not, Next, Eventually, Always)):
        return pretty(f)
    return f"({pretty(f)})"


def atoms(f: Formula) -> frozenset:
    if isinstance(f, Prop):
        return frozenset([f.name])
    if isinstance(f, (Not, Next, Eventually, Always)):
        return atoms(f.child)
    if isinstance(f, (And, Or, Implies, Until)):
        return atoms(f.left) | atoms(f.right)
    return frozenset()


def map_atoms(f: Formula, fn) -> Formula:
    """Rewrite every Prop leaf with fn(name) -> Formula."""
    if isinstance(f, Prop):
        return fn(f.name)
    if isinstance(f, Not):
        return Not(map_atoms(f.child, fn))
    if isinstance(f, Next):
        return Next(map_atoms(f.child, fn))
    if isinstance(f, Eventually):
        return Eventually(map_atoms(f.child, fn))
    if isinstance(f, Always):
        return Always(map_atoms(f.child, fn))
    if isinstance(f, And):
        return And(map_atoms(f.left, fn), map_atoms(f.right, fn))
    if isinstance(f, Or):
        return Or(map_atoms(f.left, fn), map_atoms(f.right, fn))
    if isinstance(f, Implies):
        return Implies(map_atoms(f.left, fn), map_atoms(f.right, fn))
    if isinstance(f, Until):
        return Until(map_atoms(f.left, fn), map_atoms(f.right, fn))
    return f


def expand_derived(f: Formula) -> Formula:
    """Rewrite into the core {true, prop, not, and, next, until} syntax:
    F p = true U p, G p = !(true U !p), a||b = !(!a && !b), a->b = !(a && !b)."""
    if isinstance(f, (TrueF, Prop)):
        return f
    if isinstance(f, Not):
        return Not(expand_derived(f.child))
    if isinstance(f, Next):
        return Next(expand_derived(f.child))
    if isinstance(f, And):
        return And(expand_derived(f.left), expand_derived(f.right))
    if isinstance(f, Until):
        return Until(expand_derived(f.left), expand_derived(f.right))
    if isinstance(f, Eventually):
        return Until(TRUE, expand_derived(f.child))
    if isinstance(f, Always):
        return Not(Until(TRUE, Not(expand_derived(f.child))))
    if isinstance(f, Or):
        return Not(And(Not(expand_derived(f.left)), Not(expand_derived(f.right))))
    if isinstance(f, Implies):
        return Not(And(expand_derived(f.left), Not(expand_derived(f.right))))
    raise TypeError(f"not a formula: {f!r}")


def eval_word(f: Formula, w: LassoWord, i: int = 0) -> bool:
    """Decide w, i |= f on an ultimately periodic word.

    Positions fold onto prefix+cycle; untils scan at most
    |prefix| + 2*|cycle| steps, which covers every reachable position.
    """
    total = len(w.prefix) + len(w.cycle)
    if i >= total:
        raise ValueError(f"position {i} outside prefix+cycle range {total}")
    memo: dict = {}

    def ev(g: Formula, pos: int) -> bool:
        key = (g, pos)
        if key in memo:
            return memo[key]
        if isinstance(g, TrueF):
            result = True
        elif isinstance(g, Prop):
            result = g.name in w.letter(pos)
        elif isinstance(g, Not):
            result = not ev(g.child, pos)
        elif isinstance(g, And):
            result = ev(g.left, pos) and ev(g.right, pos)
        elif isinstance(g, Or):
            result = ev(g.left, pos) or ev(g.right, pos)
        elif isinstance(g, Implies):
            result = (not ev(g.left, pos)) or ev(g.right, pos)
        elif isinstance(g, Next):
            result = ev(g.child, w.succ(pos))
        elif isinstance(g, Eventually):
            result = _scan_until(TRUE, g.child, pos)
        elif isinstance(g, Always):
            result = not _scan_until(TRUE, Not(g.child), pos)
        elif isinstance(g, Until):
            result = _scan_until(g.left, g.right, pos)
        else:
            raise TypeError(f"not a formula: {g!r}")
        memo[key] = result
        return result

    def _scan_until(a: Formula, b: Formula, pos: int) -> bool:
        bound = len(w.prefix) + 2 * len(w.cycle)
        j = pos
        for _ in range(bound):
            if ev(b, j):
                return True
            if not ev(a, j):
                return False
            j = w.succ(j)
        return False

    return ev(f, i)
