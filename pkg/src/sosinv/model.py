"""Single-loop programs as constrained piecewise polynomial systems.

A program in the input language::

    # comments run to the end of the line
    x1, x2 in [0.9, 1.1] x [0, 0.2];
    while (-1 <= 0) {
      case (x1^2 + x2^2 <= 1):
        x1 = x1^2 + x2^3;
        x2 = x1^3 + x2^2;
      case (-x1^2 - x2^2 < -1):
        x1 = 0.5*x1^3 + 0.4*x2^2;
        x2 = -0.6*x1^2 + 0.3*x2^2;
    }

Assignments inside a case are parallel: every right-hand side reads the
state at the top of the iteration.  Comparisons ``a <= b`` / ``a < b`` are
stored as ``a - b <= 0`` / ``a - b < 0``.
"""
from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .poly import DimensionError, PolyMap, Polynomial


class ParseError(ValueError):
    """Malformed program or expression text."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = f" at line {line}, column {column}" if line is not None else ""
        super().__init__(f"{message}{where}")


@dataclass(frozen=True)
class Constraint:
    """``poly(x) <= 0`` (or ``< 0`` when ``strict``)."""

    poly: Polynomial
    strict: bool = False

    def holds(self, x) -> bool:
        v = self.poly.eval(x)
        return v < 0.0 if self.strict else v <= 0.0


@dataclass(frozen=True)
class SemialgebraicSet:
    constraints: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "constraints", tuple(self.constraints))
        if len({c.poly.dim for c in self.constraints}) > 1:
            raise DimensionError("constraints of a set disagree on dimension")

    def __len__(self):
        return len(self.constraints)

    def contains(self, x) -> bool:
        return membership(self, x)


def membership(S: SemialgebraicSet, x) -> bool:
    """True iff every constraint holds with its declared strictness."""
    x = np.asarray(x, dtype=float)
    for c in S.constraints:
        if c.poly.dim != x.shape[-1]:
            raise DimensionError(f"point of dimension {x.shape[-1]} against a {c.poly.dim}-variate set")
        if not c.holds(x):
            return False
    return True


@dataclass(frozen=True)
class Cell:
    guard: SemialgebraicSet
    update: PolyMap


@dataclass(frozen=True)
class PPS:
    """Initial set, loop condition, and ordered guarded polynomial updates."""

    variables: tuple
    box: tuple  # ((lo, hi), ...) per variable
    x0: SemialgebraicSet
    cells: tuple
    x_in: SemialgebraicSet = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        object.__setattr__(self, "box", tuple((float(a), float(b)) for a, b in self.box))
        object.__setattr__(self, "cells", tuple(self.cells))
        d = len(self.variables)
        if d == 0:
            raise ValueError("a program needs at least one variable")
        if len(self.box) != d:
            raise DimensionError(f"{d} variables but {len(self.box)} box intervals")
        if not self.cells:
            raise ValueError("a program needs at least one case")
        for cell in self.cells:
            if cell.update.dim_in != d or cell.update.dim_out != d:
                raise DimensionError("update map does not act on the program state")
            for c in cell.guard.constraints:
                if c.poly.dim != d:
                    raise DimensionError("guard dimension differs from the state dimension")
        for c in self.x0.constraints:
            if c.poly.dim != d:
                raise DimensionError("loop condition dimension differs from the state dimension")
        cons = []
        for k, (lo, hi) in enumerate(self.box):
            xk = Polynomial.variable(d, k)
            cons.append(Constraint(lo - xk))
            cons.append(Constraint(xk - hi))
        object.__setattr__(self, "x_in", SemialgebraicSet(tuple(cons)))

    @property
    def dim(self) -> int:
        return len(self.variables)

    @property
    def max_update_degree(self) -> int:
        return max(cell.update.degree for cell in self.cells)

    def fingerprint(self) -> str:
        return hashlib.sha256(render_program(self).encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class SublevelProperty:
    """``{x : kappa(x) <= alpha}``; ``alpha = inf`` asks for boundedness only."""

    kappa: Polynomial
    alpha: float = math.inf

    def __post_init__(self):
        a = float(self.alpha)
        if math.isnan(a) or a == -math.inf:
            raise ValueError("alpha must be a finite float or +inf")
        object.__setattr__(self, "alpha", a)

    @property
    def bounded_only(self) -> bool:
        return math.isinf(self.alpha)


def select_cell(pps: PPS, x) -> int | None:
    """Zero-based index of the first cell whose guard contains ``x``."""
    for i, cell in enumerate(pps.cells):
        if membership(cell.guard, x):
            return i
    return None


def partition_diagnostic(pps: PPS, probe_box=None, n: int = 10_000, seed: int = 0) -> dict:
    """Sample the guards to spot holes and overlaps in the cell cover.

    Returns counts of points matched by no guard and by several guards,
    plus a few witnesses of each.  Nothing here is fatal.
    """
    box = np.array(probe_box if probe_box is not None else pps.box, dtype=float)
    rng = np.random.Generator(np.random.Philox(seed))
    pts = box[:, 0] + (box[:, 1] - box[:, 0]) * rng.random((n, pps.dim))
    holes, overlaps = [], []
    for x in pts:
        hits = [i for i, cell in enumerate(pps.cells) if membership(cell.guard, x)]
        if not hits:
            holes.append(x.tolist())
        elif len(hits) > 1:
            overlaps.append((x.tolist(), hits))
    return {
        "samples": n,
        "uncovered": len(holes),
        "multiply_covered": len(overlaps),
        "uncovered_examples": holes[:5],
        "overlap_examples": overlaps[:5],
    }


# ---------------------------------------------------------------- lexer

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>\#[^\n]*)
  | (?P<number>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op><=|<|>=|>|==|[-+*/^(),;:\[\]{}=])
    """,
    re.VERBOSE,
)

_KEYWORDS = {"in", "while", "case", "and", "true"}


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list:
    toks = []
    line, line_start, pos = 1, 0, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind not in ("ws", "comment"):
            if kind == "ident" and m.group() in _KEYWORDS:
                kind = "kw"
            toks.append(_Tok(kind, m.group(), line, pos - line_start + 1))
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - line_start + 1))
    return toks


class _Parser:
    def __init__(self, text: str, variables: Sequence[str] | None = None):
        self.toks = _tokenize(text)
        self.i = 0
        self.vars = list(variables) if variables is not None else None

    # -- token helpers
    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def error(self, msg: str, tok: _Tok | None = None):
        tok = tok or self.tok
        raise ParseError(msg, tok.line, tok.col)

    def accept(self, text: str) -> bool:
        if self.tok.text == text and self.tok.kind in ("op", "kw", "ident"):
            self.i += 1
            return True
        return False

    def expect(self, text: str) -> _Tok:
        tok = self.tok
        if not self.accept(text):
            found = tok.text or "end of input"
            self.error(f"expected {text!r}, found {found!r}", tok)
        return tok

    def number(self) -> float:
        sign = -1.0 if self.accept("-") else 1.0
        if not sign < 0:
            self.accept("+")
        tok = self.tok
        if tok.kind != "number":
            self.error(f"expected a number, found {tok.text or 'end of input'!r}")
        self.i += 1
        return sign * float(tok.text)

    # -- polynomial expressions
    def expr(self) -> Polynomial:
        left = self.term()
        while self.tok.text in ("+", "-") and self.tok.kind == "op":
            op = self.tok.text
            self.i += 1
            right = self.term()
            left = left + right if op == "+" else left - right
        return left

    def term(self) -> Polynomial:
        left = self.unary()
        while self.tok.kind == "op" and self.tok.text in ("*", "/"):
            if self.tok.text == "/":
                self.error("division is not a polynomial operation")
            self.i += 1
            left = left * self.unary()
        return left

    def unary(self) -> Polynomial:
        if self.tok.kind == "op" and self.tok.text in ("+", "-"):
            neg = self.tok.text == "-"
            self.i += 1
            val = self.unary()
            return -val if neg else val
        return self.power()

    def power(self) -> Polynomial:
        base = self.atom()
        if self.accept("^"):
            tok = self.tok
            if tok.kind != "number" or not re.fullmatch(r"\d+", tok.text):
                self.error("exponents must be nonnegative integer literals", tok)
            self.i += 1
            base = base ** int(tok.text)
        return base

    def atom(self) -> Polynomial:
        tok = self.tok
        d = len(self.vars)
        if tok.kind == "number":
            self.i += 1
            return Polynomial.constant(d, float(tok.text))
        if tok.kind == "ident":
            if tok.text not in self.vars:
                self.error(f"unknown identifier {tok.text!r}", tok)
            self.i += 1
            return Polynomial.variable(d, self.vars.index(tok.text))
        if self.accept("("):
            val = self.expr()
            self.expect(")")
            return val
        self.error(f"unexpected {tok.text or 'end of input'!r} in expression", tok)

    # -- guards
    def comparison(self) -> Constraint:
        lhs = self.expr()
        tok = self.tok
        if tok.text == "<=":
            strict = False
        elif tok.text == "<":
            strict = True
        else:
            self.error(f"expected '<=' or '<', found {tok.text or 'end of input'!r}", tok)
        self.i += 1
        rhs = self.expr()
        return Constraint(lhs - rhs, strict)

    def guard(self) -> SemialgebraicSet:
        if self.accept("true"):
            return SemialgebraicSet(())
        cons = [self.comparison()]
        while self.accept("and"):
            cons.append(self.comparison())
        return SemialgebraicSet(tuple(cons))

    # -- program
    def program(self) -> PPS:
        names = [self.ident()]
        while self.accept(","):
            names.append(self.ident())
        if len(set(names)) != len(names):
            self.error("duplicate variable declaration")
        self.vars = names
        self.expect("in")
        box = [self.interval()]
        while self.tok.kind == "ident" and self.tok.text == "x":
            self.i += 1
            box.append(self.interval())
        if len(box) != len(names):
            self.error(f"{len(names)} variables declared but the box has {len(box)} intervals")
        self.expect(";")
        self.expect("while")
        self.expect("(")
        x0 = self.guard()
        self.expect(")")
        self.expect("{")
        cells = []
        while self.tok.text == "case":
            cells.append(self.case())
        if not cells:
            self.error("the loop body needs at least one 'case'")
        self.expect("}")
        if self.tok.kind != "eof":
            self.error(f"trailing input {self.tok.text!r}")
        return PPS(tuple(names), tuple(box), x0, tuple(cells))

    def ident(self) -> str:
        tok = self.tok
        if tok.kind != "ident":
            self.error(f"expected an identifier, found {tok.text or 'end of input'!r}", tok)
        self.i += 1
        return tok.text

    def interval(self):
        self.expect("[")
        lo = self.number()
        self.expect(",")
        hi = self.number()
        self.expect("]")
        if lo > hi:
            self.error(f"empty interval [{lo}, {hi}]")
        return (lo, hi)

    def case(self) -> Cell:
        self.expect("case")
        self.expect("(")
        guard = self.guard()
        self.expect(")")
        self.expect(":")
        d = len(self.vars)
        comps = [Polynomial.variable(d, k) for k in range(d)]
        assigned = set()
        while self.tok.kind == "ident":
            tok = self.tok
            name = self.ident()
            if name not in self.vars:
                self.error(f"assignment to undeclared variable {name!r}", tok)
            if name in assigned:
                self.error(f"variable {name!r} assigned twice in one case", tok)
            self.expect("=")
            comps[self.vars.index(name)] = self.expr()
            self.expect(";")
            assigned.add(name)
        if not assigned:
            self.error("a case needs at least one assignment")
        return Cell(guard, PolyMap(comps))


def parse_program(text: str) -> PPS:
    return _Parser(text).program()


def parse_polynomial(text: str, variables: Sequence[str]) -> Polynomial:
    """Parse a polynomial expression over the given variable names."""
    p = _Parser(text, variables)
    val = p.expr()
    if p.tok.kind != "eof":
        p.error(f"trailing input {p.tok.text!r}")
    return val


def parse_alpha(text: str) -> float:
    t = text.strip().lower()
    if t in ("inf", "+inf"):
        return math.inf
    try:
        return float(t)
    except ValueError:
        raise ParseError(f"alpha must be a decimal number or 'inf', got {text!r}") from None


def parse_property(kappa: str, alpha: str | float, variables: Sequence[str]) -> SublevelProperty:
    a = parse_alpha(alpha) if isinstance(alpha, str) else float(alpha)
    return SublevelProperty(parse_polynomial(kappa, variables), a)


def _render_constraint(c: Constraint, names) -> str:
    return f"{c.poly.to_str(names)} {'<' if c.strict else '<='} 0"


def _render_guard(S: SemialgebraicSet, names) -> str:
    if not S.constraints:
        return "true"
    return " and ".join(_render_constraint(c, names) for c in S.constraints)


def _num(v: float) -> str:
    return str(int(v)) if v == int(v) and abs(v) < 1e15 else repr(v)


def render_program(pps: PPS) -> str:
    """Canonical program text; parsing it back yields an equal PPS."""
    names = pps.variables
    box = " x ".join(f"[{_num(lo)}, {_num(hi)}]" for lo, hi in pps.box)
    lines = [f"{', '.join(names)} in {box};", f"while ({_render_guard(pps.x0, names)}) {{"]
    for cell in pps.cells:
        lines.append(f"  case ({_render_guard(cell.guard, names)}):")
        for k, comp in enumerate(cell.update.components):
            lines.append(f"    {names[k]} = {comp.to_str(names)};")
    lines.append("}")
    return "\n".join(lines) + "\n"
