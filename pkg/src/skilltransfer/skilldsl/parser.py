"""Line-oriented parser for task and phase files.

Grammar (one statement per line, ``#`` starts a comment)::

    task_file  = "task" IDENT { "phase" IDENT } ;
    phase_file = "phase" IDENT { soft | hard | stop } ;
    soft  = "soft" sexpr "in" "[" NUM "," NUM "]" [ "weight" NUM ] ;
    hard  = "hard" ("max-linear-speed" | "max-angular-speed") NUM ;
    stop  = "stop" ("velocity-below" | "distance-below" | "dwell") NUM ;
    sexpr = dist(pt, pt) | angle(dir, dir) | height(pt) | along(pt, dir) ;
    pt    = FEATURE | offset(pt, dir, NUM) | midpoint(pt, pt) ;
    dir   = FEATURE | toward(pt, pt) | horizontal_toward(pt, pt) ;

Every error is a DSLError with a 1-based line and column.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

from ..errors import DSLError
from .ast import (
    DEFAULT_DWELL,
    DEFAULT_MAX_ANGULAR_SPEED,
    DEFAULT_MAX_LINEAR_SPEED,
    SIGNATURES,
    Call,
    Constraint,
    Feature,
    PhaseSpec,
    StopCondition,
    TaskDescription,
)

_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r\f\v]+)
  | (?P<num>[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_\-]*)
  | (?P<punct>[()\[\],.])
    """,
    re.VERBOSE | re.ASCII,
)

MAX_DEPTH = 64

_HARD_KEYS = {"max-linear-speed": "max_linear_speed", "max-angular-speed": "max_angular_speed"}
_STOP_KEYS = {"velocity-below": "velocity_below", "distance-below": "distance_below", "dwell": "dwell"}


@dataclass(frozen=True)
class Token:
    kind: str  # num | ident | punct | eol
    text: str
    line: int
    col: int


def _decode(text) -> str:
    if isinstance(text, (bytes, bytearray)):
        try:
            return bytes(text).decode("utf-8")
        except UnicodeDecodeError as exc:
            before = bytes(text)[: exc.start]
            line = before.count(b"\n") + 1
            col = exc.start - (before.rfind(b"\n") + 1) + 1
            raise DSLError("invalid UTF-8 byte", line, col) from None
    return text


def _lines(text: str):
    """Yield (lineno, tokens) for each non-blank statement line."""
    for lineno, raw in enumerate(text.split("\n"), start=1):
        hash_at = raw.find("#")
        body = raw if hash_at < 0 else raw[:hash_at]
        toks = []
        pos = 0
        while pos < len(body):
            m = _TOKEN.match(body, pos)
            if m is None:
                ch = body[pos]
                shown = repr(ch) if ch.isprintable() else f"U+{ord(ch):04X}"
                raise DSLError(f"unexpected character {shown}", lineno, pos + 1)
            kind = m.lastgroup
            if kind != "ws":
                toks.append(Token(kind, m.group(), lineno, pos + 1))
            pos = m.end()
        if toks:
            toks.append(Token("eol", "", lineno, len(body) + 1))
            yield lineno, toks


class _Cursor:
    def __init__(self, toks: list[Token]):
        self.toks = toks
        self.i = 0
        self.depth = 0

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def advance(self) -> Token:
        t = self.toks[self.i]
        if t.kind != "eol":
            self.i += 1
        return t

    def fail(self, msg: str, tok: Token | None = None):
        t = tok or self.tok
        raise DSLError(msg, t.line, t.col)

    def expect_punct(self, ch: str) -> Token:
        t = self.tok
        if t.kind != "punct" or t.text != ch:
            self.fail(f"expected '{ch}', found {_describe(t)}")
        return self.advance()

    def expect_ident(self, what: str = "identifier") -> Token:
        t = self.tok
        if t.kind != "ident":
            self.fail(f"expected {what}, found {_describe(t)}")
        return self.advance()

    def expect_keyword(self, word: str) -> Token:
        t = self.tok
        if t.kind != "ident" or t.text != word:
            self.fail(f"expected '{word}', found {_describe(t)}")
        return self.advance()

    def expect_num(self) -> float:
        t = self.tok
        if t.kind != "num":
            self.fail(f"expected a number, found {_describe(t)}")
        self.advance()
        v = float(t.text)
        if not math.isfinite(v):
            self.fail("number out of range", t)
        return v

    def expect_eol(self):
        if self.tok.kind != "eol":
            self.fail(f"unexpected {_describe(self.tok)} at end of statement")


def _describe(t: Token) -> str:
    return "end of line" if t.kind == "eol" else f"'{t.text}'"


# ---------------------------------------------------------------- expressions


def _parse_arg(cur: _Cursor):
    t = cur.tok
    if t.kind == "num":
        return cur.expect_num(), t
    if t.kind != "ident":
        cur.fail(f"expected a feature, function or number, found {_describe(t)}")
    cur.advance()
    if cur.tok.kind == "punct" and cur.tok.text == "(":
        return _parse_call_rest(cur, t), t
    if cur.tok.kind == "punct" and cur.tok.text == ".":
        cur.advance()
        member = cur.expect_ident("feature member name")
        return Feature(f"{t.text}.{member.text}", t.line, t.col), t
    if t.text in SIGNATURES:
        cur.fail(f"expected '(' after function '{t.text}'")
    cur.fail(f"expected a feature of the form scope.name, found '{t.text}'", t)


def _parse_call_rest(cur: _Cursor, name: Token) -> Call:
    if name.text not in SIGNATURES:
        cur.fail(f"unknown function '{name.text}'", name)
    if cur.depth >= MAX_DEPTH:
        cur.fail(f"expression nested deeper than {MAX_DEPTH} calls", name)
    cur.depth += 1
    cur.expect_punct("(")
    args = []
    if not (cur.tok.kind == "punct" and cur.tok.text == ")"):
        while True:
            args.append(_parse_arg(cur))
            if cur.tok.kind == "punct" and cur.tok.text == ",":
                cur.advance()
                continue
            break
    cur.expect_punct(")")
    cur.depth -= 1
    _, kinds = SIGNATURES[name.text]
    if len(args) != len(kinds):
        cur.fail(
            f"{name.text} expects {len(kinds)} argument{'s' if len(kinds) != 1 else ''} "
            f"({', '.join(kinds)}), got {len(args)}",
            name,
        )
    for k, ((arg, tok), want) in enumerate(zip(args, kinds), start=1):
        got = _kind_of(arg)
        ok = got == want or (got == "feature" and want in ("point", "direction"))
        if not ok:
            cur.fail(f"argument {k} of {name.text} must be a {want}, got a {got}", tok)
    return Call(name.text, tuple(a for a, _ in args), name.line, name.col)


def _kind_of(arg) -> str:
    if isinstance(arg, float):
        return "number"
    if isinstance(arg, Feature):
        return "feature"
    return arg.kind


def parse_expr(text: str, line: int = 1) -> Call:
    """Parse a single scalar expression such as ``dist(tool.tip, target.edge)``."""
    toks = [t for _, ts in _lines(text) for t in ts]
    if not toks:
        raise DSLError("empty expression", line, 1)
    cur = _Cursor(toks)
    expr = _parse_scalar(cur)
    cur.expect_eol()
    return expr


def _parse_scalar(cur: _Cursor) -> Call:
    t = cur.tok
    if t.kind != "ident":
        cur.fail(f"expected a constraint expression, found {_describe(t)}")
    arg, _ = _parse_arg(cur)
    if not isinstance(arg, Call) or arg.kind != "scalar":
        cur.fail(f"constraint expression must be dist, angle, height or along, got '{t.text}'", t)
    return arg


# ---------------------------------------------------------------- files


def parse_task(text) -> TaskDescription:
    text = _decode(text)
    name = None
    phases: list[str] = []
    seen: dict[str, int] = {}
    for lineno, toks in _lines(text):
        cur = _Cursor(toks)
        kw = cur.tok
        if name is None:
            if kw.kind != "ident" or kw.text != "task":
                cur.fail(f"expected 'task' declaration, found {_describe(kw)}")
            cur.advance()
            name = cur.expect_ident("task name").text
        elif kw.kind == "ident" and kw.text == "phase":
            cur.advance()
            ph = cur.expect_ident("phase name")
            if ph.text in seen:
                raise DSLError(f"duplicate phase '{ph.text}' (first declared on line {seen[ph.text]})", lineno, ph.col)
            seen[ph.text] = lineno
            phases.append(ph.text)
        elif kw.kind == "ident" and kw.text == "task":
            cur.fail("only one task declaration is allowed")
        else:
            cur.fail(f"expected 'phase', found {_describe(kw)}")
        cur.expect_eol()
    if name is None:
        raise DSLError("no task declaration", 1, 1)
    if not phases:
        last = text.count("\n") + 1
        raise DSLError(f"task '{name}' declares no phases", last, 1)
    return TaskDescription(name, tuple(phases))


def parse_phase(text) -> PhaseSpec:
    text = _decode(text)
    name = None
    name_line = 1
    soft: list[Constraint] = []
    hard: dict[str, float] = {}
    stop: dict[str, float] = {}
    for lineno, toks in _lines(text):
        cur = _Cursor(toks)
        kw = cur.tok
        if name is None:
            if kw.kind != "ident" or kw.text != "phase":
                cur.fail(f"expected 'phase' declaration, found {_describe(kw)}")
            cur.advance()
            name = cur.expect_ident("phase name").text
            name_line = lineno
            cur.expect_eol()
            continue
        if kw.kind != "ident" or kw.text not in ("soft", "hard", "stop"):
            if kw.kind == "ident" and kw.text == "phase":
                cur.fail("only one phase declaration is allowed per file")
            cur.fail(f"expected 'soft', 'hard' or 'stop', found {_describe(kw)}")
        cur.advance()
        if kw.text == "soft":
            soft.append(_parse_soft(cur))
        else:
            table = _HARD_KEYS if kw.text == "hard" else _STOP_KEYS
            store = hard if kw.text == "hard" else stop
            key = cur.tok
            if key.kind != "ident" or key.text not in table:
                cur.fail(f"unknown {kw.text} keyword {_describe(key)}; expected one of {', '.join(table)}")
            cur.advance()
            vtok = cur.tok
            value = cur.expect_num()
            if kw.text == "hard" and value <= 0:
                cur.fail(f"{key.text} must be > 0", vtok)
            if kw.text == "stop" and value < 0:
                cur.fail(f"{key.text} must be >= 0", vtok)
            field_name = table[key.text]
            if field_name in store:
                cur.fail(f"duplicate {kw.text} {key.text}", key)
            store[field_name] = value
        cur.expect_eol()
    if name is None:
        raise DSLError("no phase declaration", 1, 1)
    if not soft:
        raise DSLError(f"phase '{name}' has no soft constraints", name_line, 1)
    return PhaseSpec(
        name=name,
        soft_constraints=tuple(soft),
        max_linear_speed=hard.get("max_linear_speed", DEFAULT_MAX_LINEAR_SPEED),
        max_angular_speed=hard.get("max_angular_speed", DEFAULT_MAX_ANGULAR_SPEED),
        stop=StopCondition(
            velocity_below=stop.get("velocity_below", 0.0),
            distance_below=stop.get("distance_below", 0.0),
            dwell=stop.get("dwell", DEFAULT_DWELL),
        ),
    )


def _parse_soft(cur: _Cursor) -> Constraint:
    expr = _parse_scalar(cur)
    cur.expect_keyword("in")
    open_tok = cur.expect_punct("[")
    lo = cur.expect_num()
    cur.expect_punct(",")
    hi = cur.expect_num()
    cur.expect_punct("]")
    if lo > hi:
        cur.fail(f"band lower bound {lo} exceeds upper bound {hi}", open_tok)
    weight = 1.0
    if cur.tok.kind == "ident" and cur.tok.text == "weight":
        cur.advance()
        wtok = cur.tok
        weight = cur.expect_num()
        if weight <= 0:
            cur.fail("weight must be > 0", wtok)
    return Constraint(expr, lo, hi, weight)
