"""Line-oriented text format for MPT models (``.mpt`` files).

::

    # two-high-threshold model, excerpt
    param D_o
    simplex s = s_l s_m s_h
    order s: s_l <= s_m <= s_h
    partial o: o_l >= o_m, o_l >= o_h
    tree old
      category old_h : D_o * s_h + ~D_o * g * o_h

Terms are ``*``-separated factors: a parameter, ``~p`` for ``1 - p`` (binary
parameters only) or a rational constant such as ``1/3`` or ``0.5``.
Comments start with ``#`` and are not preserved by :func:`serialize_model`.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction

from .errors import MptError
from .model import Branch, Factor, MptModel, OrderSpec, SimplexGroup, Tree, validate

KEYWORDS = ("param", "simplex", "order", "partial", "tree", "category")

_TOKEN = re.compile(r"""
    (?P<ws>[ \t]+)
  | (?P<num>\d+(?:\.\d+)?(?:/\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op><=|>=|[=:+*~,])
""", re.VERBOSE)


@dataclass(frozen=True)
class SourceSpan:
    line: int
    start: int
    end: int

    def __str__(self) -> str:
        return f"{self.line}:{self.start}-{self.end}"


@dataclass(frozen=True)
class ParseError:
    span: SourceSpan
    message: str
    expected: tuple[str, ...] = ()

    def __str__(self) -> str:
        extra = f" (expected {' or '.join(self.expected)})" if self.expected else ""
        return f"line {self.span.line}, col {self.span.start}: {self.message}{extra}"


class ParseFailure(MptError):
    def __init__(self, errors: list[ParseError]):
        self.errors = errors
        super().__init__("\n".join(map(str, errors)))


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    col: int  # 1-based

    @property
    def end(self) -> int:
        return self.col + len(self.text) - 1


class _LineError(Exception):
    def __init__(self, tok_or_col, message, expected=()):
        self.pos = tok_or_col
        self.message = message
        self.expected = tuple(expected)


class _Cursor:
    def __init__(self, toks: list[_Tok], eol: int):
        self.toks = toks
        self.i = 0
        self.eol = eol

    def peek(self) -> _Tok | None:
        return self.toks[self.i] if self.i < len(self.toks) else None

    def take(self, kind=None, text=None, what=None) -> _Tok:
        tok = self.peek()
        want = what or text or kind
        if tok is None:
            raise _LineError(self.eol, "unexpected end of line", (want,))
        if (kind and tok.kind != kind) or (text and tok.text != text):
            raise _LineError(tok, f"unexpected {tok.text!r}", (want,))
        self.i += 1
        return tok

    def at(self, text) -> bool:
        tok = self.peek()
        return tok is not None and tok.text == text

    def done(self) -> None:
        tok = self.peek()
        if tok is not None:
            raise _LineError(tok, f"unexpected {tok.text!r} at end of line")


def _lex(line: str) -> list[_Tok]:
    toks, pos = [], 0
    while pos < len(line):
        m = _TOKEN.match(line, pos)
        if not m:
            raise _LineError(pos + 1, f"invalid character {line[pos]!r}")
        if m.lastgroup != "ws":
            toks.append(_Tok(m.lastgroup, m.group(), pos + 1))
        pos = m.end()
    return toks


def _strip_comment(line: str) -> str:
    i = line.find("#")
    return (line if i < 0 else line[:i]).rstrip()


class _Builder:
    def __init__(self):
        self.binary: list[str] = []
        self.groups: list[SimplexGroup] = []
        self.orders: list[OrderSpec] = []
        self.trees: list[tuple[str, list[str]]] = []
        self.branches: list[Branch] = []
        self.spans: dict[tuple, SourceSpan] = {}

    def mark(self, key, span):
        self.spans[key] = span


def _parse_line(cur: _Cursor, b: _Builder, lineno: int, line_span: SourceSpan) -> None:
    head = cur.take("ident", what="a keyword")
    kw = head.text
    if kw == "param":
        names = [cur.take("ident", what="parameter name")]
        while cur.peek() is not None:
            names.append(cur.take("ident", what="parameter name"))
        for t in names:
            b.binary.append(t.text)
            b.mark(("param", t.text), SourceSpan(lineno, t.col, t.end))
    elif kw == "simplex":
        g = cur.take("ident", what="group name")
        cur.take(text="=")
        members = [cur.take("ident", what="member name")]
        while cur.peek() is not None:
            members.append(cur.take("ident", what="member name"))
        b.groups.append(SimplexGroup(g.text, tuple(t.text for t in members)))
        b.mark(("group", g.text), SourceSpan(lineno, g.col, g.end))
        for t in members:
            b.mark(("param", t.text), SourceSpan(lineno, t.col, t.end))
    elif kw == "order":
        g = cur.take("ident", what="group name")
        cur.take(text=":")
        members = [cur.take("ident", what="member name").text]
        ops = []
        while cur.peek() is not None:
            op = cur.peek()
            if op.text not in ("<=", ">="):
                raise _LineError(op, f"unexpected {op.text!r}", ("<=", ">="))
            cur.take()
            if ops and op.text != ops[0]:
                raise _LineError(op, "a chain must use a single direction")
            ops.append(op.text)
            members.append(cur.take("ident", what="member name").text)
        if not ops:
            raise _LineError(cur.eol, "a chain needs at least 2 members", ("<=", ">="))
        b.mark(("order", len(b.orders)), line_span)
        b.orders.append(OrderSpec.chain(g.text, members, ops[0]))
    elif kw == "partial":
        g = cur.take("ident", what="group name")
        cur.take(text=":")
        pairs = []
        while True:
            left = cur.take("ident", what="member name").text
            op = cur.peek()
            if op is None or op.text not in ("<=", ">="):
                raise _LineError(op or cur.eol, "expected a comparison", ("<=", ">="))
            cur.take()
            right = cur.take("ident", what="member name").text
            pairs.append((left, right) if op.text == ">=" else (right, left))
            if cur.peek() is None:
                break
            cur.take(text=",")
        b.mark(("order", len(b.orders)), line_span)
        b.orders.append(OrderSpec.partial(g.text, pairs))
    elif kw == "tree":
        t = cur.take("ident", what="tree name")
        cur.done()
        b.trees.append((t.text, []))
        b.mark(("tree", t.text), SourceSpan(lineno, t.col, t.end))
    elif kw == "category":
        c = cur.take("ident", what="category name")
        if not b.trees:
            raise _LineError(head, "category declared before any tree")
        cur.take(text=":")
        tree, cats = b.trees[-1]
        terms = [_parse_term(cur)]
        while cur.peek() is not None:
            cur.take(text="+")
            terms.append(_parse_term(cur))
        cats.append(c.text)
        b.mark(("category", tree, c.text), line_span)
        b.branches.extend(Branch(tree, c.text, fs) for fs in terms)
    else:
        raise _LineError(head, f"unknown keyword {kw!r}", KEYWORDS)


def _parse_term(cur: _Cursor) -> tuple[Factor, ...]:
    fs = [_parse_factor(cur)]
    while cur.at("*"):
        cur.take()
        fs.append(_parse_factor(cur))
    return tuple(fs)


def _parse_factor(cur: _Cursor) -> Factor:
    tok = cur.peek()
    if tok is None:
        raise _LineError(cur.eol, "unexpected end of line", ("a factor",))
    if tok.text == "~":
        cur.take()
        return Factor.comp(cur.take("ident", what="parameter name").text)
    if tok.kind == "ident":
        cur.take()
        return Factor.param(tok.text)
    if tok.kind == "num":
        cur.take()
        try:
            return Factor.constant(Fraction(tok.text))
        except ZeroDivisionError:
            raise _LineError(tok, "division by zero in constant") from None
    raise _LineError(tok, f"unexpected {tok.text!r}", ("a factor",))


def parse_model(source: str) -> MptModel:
    """Parse model text; raises :class:`ParseFailure` listing every error found.

    Structural diagnostics of the finished model (duplicate names, unknown
    references, bad order declarations, incomplete trees) are reported as
    errors too, located at the offending declaration.
    """
    b = _Builder()
    errors: list[ParseError] = []
    lines = source.splitlines()
    for lineno, raw in enumerate(lines, start=1):
        text = _strip_comment(raw)
        if not text.strip():
            continue
        first = len(text) - len(text.lstrip()) + 1
        line_span = SourceSpan(lineno, first, max(len(text), first))
        try:
            cur = _Cursor(_lex(text), max(len(text), 1))
            _parse_line(cur, b, lineno, line_span)
            cur.done()
        except _LineError as e:
            if isinstance(e.pos, _Tok):
                span = SourceSpan(lineno, e.pos.col, e.pos.end)
            else:
                col = min(max(int(e.pos), 1), max(len(raw), 1))
                span = SourceSpan(lineno, col, col)
            errors.append(ParseError(span, e.message, e.expected))

    model = MptModel(
        binary=tuple(b.binary),
        groups=tuple(b.groups),
        trees=tuple(Tree(n, tuple(c)) for n, c in b.trees),
        branches=tuple(b.branches),
        orders=tuple(b.orders),
    )
    if not errors:
        default = SourceSpan(1, 1, max(len(lines[0]), 1) if lines else 1)
        for d in validate(model):
            span = b.spans.get(d.where)
            if span is None and d.where[:1] == ("category",):
                span = b.spans.get(("tree", d.where[1]))
            errors.append(ParseError(span or default, d.message))
    if errors:
        raise ParseFailure(errors)
    return model


def read_model(path) -> MptModel:
    from pathlib import Path
    return parse_model(Path(path).read_text(encoding="utf-8"))


def _order_line(spec: OrderSpec) -> str:
    if spec.kind == "chain":
        return f"order {spec.group}: " + f" {spec.direction} ".join(spec.members)
    return f"partial {spec.group}: " + ", ".join(f"{a} >= {b}" for a, b in spec.pairs)


def serialize_model(model: MptModel) -> str:
    out = [f"param {n}" for n in model.binary]
    out += [f"simplex {g.name} = {' '.join(g.members)}" for g in model.groups]
    out += [_order_line(o) for o in model.orders]
    for t in model.trees:
        out.append("")
        out.append(f"tree {t.name}")
        for c in t.categories:
            terms = [" * ".join(map(str, br.factors)) or "1"
                     for br in model.branches if br.tree == t.name and br.category == c]
            out.append(f"  category {c} : " + " + ".join(terms))
    return "\n".join(out) + "\n"


def fixture_path(name: str):
    """Path of a model shipped with the package, e.g. ``fixture_path("2htm_r")``."""
    from pathlib import Path
    p = Path(__file__).parent / "fixtures" / (name if name.endswith(".mpt") else name + ".mpt")
    if not p.is_file():
        raise FileNotFoundError(p)
    return p
