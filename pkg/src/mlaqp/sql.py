"""Parser for the aggregate SQL subset the engine can vectorize.

Accepted grammar (case-insensitive keywords)::

    query      := SELECT item {"," item} FROM tables [WHERE cond]
                  [GROUP BY column {"," column}] [";"]
    item       := AF "(" ("*" | column) ")" [[AS] ident] | column
    tables     := table {"," table | JOIN table ON column "=" column}
    cond       := term {AND term}
    term       := "(" cond ")" | column BETWEEN number AND number
                | column LIKE string | operand cmp operand
    cmp        := ">=" | ">" | "<=" | "<" | "="

See docs/grammar.md for the full EBNF.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import SQLSyntaxError, UnknownIdentifier, UnsupportedFeature
from .schema import AGGREGATE_FUNCTIONS, AggregateSpec, DatasetSchema, Predicate

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<string>'(?:[^']|'')*')
  | (?P<qident>"(?:[^"]|"")+")
  | (?P<ident>[A-Za-z_][A-Za-z0-9_$]*)
  | (?P<op><>|!=|>=|<=|[<>=])
  | (?P<punct>[(),.;*+-])
    """,
    re.VERBOSE,
)

_KEYWORDS = {
    "SELECT", "FROM", "WHERE", "GROUP", "BY", "AND", "OR", "NOT", "BETWEEN",
    "LIKE", "AS", "JOIN", "INNER", "ON", "HAVING", "ORDER", "LIMIT", "UNION",
    "OVER", "IN", "IS", "NULL", "DISTINCT", "EXISTS", "LEFT", "RIGHT", "FULL",
    "OUTER", "CROSS", "WITH", "CASE",
}
_UNSUPPORTED_CLAUSES = {"HAVING", "ORDER", "LIMIT", "UNION", "OVER"}
_FLIP = {">=": "<=", ">": "<", "<=": ">=", "<": ">", "=": "="}


@dataclass(frozen=True)
class Token:
    kind: str  # number | string | ident | kw | op | punct | eof
    text: str
    pos: int
    value: object = None


def tokenize(sql: str) -> list[Token]:
    tokens: list[Token] = []
    pos, n = 0, len(sql)
    while pos < n:
        m = _TOKEN_RE.match(sql, pos)
        if m is None:
            raise SQLSyntaxError(f"unexpected character {sql[pos]!r}", pos)
        kind = m.lastgroup
        text = m.group()
        if kind == "number":
            tokens.append(Token("number", text, pos, float(text)))
        elif kind == "string":
            tokens.append(Token("string", text, pos, text[1:-1].replace("''", "'")))
        elif kind == "qident":
            tokens.append(Token("ident", text, pos, text[1:-1].replace('""', '"')))
        elif kind == "ident":
            up = text.upper()
            if up in _KEYWORDS:
                tokens.append(Token("kw", up, pos, up))
            else:
                tokens.append(Token("ident", text, pos, text))
        elif kind != "ws":
            tokens.append(Token(kind, text, pos, text))
        pos = m.end()
    tokens.append(Token("eof", "", n))
    return tokens


@dataclass(frozen=True)
class ParsedQuery:
    table: str
    aggregates: tuple[AggregateSpec, ...]
    predicates: tuple[Predicate, ...] = ()
    group_by: tuple[str, ...] = ()
    categorical_equalities: tuple[tuple[str, str], ...] = ()
    like_patterns: tuple[tuple[str, str], ...] = ()

    @property
    def is_grouped(self) -> bool:
        return bool(self.group_by)


class _Parser:
    def __init__(self, sql: str, schema: DatasetSchema):
        self.sql = sql
        self.schema = schema
        self.toks = tokenize(sql)
        self.i = 0
        self.tables: list[str] = []
        self.bounds: dict[str, list] = {}  # attr -> [lb, ub, pos]
        self.cat_eq: dict[str, str] = {}
        self.likes: list[tuple[str, str]] = []

    # token helpers
    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def advance(self) -> Token:
        t = self.toks[self.i]
        self.i += 1
        return t

    def at_kw(self, *words: str) -> bool:
        return self.tok.kind == "kw" and self.tok.text in words

    def at_punct(self, ch: str) -> bool:
        return self.tok.kind == "punct" and self.tok.text == ch

    def expect_kw(self, word: str) -> Token:
        if not self.at_kw(word):
            raise SQLSyntaxError(f"expected {word}, found {self._describe()}", self.tok.pos)
        return self.advance()

    def expect_punct(self, ch: str) -> Token:
        if not self.at_punct(ch):
            raise SQLSyntaxError(f"expected {ch!r}, found {self._describe()}", self.tok.pos)
        return self.advance()

    def _describe(self) -> str:
        return "end of input" if self.tok.kind == "eof" else repr(self.tok.text)

    def _reject_unsupported(self):
        t = self.tok
        if t.kind == "kw":
            if t.text in ("OR",):
                raise UnsupportedFeature("disjunction (OR) is not supported", t.pos)
            if t.text in ("NOT",):
                raise UnsupportedFeature("negation (NOT) is not supported", t.pos)
            if t.text in _UNSUPPORTED_CLAUSES:
                raise UnsupportedFeature(f"{t.text} is not supported", t.pos)
            if t.text in ("IN", "IS", "EXISTS", "CASE", "WITH"):
                raise UnsupportedFeature(f"{t.text} is not supported", t.pos)

    # grammar
    def parse(self) -> ParsedQuery:
        if self.at_kw("WITH"):
            raise UnsupportedFeature("common table expressions are not supported", self.tok.pos)
        self.expect_kw("SELECT")
        aggs, plain_cols = self.select_list()
        self.expect_kw("FROM")
        self.from_clause()
        if self.at_kw("WHERE"):
            self.advance()
            self.condition()
        group_by: list[str] = []
        if self.at_kw("GROUP"):
            self.advance()
            self.expect_kw("BY")
            group_by = self.group_list()
        self._reject_unsupported()
        if self.at_punct(";"):
            self.advance()
        if self.tok.kind != "eof":
            self._reject_unsupported()
            raise SQLSyntaxError(f"unexpected {self._describe()}", self.tok.pos)
        if not aggs:
            raise UnsupportedFeature("query projects no aggregate function", 0)
        for name, pos in plain_cols:
            if name not in group_by:
                raise SQLSyntaxError(f"column {name!r} is neither aggregated nor grouped", pos)
        preds = tuple(Predicate(a, lb, ub) for a, (lb, ub, _) in self.bounds.items())
        return ParsedQuery(
            table=self.tables[0],
            aggregates=tuple(aggs),
            predicates=preds,
            group_by=tuple(group_by),
            categorical_equalities=tuple(self.cat_eq.items()),
            like_patterns=tuple(self.likes),
        )

    def select_list(self):
        aggs: list[AggregateSpec] = []
        plain: list[tuple[str, int]] = []
        while True:
            t = self.tok
            if t.kind == "ident" and t.text.upper() in AGGREGATE_FUNCTIONS and self._peek_punct("("):
                aggs.append(self.aggregate())
            elif t.kind == "ident":
                plain.append((self.column(), t.pos))
            elif t.kind == "punct" and t.text == "*":
                raise UnsupportedFeature("bare * projection is not an aggregate query", t.pos)
            else:
                raise SQLSyntaxError(f"expected aggregate or column, found {self._describe()}", t.pos)
            if self.at_kw("AS"):
                self.advance()
                self.ident()
            elif self.tok.kind == "ident":
                self.ident()
            if not self.at_punct(","):
                return aggs, plain
            self.advance()

    def _peek_punct(self, ch: str) -> bool:
        nxt = self.toks[self.i + 1]
        return nxt.kind == "punct" and nxt.text == ch

    def aggregate(self) -> AggregateSpec:
        fn = self.advance().text.upper()
        self.expect_punct("(")
        if self.at_kw("DISTINCT"):
            raise UnsupportedFeature("DISTINCT inside aggregates is not supported", self.tok.pos)
        if self.at_kw("SELECT"):
            raise UnsupportedFeature("subqueries are not supported", self.tok.pos)
        if self.at_punct("*"):
            star = self.advance()
            if fn != "COUNT":
                raise SQLSyntaxError(f"{fn}(*) is not valid", star.pos)
            target = None
        else:
            target = self.column()
        self.expect_punct(")")
        return AggregateSpec(fn, target)

    def ident(self) -> str:
        t = self.tok
        if t.kind != "ident":
            raise SQLSyntaxError(f"expected identifier, found {self._describe()}", t.pos)
        self.advance()
        return t.value

    def qualified(self) -> tuple[str, int]:
        pos = self.tok.pos
        name = self.ident()
        while self.at_punct("."):
            self.advance()
            name = self.ident()
        return name, pos

    def column(self) -> str:
        name, pos = self.qualified()
        if not self.schema.has(name):
            raise UnknownIdentifier(f"unknown attribute {name!r}", pos)
        return name

    def from_clause(self):
        if self.at_punct("("):
            raise UnsupportedFeature("subqueries are not supported", self.tok.pos)
        self.table_ref()
        while True:
            if self.at_punct(","):
                self.advance()
                self.table_ref()
            elif self.at_kw("JOIN", "INNER"):
                if self.at_kw("INNER"):
                    self.advance()
                self.expect_kw("JOIN")
                self.table_ref()
                self.expect_kw("ON")
                self.join_condition()
            elif self.at_kw("LEFT", "RIGHT", "FULL", "CROSS", "OUTER"):
                raise UnsupportedFeature("only inner equi-joins are supported", self.tok.pos)
            else:
                return

    def table_ref(self):
        if self.at_punct("("):
            raise UnsupportedFeature("subqueries are not supported", self.tok.pos)
        pos = self.tok.pos
        name = self.ident()
        while self.at_punct("."):
            self.advance()
            name = self.ident()
        self.tables.append(name)
        if self.at_kw("AS"):
            self.advance()
            self.ident()
        elif self.tok.kind == "ident":
            self.ident()
        return name, pos

    def join_condition(self):
        while True:
            start = self.tok.pos
            if self.tok.kind != "ident":
                raise UnsupportedFeature("join condition must equate two columns", start)
            self.qualified()
            if not (self.tok.kind == "op" and self.tok.text == "="):
                raise UnsupportedFeature("only equi-join conditions are supported", self.tok.pos)
            self.advance()
            if self.tok.kind != "ident":
                raise UnsupportedFeature("join condition must equate two columns", self.tok.pos)
            self.qualified()
            if not self.at_kw("AND"):
                return
            self.advance()

    def condition(self):
        self.term()
        while True:
            if self.at_kw("AND"):
                self.advance()
                self.term()
                continue
            self._reject_unsupported()
            return

    def term(self):
        self._reject_unsupported()
        t = self.tok
        if self.at_punct("("):
            if self.toks[self.i + 1].kind == "kw" and self.toks[self.i + 1].text == "SELECT":
                raise UnsupportedFeature("subqueries are not supported", self.toks[self.i + 1].pos)
            self.advance()
            self.condition()
            self.expect_punct(")")
            return
        left = self.operand()
        if self.at_kw("NOT"):
            raise UnsupportedFeature("negation (NOT) is not supported", self.tok.pos)
        if self.at_kw("BETWEEN"):
            self._need_column(left, t.pos)
            self.advance()
            lo = self.number()
            self.expect_kw("AND")
            hi = self.number()
            self._range(left[1], lo, hi, t.pos)
            return
        if self.at_kw("LIKE"):
            self._need_column(left, t.pos)
            self.advance()
            s = self.tok
            if s.kind != "string":
                raise SQLSyntaxError("LIKE needs a string pattern", s.pos)
            self.advance()
            attr = self.schema.attribute(left[1])
            if not attr.is_categorical:
                raise UnsupportedFeature(f"LIKE on numeric attribute {attr.name!r}", t.pos)
            self.likes.append((attr.name, s.value))
            return
        self._reject_unsupported()
        op = self.tok
        if op.kind != "op":
            raise SQLSyntaxError(f"expected comparison operator, found {self._describe()}", op.pos)
        if op.text in ("<>", "!="):
            raise UnsupportedFeature("inequality (<>) is a negation and is not supported", op.pos)
        self.advance()
        right = self.operand()
        self._comparison(left, op.text, right, t.pos, op.pos)

    def operand(self):
        t = self.tok
        if t.kind == "ident":
            return ("col", self.column())
        if t.kind == "punct" and t.text in "+-":
            sign = -1.0 if t.text == "-" else 1.0
            self.advance()
            return ("num", sign * self.number())
        if t.kind == "number":
            self.advance()
            return ("num", t.value)
        if t.kind == "string":
            self.advance()
            return ("str", t.value)
        if t.kind == "punct" and t.text == "(" and self.toks[self.i + 1].text == "SELECT":
            raise UnsupportedFeature("subqueries are not supported", t.pos)
        raise SQLSyntaxError(f"expected operand, found {self._describe()}", t.pos)

    def number(self) -> float:
        t = self.tok
        sign = 1.0
        if t.kind == "punct" and t.text in "+-":
            sign = -1.0 if t.text == "-" else 1.0
            self.advance()
            t = self.tok
        if t.kind != "number":
            raise SQLSyntaxError(f"expected number, found {self._describe()}", t.pos)
        self.advance()
        return sign * t.value

    def _need_column(self, operand, pos):
        if operand[0] != "col":
            raise SQLSyntaxError("left side must be a column", pos)

    def _comparison(self, left, op, right, pos, op_pos):
        if left[0] == "col" and right[0] == "col":
            if op == "=":
                # equi-join over a pre-joined schema; does not restrict rows
                return
            raise UnsupportedFeature("column-to-column comparison (join condition)", op_pos)
        if left[0] != "col":
            if right[0] != "col":
                raise SQLSyntaxError("comparison without a column", pos)
            left, right, op = right, left, _FLIP[op]
        attr = self.schema.attribute(left[1])
        if attr.is_categorical:
            if op != "=":
                raise UnsupportedFeature(f"range comparison on categorical {attr.name!r}", op_pos)
            value = right[1] if right[0] == "str" else _format_literal(right[1])
            prev = self.cat_eq.get(attr.name)
            if prev is not None and prev != value:
                raise UnsupportedFeature(f"contradictory equalities on {attr.name!r}", pos)
            self.cat_eq[attr.name] = value
            return
        if right[0] != "num":
            raise UnsupportedFeature(f"string comparison on numeric {attr.name!r}", pos)
        v = float(right[1])
        if op in (">=", ">"):
            self._range(attr.name, v, None, pos)
        elif op in ("<=", "<"):
            self._range(attr.name, None, v, pos)
        else:
            self._range(attr.name, v, v, pos)

    def _range(self, name, lo, hi, pos):
        if self.schema.attribute(name).is_categorical:
            raise UnsupportedFeature(f"range predicate on categorical {name!r}", pos)
        cur = self.bounds.setdefault(name, [None, None, pos])
        if lo is not None:
            cur[0] = lo if cur[0] is None else max(cur[0], lo)
        if hi is not None:
            cur[1] = hi if cur[1] is None else min(cur[1], hi)
        if cur[0] is not None and cur[1] is not None and cur[0] > cur[1]:
            raise UnsupportedFeature(f"empty range on {name!r} (lb > ub)", pos)

    def group_list(self) -> list[str]:
        cols = []
        while True:
            t = self.tok
            if t.kind != "ident":
                raise SQLSyntaxError(f"expected GROUP BY column, found {self._describe()}", t.pos)
            if self._peek_punct("("):
                raise UnsupportedFeature("derived GROUP BY attributes are not supported", t.pos)
            name = self.column()
            if self.tok.kind in ("op", "punct") and self.tok.text in "+-*/":
                raise UnsupportedFeature("derived GROUP BY attributes are not supported", self.tok.pos)
            cols.append(name)
            if not self.at_punct(","):
                return cols
            self.advance()


def _format_literal(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(v)


def parse(sql: str, schema: DatasetSchema) -> ParsedQuery:
    """Parse ``sql`` against ``schema``.

    Strict inequalities are encoded like their inclusive forms, repeated
    restrictions on one attribute are intersected, and equi-join conditions
    are accepted but do not change the result.
    """
    return _Parser(sql, schema).parse()
