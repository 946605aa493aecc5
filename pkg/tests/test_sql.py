import pytest
from hypothesis import given, strategies as st

from mlaqp.errors import SQLError, SQLSyntaxError, UnknownIdentifier, UnsupportedFeature
from mlaqp.schema import AggregateSpec, Predicate
from mlaqp.sql import parse, tokenize


def test_example_query(three_attr_schema):
    q = parse("SELECT AVG(a3) FROM B WHERE a1 >= 7 AND a2 <= 4", three_attr_schema)
    assert q.aggregates == (AggregateSpec("AVG", "a3"),)
    assert q.predicates == (Predicate("a1", 7.0, None), Predicate("a2", None, 4.0))
    assert q.group_by == ()


def test_no_predicates(three_attr_schema):
    q = parse("SELECT COUNT(*) FROM B", three_attr_schema)
    assert q.aggregates == (AggregateSpec("COUNT"),)
    assert q.predicates == () and q.group_by == ()


def test_equality(three_attr_schema):
    q = parse("SELECT SUM(a2) FROM B WHERE a1 = 5", three_attr_schema)
    assert q.predicates == (Predicate("a1", 5.0, 5.0),)


def test_between_strict_and_flipped(three_attr_schema):
    q = parse("select max(a1) from B where a2 between -1.5e2 and 3 and 10 > a3 and a3 > 2;",
              three_attr_schema)
    assert set(q.predicates) == {Predicate("a2", -150.0, 3.0), Predicate("a3", 2.0, 10.0)}


def test_repeated_bounds_intersect(three_attr_schema):
    q = parse("SELECT COUNT(*) FROM B WHERE a1 >= 1 AND a1 >= 3 AND a1 <= 9 AND a1 < 8", three_attr_schema)
    assert q.predicates == (Predicate("a1", 3.0, 8.0),)


def test_group_by_and_aliases(three_attr_schema):
    q = parse("SELECT a1, AVG(a2) AS m, COUNT(*) n FROM B WHERE a3 <= 1 GROUP BY a1", three_attr_schema)
    assert q.group_by == ("a1",)
    assert [a.key for a in q.aggregates] == ["AVG(a2)", "COUNT(*)"]


def test_join_is_ignored(three_attr_schema):
    a = parse("SELECT SUM(a1) FROM B WHERE a2 <= 4", three_attr_schema)
    b = parse("SELECT SUM(B.a1) FROM B JOIN C ON B.a3 = C.a3 WHERE B.a2 <= 4", three_attr_schema)
    assert a.predicates == b.predicates and a.aggregates == b.aggregates


def test_categorical_and_like(mixed_schema):
    q = parse("SELECT SUM(price) FROM sales WHERE region = 'north' AND product LIKE '%tea'", mixed_schema)
    assert q.categorical_equalities == (("region", "north"),)
    assert q.like_patterns == (("product", "%tea"),)


@pytest.mark.parametrize("sql, exc, pos", [
    ("SELECT AVG(a1) FROM B WHERE a1 > 1 OR a2 < 3", UnsupportedFeature, "OR"),
    ("SELECT AVG(a1) FROM B WHERE NOT a1 > 1", UnsupportedFeature, 28),
    ("SELECT AVG(a1) FROM B WHERE a1 <> 1", UnsupportedFeature, 31),
    ("SELECT AVG(a1) FROM B ORDER BY a1", UnsupportedFeature, 22),
    ("SELECT AVG(a1) FROM B HAVING AVG(a1) > 2", UnsupportedFeature, 22),
    ("SELECT AVG(a1) FROM (SELECT * FROM B)", UnsupportedFeature, 20),
    ("SELECT AVG(zz) FROM B", UnknownIdentifier, 11),
    ("SELECT AVG(a1) FROM B WHERE a1 >", SQLSyntaxError, 32),
    ("SELECT a1 FROM B", UnsupportedFeature, 0),
    ("SELECT AVG(a1) FROM B WHERE a1 > 5 AND a1 < 2", UnsupportedFeature, 39),
])
def test_rejections_carry_position(three_attr_schema, sql, exc, pos):
    with pytest.raises(exc) as info:
        parse(sql, three_attr_schema)
    if isinstance(pos, str):
        pos = sql.index(pos)
    assert info.value.position == pos


def test_tokenize_positions():
    toks = tokenize("SELECT  x")
    assert [(t.kind, t.pos) for t in toks] == [("kw", 0), ("ident", 8), ("eof", 9)]


# grammar-driven generator: every string it produces must parse
_num = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False).map(lambda v: repr(round(v, 3)))
_col = st.sampled_from(["a1", "a2", "a3"])
_agg = st.one_of(st.just("COUNT(*)"),
                 st.builds(lambda f, c: f"{f}({c})", st.sampled_from(["SUM", "AVG", "MIN", "MAX", "avg"]), _col))


def _term():
    cmp = st.builds(lambda c, o, n: f"{c} {o} {n}", _col, st.sampled_from([">=", ">", "<=", "<", "="]), _num)
    flipped = st.builds(lambda n, o, c: f"{n} {o} {c}", _num, st.sampled_from([">=", "<="]), _col)
    between = st.builds(lambda c, a, b: f"{c} BETWEEN {min(float(a), float(b))!r} AND {max(float(a), float(b))!r}",
                        _col, _num, _num)
    return st.one_of(cmp, flipped, between)


@given(st.lists(_agg, min_size=1, max_size=3), st.lists(_term(), max_size=4),
       st.lists(_col, max_size=2, unique=True), st.booleans())
def test_grammar_generated_strings_parse(aggs, terms, group, semi):
    sql = "SELECT " + ", ".join(group + aggs) + " FROM B"
    if terms:
        sql += " WHERE " + " AND ".join(terms)
    if group:
        sql += " GROUP BY " + ", ".join(group)
    if semi:
        sql += ";"
    from mlaqp.schema import DatasetSchema

    schema = DatasetSchema.numeric("B", ["a1", "a2", "a3"])
    try:
        q = parse(sql, schema)
    except UnsupportedFeature as exc:
        # only contradictory ranges may be rejected
        assert "empty range" in exc.message
        return
    assert len(q.aggregates) == len(aggs)
    assert q.group_by == tuple(group)


@given(st.text(max_size=60))
def test_rejections_always_positioned(text):
    from mlaqp.schema import DatasetSchema

    schema = DatasetSchema.numeric("B", ["a1", "a2", "a3"])
    try:
        parse(text, schema)
    except SQLError as exc:
        assert 0 <= exc.position <= len(text)


@given(st.permutations(["a1 >= 1", "a2 <= 7", "a3 BETWEEN 2 AND 4", "a1 <= 9"]))
def test_conjunct_order_irrelevant(perm):
    from mlaqp.schema import DatasetSchema

    schema = DatasetSchema.numeric("B", ["a1", "a2", "a3"])
    q = parse("SELECT SUM(a1) FROM B WHERE " + " AND ".join(perm), schema)
    assert set(q.predicates) == {Predicate("a1", 1.0, 9.0), Predicate("a2", None, 7.0), Predicate("a3", 2.0, 4.0)}
