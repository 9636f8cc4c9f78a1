import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from latamr.graph import (
    Alignment,
    AmrGraph,
    Concept,
    GraphError,
    PenmanError,
    dfs_concept_order,
    is_isomorphic,
    is_symbol,
    normalize_relation_direction,
    parse_penman,
    serialize_penman,
    split_sense,
)
from latamr.oracles import random_graph

MUST_NOT_GO = "(o / obligate-01 :ARG2 (g / go-02 :ARG0 (b / boy)) :polarity -)"
MUST_NOT_GO_REENTRANT = "(o / obligate-01 :ARG2 (g / go-02 :ARG0 (b / boy)) :ARG1 b :polarity -)"


def labels(g, order=None):
    return [g.concepts[i].label for i in (order if order is not None else range(len(g)))]


def test_single_node():
    g = parse_penman("(b / boy)")
    assert labels(g) == ["boy"] and g.edges == {} and g.root == 0
    assert serialize_penman(g) == "(v1 / boy)"


def test_must_not_go_graph():
    g = parse_penman(MUST_NOT_GO)
    assert len(g) == 4
    assert g.concepts[g.root].full_label == "obligate-01"
    assert labels(g, dfs_concept_order(g)) == ["obligate", "go", "boy", "-"]
    assert g.concepts[3].category == "polarity"


def test_reentrancy_gives_two_paths():
    g = parse_penman(MUST_NOT_GO_REENTRANT)
    assert len(g) == 4
    boy = labels(g).index("boy")
    incoming = [a for (a, b) in g.edges if b == boy]
    assert len(incoming) == 2
    assert is_isomorphic(parse_penman(serialize_penman(g)), g)


def test_round_trip_preserves_senses_wiki_and_inverse_roles():
    text = '(f / follow-02 :ARG0 (p / person :wiki - :name (n / name :op1 "Tom")) :ARG1 (t / thing :ARG1-of (o / opine-01)))'
    g = parse_penman(text)
    opine, thing = labels(g).index("opine"), labels(g).index("thing")
    assert g.edges[(opine, thing)] == "ARG1"
    assert g.concepts[labels(g).index("person")].wiki == "-"
    again = parse_penman(serialize_penman(g))
    assert is_isomorphic(again, g)
    assert ":ARG1-of" in serialize_penman(g)


@pytest.mark.parametrize(
    "text",
    [
        "(a / x :ARG0 a)",
        "(a / x :ARG0 (b / y)",
        "(a / x) (b / y)",
        "(a / x :ARG0 (a / y))",
        "(a / x ARG0 (b / y))",
        "",
        "(a / x :ARG0)",
    ],
)
def test_parse_errors(text):
    with pytest.raises(PenmanError):
        parse_penman(text)


def test_parse_error_reports_position():
    with pytest.raises(PenmanError) as info:
        parse_penman("(a / x :ARG0 (b / y)")
    assert "missing ')'" in str(info.value)


def test_serialize_disconnected_fails():
    g = AmrGraph((Concept("a"), Concept("b")), {}, 0)
    with pytest.raises(GraphError):
        serialize_penman(g)


def test_graph_invariants():
    with pytest.raises(GraphError):
        AmrGraph((Concept("a"),), {(0, 0): "ARG0"}, 0)
    with pytest.raises(GraphError):
        Concept("")
    with pytest.raises(GraphError):
        Concept("go", sense="-2")
    with pytest.raises(GraphError):
        Alignment((1, 1))
    with pytest.raises(GraphError):
        Alignment((0, 3)).check(3)


def test_dfs_chain_and_single():
    g = parse_penman("(a / aa :ARG1 (b / bb :ARG1 (c / cc)))")
    assert labels(g, dfs_concept_order(g)) == ["aa", "bb", "cc"]
    assert dfs_concept_order(parse_penman("(b / boy)")) == [0]


def test_dfs_child_order_is_lexicographic():
    g = parse_penman("(a / root :mod (m / zz) :ARG1 (y / yy) :ARG0 (x / xx))")
    assert labels(g, dfs_concept_order(g)) == ["root", "xx", "yy", "zz"]


def test_dfs_unreachable_is_an_error():
    g = AmrGraph((Concept("a"), Concept("b")), {}, 0)
    with pytest.raises(GraphError):
        dfs_concept_order(g)


def test_normalize_direction():
    g = AmrGraph((Concept("x"), Concept("y")), {(0, 1): "ARG0-of"}, 0)
    n = normalize_relation_direction(g)
    assert n.edges == {(1, 0): "ARG0"}
    assert normalize_relation_direction(n) == n
    canonical = AmrGraph((Concept("x"), Concept("y")), {(0, 1): "ARG0"}, 0)
    assert normalize_relation_direction(canonical) == canonical
    kept = AmrGraph((Concept("x"), Concept("y")), {(0, 1): "consist-of"}, 0)
    assert normalize_relation_direction(kept) == kept


def test_isomorphism_cases():
    g = parse_penman(MUST_NOT_GO)
    assert is_isomorphic(g, g)
    renamed = parse_penman("(q / obligate-01 :ARG2 (r / go-02 :ARG0 (s / boy)) :polarity -)")
    assert is_isomorphic(g, renamed)
    relabeled = parse_penman("(o / obligate-01 :ARG1 (g / go-02 :ARG0 (b / boy)) :polarity -)")
    assert not is_isomorphic(g, relabeled)


def test_isomorphism_size_limit():
    g = random_graph(np.random.default_rng(0), max_vars=6)
    with pytest.raises(GraphError):
        is_isomorphic(g, g, max_nodes=1)


def test_split_sense():
    assert split_sense("go-02") == ("go", "-02")
    assert split_sense("boy") == ("boy", None)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_random_graph_round_trip(seed):
    g = random_graph(np.random.default_rng(seed), max_vars=6)
    text = serialize_penman(g)
    back = parse_penman(text)
    assert is_isomorphic(back, g)
    assert serialize_penman(back) == text
    assert sorted(dfs_concept_order(g)) == list(range(len(g)))


def test_unwritable_labels_are_rejected():
    assert is_symbol("go-02") and is_symbol("-") and not is_symbol(":") and not is_symbol("a b")
    with pytest.raises(GraphError):
        serialize_penman(AmrGraph((Concept(":", "frame", "-01"),), {}, 0))
    quoted = AmrGraph((Concept("name"), Concept("a (b)", "string")), {(0, 1): "op1"}, 0)
    assert parse_penman(serialize_penman(quoted)).concepts[1].label == "a (b)"
