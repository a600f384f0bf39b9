import pytest

from whrtperf.constraints import parse_constraint
from whrtperf.graph import (
    GraphError,
    GraphNotDeterministic,
    InadmissibleLabel,
    NodeTracker,
    UnliftableConstraint,
    build_graph,
    build_lifted_graph,
    dump_graph,
    export_dot,
    find_run,
    generated_words,
    generates,
    is_deterministic,
    language_included,
    minimize,
    parse_graph,
    unlift,
    validate_structure,
)

from oracles import oracle_words


def test_lifted_graph_counts():
    g = build_lifted_graph(parse_constraint("anyhit(2,4)"))
    assert (g.n_nodes, g.n_edges) == (3, 6)


def test_loss_graph_counts():
    g = build_graph(parse_constraint("anyhit(2,4)"))
    assert (g.n_nodes, g.n_edges) == (7, 10)


def test_large_graph_counts():
    c = parse_constraint("anyhit(4,10)")
    lg = build_lifted_graph(c)
    assert (lg.n_nodes, lg.n_edges) == (84, 210)
    g = build_graph(c)
    assert (g.n_nodes, g.n_edges) == (336, 462)


def test_unlift_edge_arithmetic():
    # each block edge labeled a expands into a zero-chain plus one 1-edge
    c = parse_constraint("anyhit(2,4)")
    lg = build_lifted_graph(c)
    g = unlift(lg)
    assert g.n_edges == sum(l + 1 for _, _, l in lg.edges)
    assert g.n_nodes == lg.n_nodes + sum(l for _, _, l in lg.edges)
    assert set(g.alphabet) == {0, 1}


def test_lifted_graph_is_deterministic():
    for text in ("anyhit(2,3)", "rowhit(2,4)", "anymiss(1,3)", "rowmiss(2,4)"):
        g = build_lifted_graph(parse_constraint(text))
        assert is_deterministic(g)
        validate_structure(g)


def test_loss_graph_structure_valid():
    g = build_graph(parse_constraint("anyhit(2,4)"))
    validate_structure(g)
    assert g.initial_nodes == (0,)


def test_minimize_is_idempotent_on_lifted():
    g = build_lifted_graph(parse_constraint("anyhit(2,4)"))
    m = minimize(g)
    assert (m.n_nodes, m.n_edges) == (g.n_nodes, g.n_edges)


def test_minimize_requires_determinism():
    g = build_graph(parse_constraint("anyhit(2,4)"))
    assert not is_deterministic(g)
    with pytest.raises(GraphNotDeterministic):
        minimize(g)


@pytest.mark.parametrize("text", ["anyhit(2,3)", "rowhit(2,3)", "anymiss(1,4)", "rowmiss(1,3)"])
def test_generated_words_match_oracle(text):
    c = parse_constraint(text)
    g = build_graph(c)
    for length in (1, c.s, 2 * c.s):
        assert generated_words(g, length) == oracle_words(c.kind.value, c.r, c.s, length)


def test_generates():
    g = build_graph(parse_constraint("anyhit(2,3)"))
    assert generates(g, (1, 1, 0, 1, 1, 0))
    assert not generates(g, (1, 0, 0, 1))
    with pytest.raises(GraphError):
        generates(g, (2,))


def test_find_run_spells_word():
    g = build_graph(parse_constraint("anyhit(2,3)"))
    word = (1, 0, 1, 1, 0, 1)
    run = find_run(g, word)
    assert run is not None and len(run) == len(word) + 1
    for (i, j), l in zip(zip(run, run[1:]), word):
        assert (i, j, l) in g.edges
    assert find_run(g, (1, 0, 0)) is None


def test_node_tracker_on_lifted_graph():
    c = parse_constraint("anyhit(2,3)")
    g = build_lifted_graph(c)
    t = NodeTracker(g, g.initial_nodes[0])
    t = t.step(1).step(0).step(1)  # blocks: 01 1 01
    with pytest.raises(InadmissibleLabel):
        t.step(2)  # two losses in a row would violate the constraint


def test_node_tracker_rejects_ambiguity():
    g = build_graph(parse_constraint("anyhit(2,4)"))
    ambiguous = next(i for i in range(g.n_nodes)
                     if len(g.successors(i, 0)) > 1)
    with pytest.raises(GraphNotDeterministic):
        NodeTracker(g, ambiguous).step(0)


def test_vacuous_constraint_graphs():
    c = parse_constraint("anymiss(3,3)")
    with pytest.raises(UnliftableConstraint):
        build_lifted_graph(c)
    g = build_graph(c)
    assert (g.n_nodes, g.n_edges) == (1, 2)
    assert generates(g, (0, 0, 0, 0, 1, 0))


def test_language_included():
    c23 = parse_constraint("anyhit(2,3)")
    c13 = parse_constraint("anyhit(1,3)")
    assert language_included(c23, c13)
    assert not language_included(c13, c23)


def test_dump_parse_round_trip():
    g = build_graph(parse_constraint("anyhit(2,4)"))
    h = parse_graph(dump_graph(g))
    assert h.nodes == g.nodes
    assert sorted(h.edges) == sorted(g.edges)
    assert h.alphabet == g.alphabet
    assert h.initial_nodes == g.initial_nodes


def test_parse_graph_rejects_bad_header():
    with pytest.raises(GraphError):
        parse_graph("not-a-graph\n")


def test_export_dot():
    g = build_lifted_graph(parse_constraint("anyhit(2,4)"))
    dot = export_dot(g)
    assert dot.startswith("digraph")
    assert dot.count("->") == g.n_edges
