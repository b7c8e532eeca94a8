import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dronemac.errors import UnknownNode
from dronemac.model import (
    ALLOW,
    CAMERA,
    DENY,
    NETWORK,
    CommunicationGraph,
    Edge,
    NodeKind,
    TopicKey,
    UndeclaredNode,
    UndeclaredTrusted,
    app_name,
    default_kind,
    intersect_graphs,
    permits,
    reachable,
    validate_graph,
)

from oracles import brute_permits, brute_reachable, random_graph, random_query


def _graph(spec):
    nodes, edges, trusted, wl = spec
    return CommunicationGraph.build(
        {n: NodeKind(k) for n, k in nodes.items()},
        [(s, d, TopicKey(*k) if k else None) for s, d, k in edges],
        trusted,
        wl,
    )


def test_topic_key_matching():
    assert TopicKey("cam").matches(TopicKey("cam", "Image"))
    assert TopicKey("cam", "Image").matches(TopicKey("cam"))
    assert TopicKey("cam", "Image").matches(TopicKey("cam", "Image"))
    assert not TopicKey("cam", "Image").matches(TopicKey("cam", "Status"))
    assert not TopicKey("cam").matches(TopicKey("gps"))
    assert TopicKey.parse("cam::Image") == TopicKey("cam", "Image")
    assert TopicKey.parse("cam") == TopicKey("cam")
    assert str(TopicKey("cam", "Image")) == "cam::Image"


def test_default_kinds_and_instances():
    assert default_kind(CAMERA) is NodeKind.SENSOR
    assert default_kind(NETWORK) is NodeKind.SINK
    assert default_kind("Blur") is NodeKind.APP
    assert app_name("BlurFilter@2") == "BlurFilter"
    g = CommunicationGraph.build(["BlurFilter@1", "BlurFilter@2", "BlurFilterX", CAMERA])
    assert g.instances_of("BlurFilter") == ["BlurFilter@1", "BlurFilter@2"]


def test_unannotated_edge_permits_every_key():
    g = CommunicationGraph.build(["A", "B"], [("A", "B")])
    assert permits(g, "A", "B") is ALLOW
    assert permits(g, "A", "B", TopicKey("t", "x")) is ALLOW
    assert permits(g, "B", "A") is DENY


def test_annotated_edge_needs_a_key():
    g = CommunicationGraph.build(["A", "B"], [("A", "B", "t::x")])
    assert permits(g, "A", "B", TopicKey("t", "x")) is ALLOW
    assert permits(g, "A", "B", TopicKey("t")) is ALLOW
    assert permits(g, "A", "B", TopicKey("t", "y")) is DENY
    assert permits(g, "A", "B") is DENY


def test_reachable_self_and_unknown():
    g = CommunicationGraph.build(["A"])
    assert reachable(g, "A", "A")
    with pytest.raises(UnknownNode):
        reachable(g, "A", "Z")


def test_reachable_avoiding_interior_only():
    g = CommunicationGraph.build(["A", "T", "B"], [("A", "T"), ("T", "B")])
    assert reachable(g, "A", "B")
    assert not reachable(g, "A", "B", avoiding={"T"})
    # endpoints are never "avoided"
    assert reachable(g, "A", "T", avoiding={"T"})


def test_validate_graph_reports_violations():
    g = CommunicationGraph(
        {"A": NodeKind.APP}, {Edge("A", "B")}, frozenset({"C"}), frozenset()
    )
    v = validate_graph(g)
    assert UndeclaredNode("B", Edge("A", "B")) in v
    assert UndeclaredTrusted("C") in v


@pytest.mark.parametrize("seed", range(40))
def test_permits_and_reachable_match_oracle(seed):
    rng = random.Random(seed)
    spec = random_graph(rng)
    g = _graph(spec)
    names = list(spec[0])
    for _ in range(25):
        s, d, k = random_query(rng, names)
        key = TopicKey(*k) if k else None
        expect = any(
            es == s and ed == d and (ek is None or (k is not None and ek[0] == k[0] and (ek[1] is None or k[1] is None or ek[1] == k[1])))
            for es, ed, ek in spec[1]
        )
        assert (permits(g, s, d, key) is ALLOW) == expect
        avoid = set(rng.sample(names, rng.randint(0, len(names))))
        assert reachable(g, s, d, avoid) == brute_reachable(spec[0], spec[1], s, d, avoid)


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32), st.integers(2, 4))
def test_intersection_permits_exactly_common_flows(seed, count):
    rng = random.Random(seed)
    specs = [random_graph(rng, max_nodes=6) for _ in range(count)]
    graphs = [_graph(s) for s in specs]
    both = intersect_graphs(graphs)
    common = set.intersection(*(set(s[0]) for s in specs))
    for _ in range(30):
        s, d, k = random_query(rng, sorted(common) or ["none"])
        if s not in common or d not in common or s == d:
            continue
        key = TopicKey(*k) if k else None
        expect = all(brute_permits(sp[0], sp[1], sp[3], s, d, k) for sp in specs)
        assert (permits(both, s, d, key) is ALLOW) == expect


def test_intersection_of_one_is_identity():
    g = CommunicationGraph.build(["A", "B"], [("A", "B")])
    assert intersect_graphs([g]) == g
    with pytest.raises(ValueError):
        intersect_graphs([])
