from hypothesis import given, settings, strategies as st

from gridsim.model import NodeSpec
from gridsim.resilience.election import COORDINATOR, ELECTION, OK, elect_regionpeer, elect_superpeer


def node(i, avail):
    return NodeSpec(i, 1e6, 1e10, avail)


def test_most_available_wins():
    res = elect_superpeer([node(1, 0.9), node(2, 0.5), node(3, 0.2)])
    assert res.leader == 1
    coordinators = [m for m in res.messages if m.kind == COORDINATOR]
    assert {m.dst for m in coordinators} == {2, 3} and {m.src for m in coordinators} == {1}


def test_single_member_elects_itself_silently():
    res = elect_superpeer([node(7, 0.3)])
    assert res.leader == 7 and res.messages == []


def test_tie_goes_to_higher_id():
    assert elect_superpeer([node(4, 0.7), node(9, 0.7)]).leader == 9


def test_empty_set_dissolves():
    assert elect_superpeer([]).dissolved


def test_region_peer_election():
    assert elect_regionpeer([node(3, 0.6), node(8, 0.95), node(5, 0.95)]).leader == 8
    assert elect_regionpeer([node(3, 0.6)]).leader == 3


@settings(max_examples=100)
@given(st.lists(st.tuples(st.integers(0, 500), st.floats(0, 1)), min_size=1, max_size=30,
                unique_by=lambda t: t[0]))
def test_unique_leader_and_message_bound(members):
    nodes = [node(i, a) for i, a in members]
    res = elect_superpeer(nodes)
    best = max(nodes, key=lambda n: (n.availability, n.node_id))
    assert res.leader == best.node_id
    m = len(nodes)
    assert len(res.messages) == m * (m - 1) + (m - 1)
    assert sum(msg.kind == ELECTION for msg in res.messages) == sum(msg.kind == OK for msg in res.messages)
    assert {msg.src for msg in res.messages if msg.kind == COORDINATOR} <= {res.leader}
