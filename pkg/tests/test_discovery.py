import random

import pytest
from hypothesis import given, settings, strategies as st

from gridsim.broker import ResourceDescription
from gridsim.discovery import (
    ESCALATE,
    TIER_INTER,
    TIER_ORDER,
    TIER_REGION,
    TIER_SUBGRID,
    CumulativePower,
    Overlay,
    Registry,
    SuperPeerUnavailable,
    aggregate_power,
)
from gridsim.model import GridTopology, LinkSpec, NodeSpec, QueryConstraint, Region, SubGrid


def build(groups, regions, caps):
    """``groups``: list of member tuples (sub-grid id = index); ``regions``:
    list of sub-grid id tuples; ``caps``: node -> capability."""
    nodes = tuple(NodeSpec(n, caps[n], 1e12, 0.5 + n / 1000) for n in sorted(caps))
    ids = sorted(caps)
    links = tuple(LinkSpec((a, b), 8e7, 0.001) for a, b in zip(ids, ids[1:]))
    sgs = tuple(SubGrid(i, tuple(m), max(m)) for i, m in enumerate(groups))
    regs = tuple(Region(i, tuple(s), max(sgs[x].super_peer for x in s)) for i, s in enumerate(regions))
    topo = GridTopology(nodes, links, sgs, regs)
    ov = Overlay(topo)
    ov.bootstrap(lambda n: describe(topo, n))
    ov.drain()
    return ov


def describe(topo, n, running=0):
    node = topo.node(n)
    return ResourceDescription(n, node.capability, node.owner_share, running, node.storage, 0.0)


def tiers(ov):
    return [m.tier for m in ov.messages]


def test_registry_upsert_and_version():
    reg = Registry(0)
    for n in range(3):
        reg.upsert(ResourceDescription(n, 1e7, 1, 0, 1e10, 0))
    v = reg.version
    reg.upsert(ResourceDescription(3, 1e7, 1, 0, 1e10, 0))
    assert len(reg.entries) == 4 and reg.version == v + 1
    reg.upsert(ResourceDescription(3, 2e7, 1, 0, 1e10, 1))
    assert len(reg.entries) == 4 and reg.entries[3].capability == 2e7
    reg.mark_stale(3)
    assert [d.node_id for d in reg.live()] == [0, 1, 2]
    assert Registry.deserialize(reg.serialize()) == reg


def test_aggregate_power():
    reg = Registry(0)
    assert aggregate_power(reg) == CumulativePower(0, 0.0, 0.0, 0)
    reg.upsert(ResourceDescription(0, 1e7, 1.0, 0, 5.0, 0))
    assert aggregate_power(reg) == CumulativePower(0, 1e7, 5.0, 1)
    reg.upsert(ResourceDescription(1, 2e7, 1.0, 0, 5.0, 0))
    assert aggregate_power(reg).peak_flops == pytest.approx(3e7)


def test_register_with_fresh_node_and_dead_superpeer():
    ov = build([(0, 1, 2, 3)], [(0,)], {n: 1e7 for n in range(4)})
    reg = ov.registries[0]
    ov.registries[0] = Registry(3, {k: v for k, v in reg.entries.items() if k != 0})
    size, ver = len(ov.registries[0].entries), ov.registries[0].version
    ov.register_node(3, describe(ov.topology, 0))
    assert len(ov.registries[0].entries) == size + 1 and ov.registries[0].version == ver + 1
    ov.alive = lambda n: n != 3
    with pytest.raises(SuperPeerUnavailable):
        ov.register_node(3, describe(ov.topology, 1))


def test_local_query_stays_local():
    ov = build([(0, 1, 2), (3, 4, 5)], [(0, 1)], {n: 1e6 for n in range(6)})
    res = ov.query_subgrid(2, ov.new_query(QueryConstraint(1e4, 0, 1), 0))
    assert res.found and res.subgrid_id == 0 and set(res.nodes) == {0, 1, 2}
    assert set(tiers(ov)) == {TIER_SUBGRID}


def test_miss_goes_to_region_peer_once_then_sibling():
    caps = {0: 1e5, 1: 1e5, 2: 1e5, 3: 1e5, 4: 5e7, 5: 1e5}
    ov = build([(0, 1, 2), (3, 4, 5)], [(0, 1)], caps)
    q = ov.new_query(QueryConstraint(1e7, 0, 1), 0)
    res = ov.query_subgrid(2, q)
    assert res.found and res.subgrid_id == 1 and res.nodes == (4,)
    forwards = [m for m in ov.messages if m.kind == "forward"]
    # the origin sub-grid's super-peer (2) is not the region peer (5)
    assert [(m.src, m.dst, m.tier) for m in forwards] == [(2, 5, TIER_REGION)]


def test_region_dispatch_prefers_largest_peak():
    caps = {n: 1e6 for n in range(9)}
    caps.update({4: 3e7, 5: 2e7, 7: 4e7, 8: 5e7})
    ov = build([(0, 1, 2), (3, 4, 5), (6, 7, 8)], [(0, 1, 2)], caps)
    # peaks: sg1 = 5.1e7, sg2 = 9.1e7
    q = ov.new_query(QueryConstraint(1e7, 0, 1), 0)
    res = ov.region_dispatch(8, q, exclude=(0,))
    assert res.subgrid_id == 2
    assert ov.region_dispatch(8, ov.new_query(QueryConstraint(4.5e7, 0, 1), 0), exclude=(0,)).subgrid_id == 2
    assert ov.region_dispatch(8, ov.new_query(QueryConstraint(1e8, 0, 1), 0), exclude=(0,)) == ESCALATE


def _three_regions(cap_region2=1e6):
    caps = {n: 1e6 for n in range(6)}
    caps[5] = cap_region2
    return build([(0, 1), (2, 3), (4, 5)], [(0,), (1,), (2,)], caps)


def test_inter_region_order_and_count():
    ov = _three_regions(cap_region2=5e7)
    q = ov.new_query(QueryConstraint(1e7, 0, 1), 0)
    res = ov.query_subgrid(1, q)
    assert res.found and res.subgrid_id == 2
    inter = [m for m in ov.messages if m.tier == TIER_INTER and m.kind == "forward"]
    assert [(m.dst) for m in inter] == [3, 5]
    assert res.regions_contacted == (0, 1, 2)


def test_unsatisfiable_contacts_every_region_once():
    ov = _three_regions()
    res = ov.query_subgrid(1, ov.new_query(QueryConstraint(1e9, 0, 1), 0))
    assert not res.found
    assert sorted(res.regions_contacted) == [0, 1, 2]
    inter = [m.dst for m in ov.messages if m.tier == TIER_INTER and m.kind == "forward"]
    assert sorted(inter) == [3, 5]


def test_single_region_not_found_has_no_inter_traffic():
    ov = build([(0, 1), (2, 3)], [(0, 1)], {n: 1e6 for n in range(4)})
    res = ov.query_subgrid(1, ov.new_query(QueryConstraint(1e9, 0, 1), 0))
    assert not res.found and TIER_INTER not in tiers(ov)


def test_duplicate_delivery_is_ignored():
    ov = _three_regions()
    q = ov.new_query(QueryConstraint(1e9, 0, 1), 0)
    ov.query_subgrid(1, q)
    before = len(ov.messages)
    assert ov.redeliver(1, q) is None
    assert len(ov.messages) == before


def _random_overlay(rng):
    n_regions = rng.randint(1, 4)
    groups, regions, caps, node = [], [], {}, 0
    for _ in range(n_regions):
        sids = []
        for _ in range(rng.randint(1, 3)):
            members = tuple(range(node, node + rng.randint(1, 4)))
            node += len(members)
            for m in members:
                caps[m] = 10 ** rng.uniform(4, 8)
            sids.append(len(groups))
            groups.append(members)
        regions.append(tuple(sids))
    return build(groups, regions, caps)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**9))
def test_query_invariants(seed):
    rng = random.Random(seed)
    ov = _random_overlay(rng)
    sid = rng.choice(sorted(ov.members))
    origin = rng.choice(ov.members[sid])
    c = QueryConstraint(10 ** rng.uniform(4, 9), 0, rng.randint(1, 2))
    local_ok = len(ov.local_matches(sid, c)) >= c.count
    q = ov.new_query(c, origin)
    res = ov.query_subgrid(ov.super_peer[sid], q)
    ts = tiers(ov)
    if local_ok:
        assert res.found and set(ts) <= {TIER_SUBGRID}
    order = [TIER_ORDER[t] for t, _ in q.hop_record]
    assert order == sorted(order)
    assert all(b - a <= 1 for a, b in zip(order, order[1:]))
    assert len(set(q.hop_record)) == len(q.hop_record)
    receivers = [(m.query_id, m.dst) for m in ov.messages if m.kind in ("query", "forward", "dispatch")]
    assert len(set(receivers)) == len(receivers)
    if not res.found:
        assert sorted(res.regions_contacted) == sorted(ov.region_peer)
    for region, cache in ov.power.items():
        for s, p in cache.items():
            assert p == aggregate_power(ov.registries[s], s)
