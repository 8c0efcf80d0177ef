import math

import pytest
from hypothesis import given, settings, strategies as st

from gridsim.broker import (
    Bid,
    PolicyState,
    ResourceDescription,
    estimate_completion,
    flops_select,
    ncda_select,
    poll_subgrid,
    round_robin_select,
    select,
)
from gridsim.errors import NoCandidateError
from gridsim.model import Job


def desc(node, cap, share=1.0, running=0):
    return ResourceDescription(node, cap, share, running, 1e12, 0.0)


def bid(node, cap, bw, rtt=0.0, share=1.0, running=0):
    return Bid(desc(node, cap, share, running), bw, rtt)


HYBRID = Job(0, "hybrid", 10**9, 10**9, 0.0, 0)
COMPUTE = Job(1, "compute", 10**9, 0, 0.0, 0)
A = bid(1, 1e8, 8e6)
B = bid(2, 1e7, 8e7)


def test_estimate_arithmetic():
    assert estimate_completion(HYBRID, A) == pytest.approx(1010.0)
    assert estimate_completion(HYBRID, B) == pytest.approx(200.0)
    assert estimate_completion(COMPUTE, A) == pytest.approx(10.0)


def test_ncda_and_flops_disagree_on_hybrid():
    assert ncda_select(HYBRID, [A, B]) == 2
    assert flops_select(HYBRID, [A, B]) == 1


def test_single_bid_and_ties():
    assert ncda_select(HYBRID, [B]) == 2
    assert flops_select(HYBRID, [B]) == 2
    same = [bid(n, 1e7, 8e7, 0.01) for n in (9, 3, 5)]
    assert ncda_select(HYBRID, same) == 3
    assert flops_select(HYBRID, same) == 3


def test_flops_ignores_bandwidth_and_honours_share():
    assert flops_select(HYBRID, [bid(1, 1e8, 8e6), bid(2, 1e7, 1e12)]) == 1
    assert flops_select(COMPUTE, [bid(4, 1e7, 1e6, share=0.5), bid(7, 1e7, 1e6, share=1.0)]) == 7


def test_empty_bids_raise():
    for fn in (lambda b: ncda_select(HYBRID, b), lambda b: flops_select(HYBRID, b),
               lambda b: round_robin_select(PolicyState(), b)):
        with pytest.raises(NoCandidateError):
            fn([])


def test_round_robin_cycles():
    state = PolicyState()
    bids = [bid(n, 1e7, 1e6) for n in (2, 0, 1)]
    assert [round_robin_select(state, bids) for _ in range(4)] == [0, 1, 2, 0]
    one = PolicyState()
    assert {round_robin_select(one, [B]) for _ in range(5)} == {2}
    assert one.rr_cursor == 0


def test_round_robin_cursor_persists():
    state = PolicyState()
    bids = [bid(n, 1e7, 1e6) for n in range(10)]
    counts = {}
    for _ in range(1000):
        n = select("rr", COMPUTE, bids, state)
        counts[n] = counts.get(n, 0) + 1
    assert counts == {n: 100 for n in range(10)}


bid_strategy = st.builds(
    bid,
    st.integers(0, 50),
    st.floats(1e4, 1e8),
    st.floats(5.6e4, 8e7),
    st.floats(0.0, 0.1),
    st.sampled_from([0.25, 0.5, 1.0]),
    st.integers(0, 5),
)


def unique_bids(min_size=1):
    return st.lists(bid_strategy, min_size=min_size, max_size=10, unique_by=lambda b: b.node_id)


jobs = st.sampled_from([HYBRID, COMPUTE, Job(2, "network", 0, 10**9, 0.0, 0)])


@settings(max_examples=100)
@given(jobs, unique_bids())
def test_ncda_matches_exhaustive_argmin(job, bids):
    best = None
    for b in bids:
        key = (estimate_completion(job, b), b.node_id)
        if best is None or key < best:
            best = key
    assert ncda_select(job, bids) == best[1]


@settings(max_examples=100)
@given(unique_bids(), st.floats(1e-3, 1e3))
def test_flops_scale_invariant(bids, factor):
    scaled = [Bid(ResourceDescription(b.node_id, b.description.capability * factor, b.description.owner_share,
                                      b.description.running_jobs, 1e12, 0.0), b.measured_bandwidth,
                  b.measured_rtt) for b in bids]
    assert flops_select(COMPUTE, scaled) == flops_select(COMPUTE, bids)


@settings(max_examples=100)
@given(unique_bids(), st.floats(5.6e4, 8e7), st.floats(0, 0.1))
def test_ncda_equals_flops_when_network_is_uniform(bids, bw, rtt):
    flat = [Bid(b.description, bw, rtt) for b in bids]
    assert ncda_select(COMPUTE, flat) == flops_select(COMPUTE, flat)


def _measure(a, b):
    return 8e7, 0.002


def test_poll_counts_messages():
    out = poll_subgrid(0, range(10), lambda n: desc(n, 1e7), _measure)
    assert len(out.bids) == 10 and out.message_count == 20
    self_bid = next(b for b in out.bids if b.node_id == 0)
    assert math.isinf(self_bid.measured_bandwidth) and self_bid.measured_rtt == 0


def test_poll_single_member_and_empty():
    assert len(poll_subgrid(4, [4], lambda n: desc(n, 1e7), _measure).bids) == 1
    assert poll_subgrid(4, [], lambda n: desc(n, 1e7), _measure).bids == []


def test_poll_with_failed_members():
    dead = {1, 3}
    out = poll_subgrid(0, range(5), lambda n: None if n in dead else desc(n, 1e7), _measure)
    assert len(out.bids) == 3
    assert out.unanswered == [1, 3]


@pytest.mark.parametrize("n", [1, 2, 17, 250, 1000])
def test_poll_linear_in_members(n):
    assert poll_subgrid(0, range(n), lambda m: desc(m, 1e7), _measure).message_count == 2 * n
