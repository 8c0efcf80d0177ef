
import pytest
from hypothesis import given, settings, strategies as st

from gridsim.errors import InvalidScheduleError, NoRouteError
from gridsim.model import NodeSpec, PlatformSpec, generate_platform, generate_workload
from gridsim.simkernel import (
    COMPUTE,
    NODE_FAIL,
    TIMER,
    FailureEntry,
    FailureSchedule,
    Kernel,
    Router,
    compute_time,
    dump_trace,
    load_trace,
    trace_lines,
    transfer_time,
)
from gridsim.simulation import GridSimulation
from conftest import make_topology


def _line(lat=0.0, bw=8e7):
    return make_topology([(0, 1e8, 0.5), (1, 1e8, 0.6), (2, 1e8, 0.7)],
                         [(0, 1, bw, lat), (1, 2, bw, lat)])


def test_transfer_time_examples():
    assert transfer_time(1e9, [0, 1], _line(0.0, 8e7)) == pytest.approx(100.0)
    assert transfer_time(0, [0, 1, 2], _line(0.01)) == pytest.approx(0.02)
    assert transfer_time(7000, [0, 1], _line(0.0, 5.6e4)) == pytest.approx(1.0)


def test_transfer_uses_bottleneck():
    topo = make_topology([(0, 1, 0.5), (1, 1, 0.5), (2, 1, 0.5)], [(0, 1, 8e7, 0.001), (1, 2, 8e5, 0.002)])
    assert transfer_time(1e6, [0, 1, 2], topo) == pytest.approx(0.003 + 8e6 / 8e5)


def test_transfer_without_route():
    topo = make_topology([(0, 1, 0.5), (1, 1, 0.5)], [])
    with pytest.raises(NoRouteError):
        transfer_time(10, [0, 1], topo)
    with pytest.raises(NoRouteError):
        Router(topo).route(0, 1)


def test_compute_time_examples():
    fast = NodeSpec(0, 1e8, 1, 1)
    slow = NodeSpec(1, 1e4, 1, 1)
    assert compute_time(1e9, fast) == pytest.approx(10.0)
    assert compute_time(1e9, slow) == pytest.approx(1e5)
    assert compute_time(0, slow, 5) == 0.0
    assert compute_time(1e9, fast, 1) == pytest.approx(20.0)
    assert compute_time(1e9, NodeSpec(2, 1e8, 1, 1, owner_share=0.5)) == pytest.approx(20.0)


def test_router_prefers_low_latency_then_lexicographic_path():
    # 0-1-3 and 0-2-3 have equal latency; 0-3 direct is slower.
    nodes = [(i, 1, 0.5) for i in range(4)]
    links = [(0, 1, 1e6, 0.001), (1, 3, 1e6, 0.001), (0, 2, 1e6, 0.001), (2, 3, 1e6, 0.001), (0, 3, 1e6, 0.005)]
    router = Router(make_topology(nodes, links))
    assert router.path(0, 3) == [0, 1, 3]
    assert router.latency(0, 3) == pytest.approx(0.002)
    assert router.transfer_time(0, 2, 2) == 0.0


def test_empty_queue_runs_clock_forward():
    k = Kernel()
    assert k.run_until(100) == [] and k.now == 100


def test_equal_time_events_follow_seq():
    k = Kernel()
    order = []
    for i in range(7):
        k.at(5.0, TIMER, {"i": i}, lambda ev: order.append(ev.seq))
    k.run()
    assert order == sorted(order) == list(range(7))


def test_scheduling_into_past_fails():
    k = Kernel()
    k.at(10.0, TIMER)
    k.run()
    with pytest.raises(InvalidScheduleError):
        k.at(5.0, TIMER)


def test_cancelled_events_skip():
    k = Kernel()
    ev = k.at(1.0, TIMER, {"x": 1})
    k.at(2.0, TIMER, {"x": 2})
    Kernel.cancel(ev)
    assert [p for _, _, _, p in k.run()] == [{"x": 2}]


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 1e6, allow_nan=False), min_size=1, max_size=60))
def test_clock_monotone(times):
    k = Kernel()
    for t in times:
        k.at(t, TIMER, {}, lambda ev: k.after(1.0, TIMER) if ev.payload == {} and ev.time < 5 else None)
    trace = k.run()
    stamps = [(t, s) for t, s, _, _ in trace]
    assert [t for t, _ in stamps] == sorted(t for t, _ in stamps)
    assert len({s for _, s in stamps}) == len(stamps)


def test_trace_roundtrip(tmp_path):
    k = Kernel()
    k.at(1.5, TIMER, {"b": 2, "a": [1, 2]})
    trace = k.run()
    path = tmp_path / "t.jsonl"
    dump_trace(trace, path)
    assert load_trace(path) == [{"time": 1.5, "seq": 0, "kind": TIMER, "payload": {"a": [1, 2], "b": 2}}]
    assert list(trace_lines(trace))[0] == path.read_text().strip()


def test_overlapping_failures_rejected():
    sched = FailureSchedule((FailureEntry(3, 10.0, 20.0), FailureEntry(3, 15.0, 30.0)))
    with pytest.raises(InvalidScheduleError):
        sched.validate()
    assert FailureSchedule((FailureEntry(3, 10.0, 20.0), FailureEntry(3, 20.0, None))).violations() == []
    assert FailureSchedule((FailureEntry(1, 5.0, 5.0),)).violations()


def _sim(seed=7, nodes=50, jobs=100, **kw):
    topo = generate_platform(PlatformSpec(node_count=nodes, rng_seed=seed))
    work = generate_workload("hybrid", jobs, topo.node_ids, "all-at-t0", seed)
    return GridSimulation(topo, work, seed=seed, **kw)


def test_full_run_trace_is_deterministic():
    a, b = _sim(), _sim()
    a.run(), b.run()
    assert "\n".join(trace_lines(a.trace)) == "\n".join(trace_lines(b.trace))


def test_completed_records_are_ordered_in_time():
    sim = _sim(nodes=30, jobs=60)
    recs = sim.run()
    assert all(r.completed for r in recs)
    for r in recs:
        assert r.end_time >= r.start_time >= r.submit_time
        assert r.bytes_moved in (0, 10**9)


def test_no_compute_completion_on_a_down_node():
    topo = generate_platform(PlatformSpec(node_count=30, rng_seed=2))
    work = generate_workload("compute", 200, topo.node_ids, "all-at-t0", 2)
    fails = FailureSchedule(tuple(FailureEntry(n, 5.0 + n, 60.0 + n) for n in range(0, 30, 3)))
    sim = GridSimulation(topo, work, "flops", seed=2, failures=fails)
    sim.run()
    for t, _, kind, payload in sim.trace:
        if kind == COMPUTE:
            for lo, hi in fails.down_intervals(payload["node"]):
                assert not lo <= t < hi


def test_superpeer_failure_triggers_election_after_detection():
    topo = make_topology([(i, 1e8, 0.5 + 0.1 * i) for i in range(5)],
                         [(i, j, 8e7, 0.001) for i in range(5) for j in range(i + 1, 5)])
    sp = topo.subgrids[0].super_peer
    assert sp == 4
    sim = GridSimulation(topo, generate_workload("compute", 3, topo.node_ids), "ncda",
                         failures=FailureSchedule((FailureEntry(sp, 50.0),)))
    sim.run()
    detect = sim.settings.detection_time(50.0)
    election_msgs = [t for t, _, kind, p in sim.trace if kind == "message-delivery" and p.get("msg") == "election"]
    assert election_msgs and min(election_msgs) > detect
    assert sim.overlay.super_peer[0] == 3


def test_idle_node_failure_only_touches_membership():
    topo = make_topology([(i, 1e8, 0.5 + 0.1 * i) for i in range(4)],
                         [(i, j, 8e7, 0.001) for i in range(4) for j in range(i + 1, 4)])
    sim = GridSimulation(topo, generate_workload("compute", 1, [3]), "ncda",
                         failures=FailureSchedule((FailureEntry(0, 100.0, 150.0),)))
    sim.run()
    late = [(kind, p.get("msg") or p.get("timer")) for t, _, kind, p in sim.trace if t >= 100.0]
    assert late[0] == (NODE_FAIL, None)
    kinds = {k for k, _ in late}
    assert "compute-complete" not in kinds and "checkpoint-due" not in kinds
    msgs = {m for k, m in late if k == "message-delivery"}
    assert msgs <= {"discover", "discover-reply", "register", "power", "mirror", "share"}
    assert "register" in msgs
    assert 0 not in sim.overlay.registries[0].stale
